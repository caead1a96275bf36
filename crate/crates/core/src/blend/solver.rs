use rayon::prelude::*;

use super::knn::KnnGraph;
use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triples; duplicates are summed.
    pub fn from_triplets(n: usize, mut t: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(r, c, _)) = t.iter().find(|e| e.0 >= n || e.1 >= n) {
            return Err(Error::invalid(format!(
                "triplet ({r}, {c}) outside {n}x{n}"
            )));
        }
        t.sort_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(t.len());
        let mut vals: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
                continue;
            }
            cols.push(c);
            vals.push(v);
            row_ptr[r + 1] += 1;
            last = Some((r, c));
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(CsrMatrix {
            n,
            row_ptr,
            cols,
            vals,
        })
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[span.clone()].binary_search(&c) {
            Ok(k) => self.vals[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut()
            .enumerate()
            .with_min_len(2048)
            .for_each(|(r, out)| {
                let mut s = 0.0;
                for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                    s += self.vals[k] * x[self.cols[k]];
                }
                *out = s;
            });
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|r| {
            (self.row_ptr[r]..self.row_ptr[r + 1])
                .all(|k| (self.vals[k] - self.get(self.cols[k], r)).abs() <= tol)
        })
    }
}

/// Unnormalized graph Laplacian `L = D - W` of the whole graph.
pub fn laplacian(graph: &KnnGraph) -> CsrMatrix {
    let n = graph.len();
    let mut t = Vec::new();
    for (i, adj) in graph.adjacency.iter().enumerate() {
        let mut deg = 0.0;
        for &(j, w) in adj {
            t.push((i, j, -w));
            deg += w;
        }
        t.push((i, i, deg));
    }
    CsrMatrix::from_triplets(n, t).expect("indices come from the graph")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    /// Final relative residual `|b - Ax| / |b|`.
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradient for a symmetric positive
/// definite system. `x` holds the initial guess and receives the solution.
pub fn pcg(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let n = a.n;
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgOutcome {
            iterations: 0,
            residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut ax = vec![0.0; n];
    a.mul_vec(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut res = dot(&r, &r).sqrt() / bnorm;
    let mut it = 0;
    while res >= tol {
        if it >= max_iter {
            return Err(Error::NotConverged {
                iterations: it,
                residual: res,
            });
        }
        a.mul_vec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NotConverged {
                iterations: it,
                residual: res,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        it += 1;
        res = dot(&r, &r).sqrt() / bnorm;
    }
    Ok(CgOutcome {
        iterations: it,
        residual: res,
    })
}

impl CsrMatrix {
    fn mul_vec3(&self, x: &[[f64; 3]], y: &mut [[f64; 3]]) {
        y.par_iter_mut()
            .enumerate()
            .with_min_len(2048)
            .for_each(|(r, out)| {
                let mut s = [0.0; 3];
                for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                    let (v, xc) = (self.vals[k], &x[self.cols[k]]);
                    for c in 0..3 {
                        s[c] += v * xc[c];
                    }
                }
                *out = s;
            });
    }
}

fn dot3(a: &[[f64; 3]], b: &[[f64; 3]]) -> [f64; 3] {
    let mut s = [0.0; 3];
    for (x, y) in a.iter().zip(b) {
        for c in 0..3 {
            s[c] += x[c] * y[c];
        }
    }
    s
}

/// Three Jacobi-preconditioned conjugate gradient solves sharing one pass
/// over the matrix per iteration. Each column stops updating once its own
/// residual is below `tol`, so it matches a separate [`pcg`] run.
fn pcg3(
    a: &CsrMatrix,
    b: &[[f64; 3]],
    x: &mut [[f64; 3]],
    tol: f64,
    max_iter: usize,
) -> Result<[CgOutcome; 3]> {
    let n = a.n;
    let bnorm = dot3(b, b).map(f64::sqrt);
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    for c in 0..3 {
        if bnorm[c] == 0.0 {
            x.iter_mut().for_each(|v| v[c] = 0.0);
        }
    }
    let mut ax = vec![[0.0; 3]; n];
    a.mul_vec3(x, &mut ax);
    let mut r: Vec<[f64; 3]> = (0..n)
        .map(|i| std::array::from_fn(|c| b[i][c] - ax[i][c]))
        .collect();
    let mut z: Vec<[f64; 3]> = (0..n).map(|i| r[i].map(|v| v * inv_diag[i])).collect();
    let mut p = z.clone();
    let mut rz = dot3(&r, &z);
    let mut ap = vec![[0.0; 3]; n];
    let rel = |r: &[[f64; 3]]| {
        let rr = dot3(r, r);
        std::array::from_fn::<f64, 3, _>(|c| {
            if bnorm[c] == 0.0 {
                0.0
            } else {
                rr[c].sqrt() / bnorm[c]
            }
        })
    };
    let mut res = rel(&r);
    let mut iters = [0usize; 3];
    let mut active: [bool; 3] = std::array::from_fn(|c| res[c] >= tol);
    let mut it = 0;
    while active.iter().any(|&a| a) {
        if it >= max_iter {
            let worst = (0..3)
                .filter(|&c| active[c])
                .map(|c| res[c])
                .fold(0.0, f64::max);
            return Err(Error::NotConverged {
                iterations: it,
                residual: worst,
            });
        }
        a.mul_vec3(&p, &mut ap);
        let pap = dot3(&p, &ap);
        let mut alpha = [0.0; 3];
        for c in 0..3 {
            if active[c] {
                if !(pap[c] > 0.0) {
                    return Err(Error::NotConverged {
                        iterations: it,
                        residual: res[c],
                    });
                }
                alpha[c] = rz[c] / pap[c];
            }
        }
        for i in 0..n {
            for c in 0..3 {
                x[i][c] += alpha[c] * p[i][c];
                r[i][c] -= alpha[c] * ap[i][c];
                z[i][c] = r[i][c] * inv_diag[i];
            }
        }
        let rz_new = dot3(&r, &z);
        let beta: [f64; 3] =
            std::array::from_fn(|c| if active[c] { rz_new[c] / rz[c] } else { 0.0 });
        for i in 0..n {
            for c in 0..3 {
                if active[c] {
                    p[i][c] = z[i][c] + beta[c] * p[i][c];
                }
            }
        }
        rz = rz_new;
        it += 1;
        let new_res = rel(&r);
        for c in 0..3 {
            if active[c] {
                res[c] = new_res[c];
                iters[c] = it;
                active[c] = res[c] >= tol;
            }
        }
    }
    Ok(std::array::from_fn(|c| CgOutcome {
        iterations: iters[c],
        residual: res[c],
    }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicSolution {
    pub displacements: Vec<Vec3>,
    pub iterations: usize,
    /// Largest relative residual over the three coordinate solves.
    pub residual: f64,
    pub free_count: usize,
    pub isolated_count: usize,
}

/// Minimizes the Dirichlet energy of per-node displacements subject to the
/// given values on fixed nodes (listed in node order). Free nodes without a
/// path to a fixed node get zero displacement.
pub fn harmonic_displacements(
    graph: &KnnGraph,
    boundary_disp: &[Vec3],
    tol: f64,
    max_iter: Option<usize>,
) -> Result<HarmonicSolution> {
    let n = graph.len();
    let fixed_idx: Vec<usize> = (0..n).filter(|&i| graph.fixed[i]).collect();
    if fixed_idx.len() != boundary_disp.len() {
        return Err(Error::invalid(format!(
            "{} boundary displacements for {} fixed nodes",
            boundary_disp.len(),
            fixed_idx.len()
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("solver tolerance must be positive"));
    }
    let mut u = vec![Vec3::zeros(); n];
    for (&i, d) in fixed_idx.iter().zip(boundary_disp) {
        u[i] = *d;
    }
    // free nodes reachable from the boundary get consecutive unknown indices
    let mut slot = vec![usize::MAX; n];
    let mut free = Vec::new();
    for (i, s) in slot.iter_mut().enumerate() {
        if !graph.fixed[i] && !graph.isolated[i] {
            *s = free.len();
            free.push(i);
        }
    }
    let m = free.len();
    if m == 0 {
        return Ok(HarmonicSolution {
            displacements: u,
            iterations: 0,
            residual: 0.0,
            free_count: 0,
            isolated_count: graph.isolated_count(),
        });
    }
    let mut t = Vec::new();
    let mut rhs = vec![[0.0f64; 3]; m];
    for (a, &i) in free.iter().enumerate() {
        let mut deg = 0.0;
        for &(j, w) in &graph.adjacency[i] {
            deg += w;
            if graph.fixed[j] {
                for c in 0..3 {
                    rhs[a][c] += w * u[j][c];
                }
            } else {
                t.push((a, slot[j], -w));
            }
        }
        t.push((a, a, deg));
    }
    let lff = CsrMatrix::from_triplets(m, t)?;
    let max_iter = max_iter.unwrap_or(10 * m).max(1);
    let mut x = vec![[0.0f64; 3]; m];
    let outcomes = pcg3(&lff, &rhs, &mut x, tol, max_iter)?;
    for (a, &i) in free.iter().enumerate() {
        u[i] = Vec3::new(x[a][0], x[a][1], x[a][2]);
    }
    Ok(HarmonicSolution {
        displacements: u,
        iterations: outcomes.iter().map(|o| o.iterations).max().unwrap_or(0),
        residual: outcomes.iter().map(|o| o.residual).fold(0.0, f64::max),
        free_count: m,
        isolated_count: graph.isolated_count(),
    })
}

/// `sum over edges of w_ij |U_i - U_j|^2`.
pub fn dirichlet_energy(graph: &KnnGraph, u: &[Vec3]) -> f64 {
    graph
        .edges()
        .map(|(i, j, w)| w * (u[i] - u[j]).norm_squared())
        .sum()
}
