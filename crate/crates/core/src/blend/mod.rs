//! Harmonic depth blending and the simpler baselines it is compared against.
//!
//! Estimated depth over the unknown region is lifted to 3-d, connected into a
//! k-NN graph together with the trusted boundary pixels, and deformed by the
//! minimum Dirichlet-energy displacement field that moves every boundary
//! point exactly onto its trusted position.

mod knn;
mod solver;

pub use knn::{build_knn_graph, KdTree, KnnGraph};
pub use solver::{
    dirichlet_energy, harmonic_displacements, laplacian, pcg, CgOutcome, CsrMatrix,
    HarmonicSolution,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{depth_defined, pixel_coord_to_direction, BitMask, DepthMap, Pose, Raster, Vec3};

/// Pixels of `known` with at least one 4-neighbor outside it.
pub fn boundary_mask(known: &BitMask) -> BitMask {
    let ones = known.count_ones();
    if ones == 0 || ones == known.len() {
        log::warn!("boundary of an empty or full mask is empty");
        return BitMask::filled(known.width(), known.height(), false);
    }
    known.inner_boundary4()
}

/// Which depth alignment fills the unknown region.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlendMethod {
    #[default]
    Harmonic,
    Interpolation,
    Naive,
}

impl BlendMethod {
    pub fn name(self) -> &'static str {
        match self {
            BlendMethod::Harmonic => "harmonic",
            BlendMethod::Interpolation => "interpolation",
            BlendMethod::Naive => "naive",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlendParams {
    pub k: usize,
    pub tol: f64,
    /// Defaults to ten times the number of unknowns.
    pub max_iter: Option<usize>,
    pub node_cap: usize,
}

impl Default for BlendParams {
    fn default() -> Self {
        BlendParams {
            k: 8,
            tol: 1e-8,
            max_iter: None,
            node_cap: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BlendDiagnostics {
    pub unknown_pixels: usize,
    pub boundary_pixels: usize,
    pub solved_nodes: usize,
    pub isolated_nodes: usize,
    pub subsampled: bool,
    pub iterations: usize,
    pub residual: f64,
    /// Largest distance between a deformed boundary point and its target.
    pub boundary_mismatch: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlendResult {
    pub depth: DepthMap,
    pub diagnostics: BlendDiagnostics,
}

fn check_inputs(d_r: &DepthMap, d_est: &DepthMap, known: &BitMask) -> Result<()> {
    d_r.ensure_same_dims(d_est)?;
    d_r.ensure_same_dims(known)?;
    for i in 0..known.len() {
        if known.data()[i] && !depth_defined(d_r.data()[i]) {
            return Err(Error::invalid(format!(
                "trusted depth undefined at pixel index {i}"
            )));
        }
    }
    Ok(())
}

fn check_estimate_defined(d_est: &DepthMap, region: &BitMask) -> Result<()> {
    for i in 0..region.len() {
        if region.data()[i] && !depth_defined(d_est.data()[i]) {
            return Err(Error::invalid(format!(
                "estimated depth undefined at pixel index {i}"
            )));
        }
    }
    Ok(())
}

fn lift(depth: f64, i: usize, w: usize, h: usize, pose: &Pose) -> Vec3 {
    let dir = pixel_coord_to_direction((i % w) as f64, (i / w) as f64, w, h);
    pose.transform_point(&(dir * depth))
}

/// Inverse-distance-weighted interpolation (power 2) of `values` located at
/// `sites`, evaluated at the `k` nearest sites of each query.
fn idw_3d(sites: &[Vec3], values: &[Vec3], queries: &[Vec3], k: usize) -> Vec<Vec3> {
    let tree = KdTree::build(sites);
    queries
        .par_iter()
        .map(|q| {
            let nb = tree.nearest(q, k, None);
            if let Some(&(j, d)) = nb.first() {
                if d == 0.0 {
                    return values[j];
                }
            }
            let mut acc = Vec3::zeros();
            let mut wsum = 0.0;
            for (j, d) in nb {
                let w = 1.0 / (d * d);
                acc += values[j] * w;
                wsum += w;
            }
            if wsum > 0.0 {
                acc / wsum
            } else {
                Vec3::zeros()
            }
        })
        .collect()
}

/// Deforms `d_est` over `!known` so that it meets `d_r` along the boundary of
/// `known`; pixels in `known` are copied from `d_r` unchanged.
pub fn harmonic_blend_depth(
    d_r: &DepthMap,
    d_est: &DepthMap,
    known: &BitMask,
    pose: &Pose,
    params: &BlendParams,
) -> Result<BlendResult> {
    check_inputs(d_r, d_est, known)?;
    let (w, h) = d_r.dims();
    let unknown = known.not();
    let boundary = boundary_mask(known);
    check_estimate_defined(d_est, &unknown.or(&boundary))?;
    let mut out = naive_blend(d_r, d_est, known)?;
    let mut diag = BlendDiagnostics {
        unknown_pixels: unknown.count_ones(),
        boundary_pixels: boundary.count_ones(),
        ..Default::default()
    };
    if diag.unknown_pixels == 0 {
        return Ok(BlendResult {
            depth: out,
            diagnostics: diag,
        });
    }
    if diag.boundary_pixels == 0 {
        log::warn!("no trusted boundary; estimated depth used as is");
        diag.isolated_nodes = diag.unknown_pixels;
        return Ok(BlendResult {
            depth: out,
            diagnostics: diag,
        });
    }
    let free_pixels: Vec<usize> = (0..w * h).filter(|&i| unknown.data()[i]).collect();
    let fixed_pixels: Vec<usize> = (0..w * h).filter(|&i| boundary.data()[i]).collect();
    let stride = free_pixels.len().div_ceil(params.node_cap.max(1)).max(1);
    diag.subsampled = stride > 1;
    let solved_free: Vec<usize> = free_pixels.iter().copied().step_by(stride).collect();

    let mut positions: Vec<Vec3> = Vec::with_capacity(solved_free.len() + fixed_pixels.len());
    let mut fixed_flags = Vec::with_capacity(positions.capacity());
    for &i in &solved_free {
        positions.push(lift(d_est.data()[i], i, w, h, pose));
        fixed_flags.push(false);
    }
    let mut targets = Vec::with_capacity(fixed_pixels.len());
    let mut disp = Vec::with_capacity(fixed_pixels.len());
    for &i in &fixed_pixels {
        let p = lift(d_est.data()[i], i, w, h, pose);
        let t = lift(d_r.data()[i], i, w, h, pose);
        positions.push(p);
        fixed_flags.push(true);
        targets.push(t);
        disp.push(t - p);
    }
    let graph = build_knn_graph(&positions, params.k, &fixed_flags)?;
    let sol = harmonic_displacements(&graph, &disp, params.tol, params.max_iter)?;
    diag.solved_nodes = sol.free_count;
    diag.isolated_nodes = sol.isolated_count;
    diag.iterations = sol.iterations;
    diag.residual = sol.residual;
    if sol.isolated_count > 0 {
        log::info!(
            "{} synthesized points have no path to the boundary and stay put",
            sol.isolated_count
        );
    }
    let nf = solved_free.len();
    diag.boundary_mismatch = (0..fixed_pixels.len())
        .map(|k| (positions[nf + k] + sol.displacements[nf + k] - targets[k]).norm())
        .fold(0.0, f64::max);

    let center = pose.translation;
    let mut u_free: Vec<(usize, Vec3)> = solved_free
        .iter()
        .enumerate()
        .map(|(a, &i)| (i, sol.displacements[a]))
        .collect();
    if diag.subsampled {
        let solved_set: std::collections::HashSet<usize> = solved_free.iter().copied().collect();
        let rest: Vec<usize> = free_pixels
            .iter()
            .copied()
            .filter(|i| !solved_set.contains(i))
            .collect();
        let queries: Vec<Vec3> = rest
            .iter()
            .map(|&i| lift(d_est.data()[i], i, w, h, pose))
            .collect();
        let interp = idw_3d(&positions, &sol.displacements, &queries, params.k);
        u_free.extend(rest.into_iter().zip(interp));
    }
    let data = out.data_mut();
    for (i, u) in u_free {
        let p = lift(d_est.data()[i], i, w, h, pose) + u;
        data[i] = (p - center).norm();
    }
    Ok(BlendResult {
        depth: out,
        diagnostics: diag,
    })
}

/// `d_r` on `known`, `d_est` elsewhere.
pub fn naive_blend(d_r: &DepthMap, d_est: &DepthMap, known: &BitMask) -> Result<DepthMap> {
    d_r.ensure_same_dims(d_est)?;
    d_r.ensure_same_dims(known)?;
    let (w, h) = d_r.dims();
    Ok(Raster::from_fn(w, h, |x, y| {
        if *known.get(x, y) {
            *d_r.get(x, y)
        } else {
            *d_est.get(x, y)
        }
    }))
}

/// Adds to `d_est` the boundary offset `d_r - d_est`, spread over the unknown
/// region by inverse-squared pixel-distance weighting (azimuth wraps).
pub fn offset_interpolation_blend(
    d_r: &DepthMap,
    d_est: &DepthMap,
    known: &BitMask,
) -> Result<DepthMap> {
    check_inputs(d_r, d_est, known)?;
    let boundary = boundary_mask(known);
    let (w, h) = d_r.dims();
    let samples: Vec<(f64, f64, f64)> = (0..w * h)
        .filter(|&i| boundary.data()[i])
        .map(|i| {
            (
                (i % w) as f64,
                (i / w) as f64,
                d_r.data()[i] - d_est.data()[i],
            )
        })
        .collect();
    let mut out = naive_blend(d_r, d_est, known)?;
    if samples.is_empty() {
        return Ok(out);
    }
    let wf = w as f64;
    out.data_mut()
        .par_iter_mut()
        .enumerate()
        .for_each(|(i, v)| {
            if known.data()[i] {
                return;
            }
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for &(sx, sy, o) in &samples {
                let mut dx = (x - sx).abs();
                dx = dx.min(wf - dx);
                let dy = y - sy;
                let wt = 1.0 / (dx * dx + dy * dy);
                acc += wt * o;
                wsum += wt;
            }
            *v = d_est.data()[i] + acc / wsum;
        });
    Ok(out)
}
