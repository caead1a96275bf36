use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{median_in_place, Vec3};

/// Static 3-d tree over a point set, used for exact k-nearest-neighbor queries.
pub struct KdTree<'a> {
    points: &'a [Vec3],
    /// Permutation of point indices; each node owns a contiguous range.
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Clone, Copy)]
struct Node {
    start: usize,
    end: usize,
    /// Split axis and value for inner nodes; children at `left`, `left + 1`.
    axis: u8,
    split: f64,
    left: usize,
}

const LEAF_SIZE: usize = 12;
const NO_CHILD: usize = usize::MAX;

#[derive(PartialEq)]
struct Cand(f64, usize);

impl Eq for Cand {}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl<'a> KdTree<'a> {
    pub fn build(points: &'a [Vec3]) -> Self {
        let mut tree = KdTree {
            points,
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.nodes.push(Node {
                start: 0,
                end: points.len(),
                axis: 0,
                split: 0.0,
                left: NO_CHILD,
            });
            let mut stack = vec![0usize];
            while let Some(ni) = stack.pop() {
                let Node { start, end, .. } = tree.nodes[ni];
                if end - start <= LEAF_SIZE {
                    continue;
                }
                let slice = &mut tree.order[start..end];
                let (mut lo, mut hi) =
                    (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
                for &i in slice.iter() {
                    lo = lo.inf(&points[i]);
                    hi = hi.sup(&points[i]);
                }
                let ext = hi - lo;
                let axis = ext.imax();
                if ext[axis] <= 0.0 {
                    continue;
                }
                let mid = slice.len() / 2;
                slice.select_nth_unstable_by(mid, |&a, &b| {
                    points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
                });
                let split = points[slice[mid]][axis];
                let left = tree.nodes.len();
                tree.nodes[ni].axis = axis as u8;
                tree.nodes[ni].split = split;
                tree.nodes[ni].left = left;
                tree.nodes.push(Node {
                    start,
                    end: start + mid,
                    axis: 0,
                    split: 0.0,
                    left: NO_CHILD,
                });
                tree.nodes.push(Node {
                    start: start + mid,
                    end,
                    axis: 0,
                    split: 0.0,
                    left: NO_CHILD,
                });
                stack.push(left);
                stack.push(left + 1);
            }
        }
        tree
    }

    /// The `k` nearest points to `q` as `(index, distance)`, nearest first,
    /// ties broken by index. `exclude` drops one index (the query itself).
    pub fn nearest(&self, q: &Vec3, k: usize, exclude: Option<usize>) -> Vec<(usize, f64)> {
        if k == 0 || self.nodes.is_empty() {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Cand> = BinaryHeap::with_capacity(k + 1);
        let mut stack: Vec<(usize, f64)> = vec![(0, 0.0)];
        while let Some((ni, bound)) = stack.pop() {
            if heap.len() == k && bound > heap.peek().unwrap().0 {
                continue;
            }
            let node = self.nodes[ni];
            if node.left == NO_CHILD {
                for &i in &self.order[node.start..node.end] {
                    if Some(i) == exclude {
                        continue;
                    }
                    let d2 = (self.points[i] - q).norm_squared();
                    let c = Cand(d2, i);
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(c);
                    }
                }
                continue;
            }
            let diff = q[node.axis as usize] - node.split;
            let (near, far) = if diff < 0.0 {
                (node.left, node.left + 1)
            } else {
                (node.left + 1, node.left)
            };
            let far_bound = bound.max(diff * diff);
            stack.push((far, far_bound));
            stack.push((near, bound));
        }
        let mut out: Vec<Cand> = heap.into_vec();
        out.sort();
        out.into_iter().map(|Cand(d2, i)| (i, d2.sqrt())).collect()
    }
}

/// Undirected weighted k-nearest-neighbor graph with a set of fixed nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct KnnGraph {
    pub positions: Vec<Vec3>,
    /// Sorted adjacency lists; every edge appears in both endpoint lists.
    pub adjacency: Vec<Vec<(usize, f64)>>,
    pub fixed: Vec<bool>,
    /// Free nodes with no path to any fixed node.
    pub isolated: Vec<bool>,
    pub epsilon_w: f64,
}

impl KnnGraph {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.adjacency[i]
            .binary_search_by(|e| e.0.cmp(&j))
            .ok()
            .map(|k| self.adjacency[i][k].1)
    }

    /// Each undirected edge once, as `(i, j, w)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(i, a)| {
            a.iter()
                .filter(move |e| e.0 > i)
                .map(move |&(j, w)| (i, j, w))
        })
    }

    pub fn isolated_count(&self) -> usize {
        self.isolated.iter().filter(|&&b| b).count()
    }
}

/// Builds the union-symmetrized k-NN graph with weights `1 / (dist + eps_w)`,
/// where `eps_w` is a millionth of the median edge length.
pub fn build_knn_graph(points: &[Vec3], k: usize, fixed: &[bool]) -> Result<KnnGraph> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if points.len() < 2 {
        return Err(Error::invalid("a k-NN graph needs at least two points"));
    }
    if fixed.len() != points.len() {
        return Err(Error::invalid(format!(
            "{} fixed flags for {} points",
            fixed.len(),
            points.len()
        )));
    }
    if let Some(i) = points.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
        return Err(Error::invalid(format!("point {i} is not finite")));
    }
    let n = points.len();
    let tree = KdTree::build(points);
    let knn: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| tree.nearest(&points[i], k, Some(i)))
        .collect();
    let mut lengths: Vec<f64> = knn.iter().flatten().map(|e| e.1).collect();
    let median = median_in_place(&mut lengths).unwrap_or(0.0);
    let epsilon_w = if median > 0.0 { 1e-6 * median } else { 1e-6 };
    let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, nb) in knn.iter().enumerate() {
        for &(j, d) in nb {
            let w = 1.0 / (d + epsilon_w);
            adjacency[i].push((j, w));
            adjacency[j].push((i, w));
        }
    }
    adjacency.par_iter_mut().for_each(|a| {
        a.sort_by_key(|x| x.0);
        a.dedup_by_key(|e| e.0);
    });
    let mut reached = fixed.to_vec();
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| fixed[i]).collect();
    while let Some(i) = queue.pop_front() {
        for &(j, _) in &adjacency[i] {
            if !reached[j] {
                reached[j] = true;
                queue.push_back(j);
            }
        }
    }
    let isolated = reached.iter().map(|r| !r).collect();
    Ok(KnnGraph {
        positions: points.to_vec(),
        adjacency,
        fixed: fixed.to_vec(),
        isolated,
        epsilon_w,
    })
}
