//! Per-behavior LightGCN propagation over a symmetric-normalized bipartite
//! adjacency.
//!
//! Nodes are stacked users first, then items: user `u` is row `u`, item `i`
//! is row `num_users + i`. Edge weights are `1 / sqrt(deg(u) * deg(i))`; an
//! isolated node has no entries, so it neither sends nor receives mass.
//!
//! Propagation returns the uniform mean of layers `0..=L`. The normalized
//! adjacency is symmetric, so the vector-Jacobian product of propagation is
//! the same linear map applied to the cotangent.

use ndarray::{s, Array2, ArrayView2};
use rayon::prelude::*;

use crate::dataset::InteractionDataset;
use crate::error::{Error, Result};

/// Below this many nonzeros a layer runs on one thread.
const PARALLEL_NNZ: usize = 1 << 14;

#[derive(Debug, Clone)]
pub struct BehaviorGraph {
    behavior: String,
    num_users: usize,
    num_items: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    weights: Vec<f64>,
    degrees: Vec<u32>,
}

/// Behavior-specific user (`P`) and item (`Q`) embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorEmbeddings {
    pub users: Array2<f64>,
    pub items: Array2<f64>,
}

impl BehaviorGraph {
    /// Builds the normalized adjacency from sorted, unique (user, item) pairs.
    pub fn from_pairs(
        behavior: impl Into<String>,
        num_users: usize,
        num_items: usize,
        pairs: &[(u32, u32)],
    ) -> Self {
        let n = num_users + num_items;
        let mut degrees = vec![0u32; n];
        for &(u, i) in pairs {
            degrees[u as usize] += 1;
            degrees[num_users + i as usize] += 1;
        }
        let mut row_ptr = vec![0usize; n + 1];
        for r in 0..n {
            row_ptr[r + 1] = row_ptr[r] + degrees[r] as usize;
        }
        let mut fill = row_ptr.clone();
        let mut col_idx = vec![0u32; row_ptr[n]];
        let mut weights = vec![0f64; row_ptr[n]];
        // Pairs sorted by (user, item) give sorted columns in user rows, and
        // ascending users in item rows.
        for &(u, i) in pairs {
            let (ur, ir) = (u as usize, num_users + i as usize);
            let w = 1.0 / ((degrees[ur] as f64) * (degrees[ir] as f64)).sqrt();
            col_idx[fill[ur]] = ir as u32;
            weights[fill[ur]] = w;
            fill[ur] += 1;
            col_idx[fill[ir]] = ur as u32;
            weights[fill[ir]] = w;
            fill[ir] += 1;
        }
        Self {
            behavior: behavior.into(),
            num_users,
            num_items,
            row_ptr,
            col_idx,
            weights,
            degrees,
        }
    }

    pub fn behavior(&self) -> &str {
        &self.behavior
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    /// Number of stored (directed) entries, twice the edge count.
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn degrees(&self) -> &[u32] {
        &self.degrees
    }

    /// Nonzeros of one row as (column, weight).
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .zip(&self.weights[span])
            .map(|(&c, &w)| (c as usize, w))
    }

    /// `out = Â x` for a row-major `num_nodes × dim` buffer. Rows accumulate
    /// in column order, so results do not depend on the thread count.
    fn spmm(&self, x: &[f64], out: &mut [f64], dim: usize) {
        let row = |r: usize, dst: &mut [f64]| {
            dst.fill(0.0);
            for (c, w) in self.row(r) {
                let src = &x[c * dim..(c + 1) * dim];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        };
        if self.nnz() >= PARALLEL_NNZ {
            out.par_chunks_mut(dim).enumerate().for_each(|(r, dst)| row(r, dst));
        } else {
            out.chunks_mut(dim).enumerate().for_each(|(r, dst)| row(r, dst));
        }
    }

    /// Mean of `Â^l x` for `l = 0..=layers` on a stacked buffer.
    pub fn layer_mean(&self, x: &[f64], dim: usize, layers: usize) -> Vec<f64> {
        let mut acc = x.to_vec();
        if layers == 0 || dim == 0 {
            return acc;
        }
        let mut cur = x.to_vec();
        let mut next = vec![0.0; x.len()];
        for _ in 0..layers {
            self.spmm(&cur, &mut next, dim);
            for (a, v) in acc.iter_mut().zip(&next) {
                *a += v;
            }
            std::mem::swap(&mut cur, &mut next);
        }
        let scale = 1.0 / (layers as f64 + 1.0);
        acc.iter_mut().for_each(|a| *a *= scale);
        acc
    }

    fn check_shapes(
        &self,
        context: &'static str,
        users: ArrayView2<f64>,
        items: ArrayView2<f64>,
    ) -> Result<usize> {
        let dim = users.ncols();
        if users.nrows() != self.num_users {
            return Err(Error::Shape {
                context,
                expected: (self.num_users, dim),
                actual: users.dim(),
            });
        }
        if items.dim() != (self.num_items, dim) {
            return Err(Error::Shape {
                context,
                expected: (self.num_items, dim),
                actual: items.dim(),
            });
        }
        Ok(dim)
    }

    fn apply(
        &self,
        context: &'static str,
        users: ArrayView2<f64>,
        items: ArrayView2<f64>,
        layers: usize,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        let dim = self.check_shapes(context, users, items)?;
        let mut stacked = Array2::<f64>::zeros((self.num_nodes(), dim));
        stacked.slice_mut(s![..self.num_users, ..]).assign(&users);
        stacked.slice_mut(s![self.num_users.., ..]).assign(&items);
        let flat = stacked.as_slice().expect("standard layout");
        let mean = self.layer_mean(flat, dim, layers);
        let out = Array2::from_shape_vec((self.num_nodes(), dim), mean).expect("shape preserved");
        Ok((
            out.slice(s![..self.num_users, ..]).to_owned(),
            out.slice(s![self.num_users.., ..]).to_owned(),
        ))
    }
}

/// Normalized adjacency of behavior `behavior` over the dataset's universe.
pub fn build_graph(ds: &InteractionDataset, behavior: &str) -> Result<BehaviorGraph> {
    let b = ds.behavior_index(behavior)?;
    let pairs: Vec<(u32, u32)> = ds.edges(b).iter().map(|e| e.pair()).collect();
    Ok(BehaviorGraph::from_pairs(
        behavior,
        ds.num_users(),
        ds.num_items(),
        &pairs,
    ))
}

/// One graph per behavior, in manifest order.
pub fn build_all(ds: &InteractionDataset) -> Vec<BehaviorGraph> {
    ds.behaviors()
        .iter()
        .map(|b| build_graph(ds, b).expect("manifest behavior"))
        .collect()
}

/// LightGCN encoder: `P, Q = mean_l Â^l [Zu; Zi]`.
pub fn propagate(
    graph: &BehaviorGraph,
    zu: ArrayView2<f64>,
    zi: ArrayView2<f64>,
    layers: usize,
) -> Result<BehaviorEmbeddings> {
    let (users, items) = graph.apply("propagate", zu, zi, layers)?;
    Ok(BehaviorEmbeddings { users, items })
}

/// Vector-Jacobian product of [`propagate`]: maps cotangents on (P, Q) to
/// cotangents on (Zu, Zi).
pub fn propagate_adjoint(
    graph: &BehaviorGraph,
    d_users: ArrayView2<f64>,
    d_items: ArrayView2<f64>,
    layers: usize,
) -> Result<(Array2<f64>, Array2<f64>)> {
    graph.apply("propagate_adjoint", d_users, d_items, layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn single_edge_has_unit_weight() {
        let g = BehaviorGraph::from_pairs("b", 1, 1, &[(0, 0)]);
        assert_eq!(g.row(0).collect::<Vec<_>>(), [(1, 1.0)]);
        assert_eq!(g.row(1).collect::<Vec<_>>(), [(0, 1.0)]);
    }

    #[test]
    fn star_weights() {
        let g = BehaviorGraph::from_pairs("b", 1, 2, &[(0, 0), (0, 1)]);
        let w = 1.0 / 2f64.sqrt();
        assert_eq!(g.row(0).collect::<Vec<_>>(), [(1, w), (2, w)]);
        assert_eq!(g.row(1).collect::<Vec<_>>(), [(0, w)]);
        assert_eq!(g.row(2).collect::<Vec<_>>(), [(0, w)]);
        assert!((w - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn zero_layers_is_identity() {
        let g = BehaviorGraph::from_pairs("b", 2, 2, &[(0, 1), (1, 0)]);
        let zu = array![[1.0, 2.0], [3.0, 4.0]];
        let zi = array![[5.0, 6.0], [7.0, 8.0]];
        let out = propagate(&g, zu.view(), zi.view(), 0).unwrap();
        assert_eq!(out.users, zu);
        assert_eq!(out.items, zi);
        let (du, di) = propagate_adjoint(&g, zu.view(), zi.view(), 0).unwrap();
        assert_eq!(du, zu);
        assert_eq!(di, zi);
    }

    #[test]
    fn edgeless_graph_scales_by_layer_count() {
        let g = BehaviorGraph::from_pairs("b", 2, 1, &[]);
        let zu = array![[3.0], [6.0]];
        let zi = array![[9.0]];
        let out = propagate(&g, zu.view(), zi.view(), 2).unwrap();
        assert_eq!(out.users, array![[1.0], [2.0]]);
        assert_eq!(out.items, array![[3.0]]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let g = BehaviorGraph::from_pairs("b", 2, 2, &[]);
        let zu = Array2::<f64>::zeros((3, 2));
        let zi = Array2::<f64>::zeros((2, 2));
        assert!(matches!(
            propagate(&g, zu.view(), zi.view(), 1),
            Err(Error::Shape { .. })
        ));
        let zi = Array2::<f64>::zeros((2, 3));
        let zu = Array2::<f64>::zeros((2, 2));
        assert!(propagate(&g, zu.view(), zi.view(), 1).is_err());
    }
}
