//! Embeddings, light propagation over the folksonomy graphs and scoring.
//!
//! One propagation layer is the linear map
//!
//! ```text
//! user'[u] = Σ_{t ∈ N(u)} c(u,t) · tag[t]
//! item'[i] = Σ_{t ∈ N(i)} c(i,t) · tag[t]
//! tag'[t]  = ½ · ( Σ_{u ∈ N(t)} c(t,u) · user[u] + Σ_{i ∈ N(t)} c(t,i) · item[i] )
//! ```
//!
//! with no transformation, activation or self-loop. Final embeddings are the
//! `a_k`-weighted sum of layers `0..=K`. Because the whole pipeline is linear
//! in layer 0, gradients are pulled back with [`propagate_adjoint`].

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::graph::{Adjacency, FolksonomyGraphs};
use crate::rng::{self, Stream};

/// Row-major dense matrix of `rows × dim` reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Matrix {
            rows,
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    pub fn from_vec(rows: usize, dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * dim, "matrix data has wrong length");
        Matrix { rows, dim, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Matrix) {
        debug_assert_eq!((self.rows, self.dim), (other.rows, other.dim));
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += alpha * y;
        }
    }

    fn scaled(&self, alpha: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            dim: self.dim,
            data: self.data.iter().map(|x| alpha * x).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub dim: usize,
    pub n_layers: usize,
    /// `a_k` for `k = 0..=n_layers`.
    pub layer_weights: Vec<f64>,
}

impl ModelConfig {
    /// Uniform layer weights `1/(K+1)`.
    pub fn new(dim: usize, n_layers: usize) -> Self {
        let w = 1.0 / (n_layers as f64 + 1.0);
        ModelConfig {
            dim,
            n_layers,
            layer_weights: vec![w; n_layers + 1],
        }
    }

    pub fn with_weights(dim: usize, layer_weights: Vec<f64>) -> Self {
        assert!(
            !layer_weights.is_empty(),
            "need at least the layer-0 weight"
        );
        assert!(
            layer_weights.iter().all(|w| w.is_finite() && *w >= 0.0),
            "layer weights must be non-negative"
        );
        ModelConfig {
            dim,
            n_layers: layer_weights.len() - 1,
            layer_weights,
        }
    }
}

/// Per-node-type embedding matrices. Used for the trainable layer-0
/// parameters and for anything shaped like them (gradients, Adam moments).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub user: Matrix,
    pub item: Matrix,
    pub tag: Matrix,
}

impl EmbeddingTable {
    pub fn zeros(n_users: usize, n_items: usize, n_tags: usize, dim: usize) -> Self {
        EmbeddingTable {
            user: Matrix::zeros(n_users, dim),
            item: Matrix::zeros(n_items, dim),
            tag: Matrix::zeros(n_tags, dim),
        }
    }

    pub fn zeros_like(other: &EmbeddingTable) -> Self {
        EmbeddingTable::zeros(
            other.user.rows(),
            other.item.rows(),
            other.tag.rows(),
            other.dim(),
        )
    }

    pub fn dim(&self) -> usize {
        self.user.dim()
    }

    pub fn parts(&self) -> [&Matrix; 3] {
        [&self.user, &self.item, &self.tag]
    }

    pub fn parts_mut(&mut self) -> [&mut Matrix; 3] {
        [&mut self.user, &mut self.item, &mut self.tag]
    }

    pub fn n_params(&self) -> usize {
        self.parts().iter().map(|m| m.as_slice().len()).sum()
    }

    /// Flat view in user, item, tag order.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.user
            .as_slice()
            .iter()
            .chain(self.item.as_slice())
            .chain(self.tag.as_slice())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.user
            .data
            .iter_mut()
            .chain(self.item.data.iter_mut())
            .chain(self.tag.data.iter_mut())
    }

    fn scaled(&self, alpha: f64) -> Self {
        EmbeddingTable {
            user: self.user.scaled(alpha),
            item: self.item.scaled(alpha),
            tag: self.tag.scaled(alpha),
        }
    }

    fn axpy(&mut self, alpha: f64, other: &EmbeddingTable) {
        self.user.axpy(alpha, &other.user);
        self.item.axpy(alpha, &other.item);
        self.tag.axpy(alpha, &other.tag);
    }
}

/// Layer-0 embeddings drawn i.i.d. from N(0, 0.1²) under the `Init` substream.
pub fn init_embeddings(
    seed: u64,
    dim: usize,
    n_users: usize,
    n_items: usize,
    n_tags: usize,
) -> EmbeddingTable {
    assert!(dim >= 1, "embedding dimension must be positive");
    let mut rng = rng::stream(seed, Stream::Init);
    let normal = Normal::new(0.0, 0.1).expect("valid normal parameters");
    let mut table = EmbeddingTable::zeros(n_users, n_items, n_tags, dim);
    for x in table.iter_mut() {
        *x = normal.sample(&mut rng);
    }
    table
}

/// Layer-combined embeddings used for scoring and the translation term.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalEmbeddings {
    pub user: Matrix,
    pub item: Matrix,
    pub tag: Matrix,
}

impl FinalEmbeddings {
    pub fn n_items(&self) -> usize {
        self.item.rows()
    }
}

/// `dst[a] = scale · Σ_b coef(a,b) · src[b]`, neighbors visited in ascending order.
fn aggregate(adj: &Adjacency, src: &Matrix, scale: f64, dst: &mut Matrix) {
    let dim = src.dim();
    dst.as_mut_slice()
        .par_chunks_mut(dim)
        .enumerate()
        .for_each(|(a, out)| {
            out.fill(0.0);
            for (&b, &c) in adj.neighbors(a).iter().zip(adj.coefficients(a)) {
                let w = scale * c;
                for (o, x) in out.iter_mut().zip(src.row(b)) {
                    *o += w * x;
                }
            }
        });
}

/// Tag update: `scale_u · Σ_u c·user[u] + scale_i · Σ_i c·item[i]`.
fn aggregate_tags(
    graphs: &FolksonomyGraphs,
    user: &Matrix,
    item: &Matrix,
    scale: f64,
    dst: &mut Matrix,
) {
    let dim = user.dim();
    let from_users = graphs.tagging.right();
    let from_items = graphs.tagged.right();
    dst.as_mut_slice()
        .par_chunks_mut(dim)
        .enumerate()
        .for_each(|(t, out)| {
            out.fill(0.0);
            let mut side = |adj: &Adjacency, src: &Matrix| {
                for (&b, &c) in adj.neighbors(t).iter().zip(adj.coefficients(t)) {
                    let w = scale * c;
                    for (o, x) in out.iter_mut().zip(src.row(b)) {
                        *o += w * x;
                    }
                }
            };
            side(from_users, user);
            side(from_items, item);
        });
}

/// One forward layer: users/items gather tags, tags average the two graph messages.
fn forward_layer(graphs: &FolksonomyGraphs, src: &EmbeddingTable, dst: &mut EmbeddingTable) {
    aggregate(graphs.tagging.left(), &src.tag, 1.0, &mut dst.user);
    aggregate(graphs.tagged.left(), &src.tag, 1.0, &mut dst.item);
    aggregate_tags(graphs, &src.user, &src.item, 0.5, &mut dst.tag);
}

/// Transpose of [`forward_layer`].
fn adjoint_layer(graphs: &FolksonomyGraphs, src: &EmbeddingTable, dst: &mut EmbeddingTable) {
    aggregate(graphs.tagging.left(), &src.tag, 0.5, &mut dst.user);
    aggregate(graphs.tagged.left(), &src.tag, 0.5, &mut dst.item);
    aggregate_tags(graphs, &src.user, &src.item, 1.0, &mut dst.tag);
}

fn check_shapes(graphs: &FolksonomyGraphs, table: &EmbeddingTable, cfg: &ModelConfig) {
    assert_eq!(table.user.rows(), graphs.n_users(), "user count mismatch");
    assert_eq!(table.item.rows(), graphs.n_items(), "item count mismatch");
    assert_eq!(table.tag.rows(), graphs.n_tags(), "tag count mismatch");
    assert_eq!(
        graphs.tagged.n_right(),
        graphs.n_tags(),
        "graphs disagree on tags"
    );
    assert_eq!(table.dim(), cfg.dim, "embedding dim mismatch");
    assert_eq!(
        cfg.layer_weights.len(),
        cfg.n_layers + 1,
        "need K+1 layer weights"
    );
}

fn layer_sum(
    graphs: &FolksonomyGraphs,
    start: &EmbeddingTable,
    weights: &[f64],
    step: fn(&FolksonomyGraphs, &EmbeddingTable, &mut EmbeddingTable),
) -> EmbeddingTable {
    let mut acc = start.scaled(weights[0]);
    if weights.len() == 1 {
        return acc;
    }
    let mut cur = start.clone();
    let mut next = EmbeddingTable::zeros_like(start);
    for &w in &weights[1..] {
        step(graphs, &cur, &mut next);
        acc.axpy(w, &next);
        std::mem::swap(&mut cur, &mut next);
    }
    acc
}

/// K-layer light propagation followed by layer combination.
pub fn propagate(
    graphs: &FolksonomyGraphs,
    table: &EmbeddingTable,
    cfg: &ModelConfig,
) -> FinalEmbeddings {
    check_shapes(graphs, table, cfg);
    let t = layer_sum(graphs, table, &cfg.layer_weights, forward_layer);
    FinalEmbeddings {
        user: t.user,
        item: t.item,
        tag: t.tag,
    }
}

/// Pulls a gradient with respect to the final embeddings back to layer 0:
/// applies the transpose of the map computed by [`propagate`].
pub fn propagate_adjoint(
    graphs: &FolksonomyGraphs,
    grad_finals: &EmbeddingTable,
    cfg: &ModelConfig,
) -> EmbeddingTable {
    check_shapes(graphs, grad_finals, cfg);
    layer_sum(graphs, grad_finals, &cfg.layer_weights, adjoint_layer)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Predicted preference `e_u · e_i`.
pub fn score(u: usize, i: usize, finals: &FinalEmbeddings) -> f64 {
    dot(finals.user.row(u), finals.item.row(i))
}

pub fn score_all_items(u: usize, finals: &FinalEmbeddings) -> Vec<f64> {
    let eu = finals.user.row(u);
    (0..finals.item.rows())
        .map(|i| dot(eu, finals.item.row(i)))
        .collect()
}

/// Translation plausibility `||e_u + e_t − e_i||²`; zero when `e_i = e_u + e_t`.
pub fn transrt_score(u: usize, t: usize, i: usize, finals: &FinalEmbeddings) -> f64 {
    finals
        .user
        .row(u)
        .iter()
        .zip(finals.tag.row(t))
        .zip(finals.item.row(i))
        .map(|((a, b), c)| {
            let r = a + b - c;
            r * r
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Triple;
    use crate::graph::build_graphs;

    fn finals_from(user: Vec<f64>, item: Vec<f64>, tag: Vec<f64>, dim: usize) -> FinalEmbeddings {
        FinalEmbeddings {
            user: Matrix::from_vec(user.len() / dim, dim, user),
            item: Matrix::from_vec(item.len() / dim, dim, item),
            tag: Matrix::from_vec(tag.len() / dim, dim, tag),
        }
    }

    #[test]
    fn default_weights_are_uniform() {
        let cfg = ModelConfig::new(8, 3);
        assert_eq!(cfg.layer_weights, vec![0.25; 4]);
        assert!((cfg.layer_weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn init_is_seeded_and_shaped() {
        let a = init_embeddings(5, 64, 1808, 3, 2);
        let b = init_embeddings(5, 64, 1808, 3, 2);
        assert_eq!(a, b);
        assert_eq!((a.user.rows(), a.user.dim()), (1808, 64));
        assert_ne!(a, init_embeddings(6, 64, 1808, 3, 2));
    }

    #[test]
    fn init_moments() {
        let t = init_embeddings(11, 100, 10_000, 0, 0);
        let n = t.n_params() as f64;
        let mean = t.iter().sum::<f64>() / n;
        let var = t.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-3, "mean {mean}");
        assert!((var.sqrt() - 0.1).abs() < 2e-3, "std {}", var.sqrt());
    }

    #[test]
    fn zero_layers_is_identity() {
        let g = build_graphs(&[Triple::new(0, 0, 0)], 1, 1, 1);
        let table = init_embeddings(1, 4, 1, 1, 1);
        let f = propagate(&g, &table, &ModelConfig::new(4, 0));
        assert_eq!(f.user, table.user);
        assert_eq!(f.item, table.item);
        assert_eq!(f.tag, table.tag);
    }

    #[test]
    fn single_triple_one_layer() {
        let g = build_graphs(&[Triple::new(0, 0, 0)], 1, 1, 1);
        let table = EmbeddingTable {
            user: Matrix::from_vec(1, 2, vec![1.0, 2.0]),
            item: Matrix::from_vec(1, 2, vec![-3.0, 0.5]),
            tag: Matrix::from_vec(1, 2, vec![4.0, -1.0]),
        };
        let f = propagate(&g, &table, &ModelConfig::new(2, 1));
        let (u, i, t) = ([1.0, 2.0], [-3.0, 0.5], [4.0, -1.0]);
        for d in 0..2 {
            assert!((f.user.row(0)[d] - 0.5 * (u[d] + t[d])).abs() < 1e-15);
            assert!((f.item.row(0)[d] - 0.5 * (i[d] + t[d])).abs() < 1e-15);
            let et = 0.5 * (t[d] + 0.5 * (u[d] + i[d]));
            assert!((f.tag.row(0)[d] - et).abs() < 1e-15);
        }
    }

    #[test]
    fn isolated_nodes_keep_only_layer_zero() {
        // user 1, item 2 and tag 1 have no edges
        let g = build_graphs(&[Triple::new(0, 0, 0), Triple::new(0, 0, 1)], 2, 3, 2);
        let table = init_embeddings(3, 3, 2, 3, 2);
        let cfg = ModelConfig::new(3, 2);
        let f = propagate(&g, &table, &cfg);
        let a0 = cfg.layer_weights[0];
        for d in 0..3 {
            assert_eq!(f.user.row(1)[d], a0 * table.user.row(1)[d]);
            assert_eq!(f.item.row(2)[d], a0 * table.item.row(2)[d]);
            assert_eq!(f.tag.row(1)[d], a0 * table.tag.row(1)[d]);
        }
    }

    #[test]
    fn constant_preserved_on_regular_graph() {
        // every user and item has 2 tags; every tag has 2 users and 2 items
        let train = vec![
            Triple::new(0, 0, 0),
            Triple::new(0, 1, 1),
            Triple::new(1, 0, 1),
            Triple::new(1, 1, 0),
        ];
        let g = build_graphs(&train, 2, 2, 2);
        let mut table = EmbeddingTable::zeros(2, 2, 2, 3);
        table.iter_mut().for_each(|x| *x = 0.7);
        let f = propagate(&g, &table, &ModelConfig::new(3, 3));
        for x in f
            .user
            .as_slice()
            .iter()
            .chain(f.item.as_slice())
            .chain(f.tag.as_slice())
        {
            assert!((x - 0.7).abs() < 1e-14);
        }
    }

    #[test]
    fn scoring_arithmetic() {
        let f = finals_from(vec![1.0; 8], vec![1.0; 8], vec![0.0; 8], 8);
        assert_eq!(score(0, 0, &f), 8.0);
        let z = finals_from(
            vec![0.0; 4],
            vec![0.3, -1.0, 2.0, 5.0, 1.0, 1.0, 1.0, 1.0],
            vec![0.0; 4],
            4,
        );
        assert_eq!(score_all_items(0, &z), vec![0.0, 0.0]);
    }

    #[test]
    fn transrt_arithmetic() {
        let f = finals_from(vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 1.0], 2);
        assert_eq!(transrt_score(0, 0, 0, &f), 2.0);
        let g = finals_from(vec![1.0, -2.0], vec![1.5, -1.5], vec![0.5, 0.5], 2);
        assert_eq!(transrt_score(0, 0, 0, &g), 0.0);
    }
}
