//! Tag-aware top-K recommendation over folksonomies.
//!
//! Tagging records `(user, tag, item)` are turned into two bipartite graphs,
//! user–tag and item–tag, that share one tag embedding table. Layer-0
//! embeddings are smoothed by parameter-free light graph convolution,
//! combined across layers, and trained with a pairwise ranking loss plus a
//! translation regularizer `||e_u + e_t - e_i||²` over observed records.
//!
//! The crate is organised bottom-up:
//!
//! - [`dataset`]: parsing, tag filtering, dense re-indexing and splitting.
//! - [`graph`]: compressed bipartite adjacency with symmetric normalization.
//! - [`model`]: embedding tables, propagation, scoring.
//! - [`training`]: sampling, losses, analytic gradients, Adam, early stopping.
//! - [`eval`]: full-ranking top-K and the ranking metrics.
//! - [`config`], [`snapshot`], [`cli`]: run configuration, persisted state and
//!   the command-line driver.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod eval;
pub mod graph;
pub mod model;
pub mod rng;
pub mod snapshot;
pub mod training;

pub use dataset::{DataError, Folksonomy, RawAssignment, SplitDataset, SplitPairs, Triple};
pub use eval::{EvalConfig, MetricReport, Split};
pub use graph::{BipartiteGraph, FolksonomyGraphs};
pub use model::{EmbeddingTable, FinalEmbeddings, Matrix, ModelConfig};
pub use training::{TrainConfig, TrainReport};
