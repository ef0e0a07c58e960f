//! Approximate nearest neighbor search as multi-label classification.
//!
//! Each corpus point is a label; a query's true labels are its k nearest
//! corpus points. An ensemble of randomized space-partitioning trees (random
//! projection, k-d, PCA or supervised classification trees) stores per-leaf
//! label counts fit by maximum likelihood. A query is routed to one leaf per
//! tree, the label scores are aggregated, labels scoring above a threshold
//! form the candidate set, and the candidates are re-ranked exactly.
//!
//! Classic lookup and voting search are the special case where each corpus
//! point is labeled only with itself; see [`model::make_voting_index`].
//!
//! ```no_run
//! use std::sync::Arc;
//! use annclass::{index, io::SyntheticRecipe, IndexParams, Scale, SelectionParams};
//!
//! let corpus = Arc::new(SyntheticRecipe::gaussian(1.0, 10_000, 32, 1).generate::<f32>().unwrap());
//! let params = IndexParams::default();
//! let idx = index::build(corpus.clone(), None, &params).unwrap();
//! let sel = SelectionParams::new(0.05, Scale::MeanProbability);
//! let res = index::query(&idx, corpus.row(0), 10, &sel).unwrap();
//! assert_eq!(res.neighbors.indices[0], 0);
//! ```

pub mod bench;
pub mod error;
pub mod index;
pub mod io;
pub mod knn;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod trees;
pub mod vectors;

pub use error::{Error, Result};
pub use index::{IndexParams, QueryResult, QueryTimings, Searcher};
pub use knn::{dissimilarity, exact_knn, exact_knn_self, GroundTruth, NeighborList};
pub use metrics::recall;
pub use model::{EnsembleIndex, LeafLabelTable, Mode, Scale, SelectionParams};
pub use scalar::Scalar;
pub use trees::{PartitionTree, SplitRule, TreeBuildParams, TreeType};
pub use vectors::VectorSet;

pub type VectorSet32 = VectorSet<f32>;
pub type VectorSet64 = VectorSet<f64>;
pub type EnsembleIndex32 = EnsembleIndex<f32>;
pub type EnsembleIndex64 = EnsembleIndex<f64>;
pub type PartitionTree32 = PartitionTree<f32>;
pub type PartitionTree64 = PartitionTree<f64>;
