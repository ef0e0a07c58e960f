//! End-to-end index: label the training set, grow the trees, fit the leaf
//! tables, then answer queries by candidate selection and exact re-ranking.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::knn::{exact_knn, exact_knn_self, knn_among, GroundTruth, NeighborList};
use crate::model::{make_voting_index, EnsembleIndex, Mode, ScoreAccumulator, SelectionParams};
use crate::scalar::Scalar;
use crate::trees::{build_tree, PartitionTree, TreeBuildParams, TreeType};
use crate::vectors::VectorSet;

#[derive(Clone, Debug, PartialEq)]
pub struct IndexParams {
    pub tree: TreeBuildParams,
    pub n_trees: usize,
    /// Neighbor count used to label the training set (classification mode).
    pub k: usize,
    pub mode: Mode,
    pub selection: SelectionParams,
}

impl Default for IndexParams {
    fn default() -> Self {
        Self {
            tree: TreeBuildParams::default(),
            n_trees: 32,
            k: 10,
            mode: Mode::Classification,
            selection: SelectionParams::default(),
        }
    }
}

impl IndexParams {
    pub fn validate(&self, d: usize, m: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::usage("an ensemble needs at least one tree"));
        }
        if self.k == 0 || self.k > m {
            return Err(Error::usage(format!("k = {} must lie in 1..={m}", self.k)));
        }
        self.selection.validate()?;
        self.tree.validate(d)
    }
}

/// Per-query phase durations in nanoseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct QueryTimings {
    pub route_ns: u64,
    pub score_ns: u64,
    pub select_ns: u64,
    pub rerank_ns: u64,
}

impl QueryTimings {
    pub fn total_ns(&self) -> u64 {
        self.route_ns + self.score_ns + self.select_ns + self.rerank_ns
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryResult {
    /// At most k neighbors, all drawn from the candidate set.
    pub neighbors: NeighborList,
    pub candidate_count: usize,
    pub timings: QueryTimings,
}

/// Builds an index over `corpus`.
///
/// Without `training` the corpus is its own training set and every point
/// is labeled first with itself. Classification-mode tables are fit on the
/// training labels; voting-mode tables record corpus membership. Trees are
/// grown on the training points (voting mode: on the corpus).
pub fn build<T: Scalar>(
    corpus: Arc<VectorSet<T>>,
    training: Option<&VectorSet<T>>,
    params: &IndexParams,
) -> Result<EnsembleIndex<T>> {
    params.validate(corpus.dim(), corpus.len())?;
    if let Some(t) = training {
        t.check_dim(corpus.dim(), "training set")?;
    }
    let (train, labels) = match (params.mode, training) {
        (Mode::Classification, Some(t)) => (t, Some(exact_knn(&corpus, t, params.k)?)),
        (Mode::Classification, None) => (&*corpus, Some(exact_knn_self(&corpus, params.k)?)),
        (Mode::Voting, _) => {
            let labels = (params.tree.tree_type == TreeType::Classification)
                .then(|| exact_knn_self(&corpus, params.k))
                .transpose()?;
            (&*corpus, labels)
        }
    };
    build_with_labels(corpus.clone(), train, labels.as_ref(), params)
}

/// Like [`build`] with precomputed labels for `train`.
///
/// `labels` may be `None` only for voting mode with unsupervised trees.
pub fn build_with_labels<T: Scalar>(
    corpus: Arc<VectorSet<T>>,
    train: &VectorSet<T>,
    labels: Option<&GroundTruth>,
    params: &IndexParams,
) -> Result<EnsembleIndex<T>> {
    params.validate(corpus.dim(), corpus.len())?;
    train.check_dim(corpus.dim(), "training set")?;
    let tree_params = TreeBuildParams {
        k: labels.map_or(params.k, |l| l.k),
        ..params.tree.clone()
    };
    let trees = grow_trees(train, labels, &tree_params, params.n_trees)?;
    match params.mode {
        Mode::Classification => {
            let labels = labels.ok_or_else(|| Error::usage("classification mode needs labels"))?;
            EnsembleIndex::fit(trees, corpus, train, labels)
        }
        Mode::Voting => make_voting_index(trees, corpus),
    }
}

/// `n_trees` trees with per-tree seeds derived from `params.seed`.
pub fn grow_trees<T: Scalar>(
    points: &VectorSet<T>,
    labels: Option<&GroundTruth>,
    params: &TreeBuildParams,
    n_trees: usize,
) -> Result<Vec<PartitionTree<T>>> {
    (0..n_trees)
        .into_par_iter()
        .map(|t| {
            let p = TreeBuildParams {
                seed: params.tree_seed(t),
                ..params.clone()
            };
            build_tree(points, labels, &p)
        })
        .collect()
}

/// Per-thread query state over a shared index.
pub struct Searcher<'a, T> {
    index: &'a EnsembleIndex<T>,
    acc: ScoreAccumulator,
    leaves: Vec<u32>,
}

impl<'a, T: Scalar> Searcher<'a, T> {
    pub fn new(index: &'a EnsembleIndex<T>) -> Self {
        Self {
            index,
            acc: index.accumulator(),
            leaves: Vec::with_capacity(index.n_trees()),
        }
    }

    /// Candidate set of `x` without re-ranking.
    pub fn candidates(&mut self, x: &[T], selection: &SelectionParams) -> Vec<u32> {
        self.index.route_all(x, &mut self.leaves);
        self.acc.score_leaves(self.index, &self.leaves, selection.scale);
        self.acc.select(selection)
    }

    /// Scores of the last query.
    pub fn scores(&self) -> &ScoreAccumulator {
        &self.acc
    }

    pub fn query(&mut self, x: &[T], k: usize, selection: &SelectionParams) -> QueryResult {
        let t0 = Instant::now();
        self.index.route_all(x, &mut self.leaves);
        let t1 = Instant::now();
        self.acc.score_leaves(self.index, &self.leaves, selection.scale);
        let t2 = Instant::now();
        let cands = self.acc.select(selection);
        let t3 = Instant::now();
        let neighbors = knn_among(self.index.corpus(), &cands, x, k);
        let t4 = Instant::now();
        let ns = |a: Instant, b: Instant| (b - a).as_nanos() as u64;
        QueryResult {
            neighbors,
            candidate_count: cands.len(),
            timings: QueryTimings {
                route_ns: ns(t0, t1),
                score_ns: ns(t1, t2),
                select_ns: ns(t2, t3),
                rerank_ns: ns(t3, t4),
            },
        }
    }
}

/// One-off query; use a [`Searcher`] to reuse scratch across queries.
pub fn query<T: Scalar>(index: &EnsembleIndex<T>, x: &[T], k: usize, selection: &SelectionParams) -> Result<QueryResult> {
    if k == 0 {
        return Err(Error::usage("k must be at least 1"));
    }
    if x.len() != index.dim() {
        return Err(Error::usage(format!(
            "query has dimension {}, index expects {}",
            x.len(),
            index.dim()
        )));
    }
    selection.validate()?;
    Ok(Searcher::new(index).query(x, k, selection))
}
