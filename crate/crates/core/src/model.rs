//! Leaf label tables, ensemble label scores and threshold-based candidate
//! selection.
//!
//! Each leaf stores how many of its training points have corpus point `j`
//! among their k nearest neighbors (`v_j`) and how many training points it
//! holds (`N`). The per-leaf maximum likelihood estimate of label `j` is
//! `v_j / N`; a query's ensemble score is the mean over trees of the
//! estimate in the leaf it lands in (or the raw sum of `v_j`). Candidates
//! are the labels scoring strictly above a threshold.
//!
//! Lookup and voting search are the special case where the corpus is the
//! training set and each point is labeled only with itself.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knn::GroundTruth;
use crate::scalar::Scalar;
use crate::trees::{PartitionTree, TreeType};
use crate::vectors::VectorSet;

/// Sparse label counts of one leaf, sorted by label.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LeafLabelTable {
    pub(crate) n_points: u32,
    pub(crate) labels: Vec<u32>,
    pub(crate) counts: Vec<u32>,
}

impl LeafLabelTable {
    pub(crate) fn from_parts(n_points: u32, labels: Vec<u32>, counts: Vec<u32>) -> Self {
        Self {
            n_points,
            labels,
            counts,
        }
    }

    /// Number of training points in the leaf.
    pub fn n_points(&self) -> u32 {
        self.n_points
    }

    pub fn n_entries(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn entries(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.labels.iter().copied().zip(self.counts.iter().copied())
    }

    /// `v_j`, zero when absent.
    pub fn count(&self, j: u32) -> u32 {
        self.labels
            .binary_search(&j)
            .map_or(0, |p| self.counts[p])
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Bernoulli estimate `v_j / N`; zero for an empty leaf.
    pub fn theta(&self, j: u32) -> f64 {
        if self.n_points == 0 {
            0.0
        } else {
            self.count(j) as f64 / self.n_points as f64
        }
    }

    /// Multinomial estimate `v_j / (k N)`.
    pub fn alpha(&self, j: u32, k: usize) -> f64 {
        self.theta(j) / k as f64
    }
}

/// Counts the labels of every training point into the leaf it routes to.
pub fn fit_leaf_tables<T: Scalar>(
    tree: &mut PartitionTree<T>,
    train: &VectorSet<T>,
    labels: &GroundTruth,
) -> Result<()> {
    train.check_dim(tree.dim(), "training set")?;
    labels.validate(train.len())?;
    let leaves: Vec<u32> = train.rows().map(|x| tree.route(x) as u32).collect();
    fill_tables(tree, &leaves, |i| labels.labels(i));
    Ok(())
}

fn fill_tables<'a, T: Scalar>(
    tree: &mut PartitionTree<T>,
    leaf_of: &[u32],
    labels_of: impl Fn(usize) -> &'a [u32],
) {
    let mut pairs: Vec<(u32, u32)> = Vec::new();
    let mut sizes = vec![0u32; tree.n_leaves()];
    for (i, &l) in leaf_of.iter().enumerate() {
        sizes[l as usize] += 1;
        pairs.extend(labels_of(i).iter().map(|&j| (l, j)));
    }
    pairs.sort_unstable();
    tree.clear_tables();
    for (l, n) in sizes.into_iter().enumerate() {
        tree.leaves[l].n_points = n;
    }
    for run in pairs.chunk_by(|a, b| a == b) {
        let (l, j) = run[0];
        let t = &mut tree.leaves[l as usize];
        t.labels.push(j);
        t.counts.push(run.len() as u32);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Tables fit on nearest-neighbor labels of a training set.
    Classification,
    /// Tables record corpus membership (each corpus point labels itself).
    Voting,
}

impl Mode {
    pub(crate) fn code(self) -> u8 {
        match self {
            Mode::Classification => 0,
            Mode::Voting => 1,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Mode::Classification),
            1 => Some(Mode::Voting),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scale {
    /// Mean over trees of `v_j / N` in the landing leaf.
    #[serde(rename = "prob")]
    MeanProbability,
    /// Sum over trees of `v_j` in the landing leaf.
    #[serde(rename = "count")]
    RawCount,
}

impl Scale {
    pub fn as_str(self) -> &'static str {
        match self {
            Scale::MeanProbability => "prob",
            Scale::RawCount => "count",
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prob" | "mean_probability" => Ok(Scale::MeanProbability),
            "count" | "raw_count" => Ok(Scale::RawCount),
            other => Err(Error::usage(format!("unknown scale {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SelectionParams {
    /// Labels scoring strictly above `tau` are candidates.
    pub tau: f64,
    pub scale: Scale,
    /// Keep only the best-scoring candidates, ties to the lower index.
    pub max_candidates: Option<usize>,
}

impl SelectionParams {
    pub fn new(tau: f64, scale: Scale) -> Self {
        Self {
            tau,
            scale,
            max_candidates: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.tau.is_finite() || self.tau < 0.0 {
            return Err(Error::usage(format!("tau = {} must be finite and >= 0", self.tau)));
        }
        Ok(())
    }
}

impl Default for SelectionParams {
    fn default() -> Self {
        Self::new(0.0, Scale::MeanProbability)
    }
}

/// Fitted tree ensemble over a corpus. Immutable once built.
#[derive(Clone, Debug)]
pub struct EnsembleIndex<T> {
    pub(crate) trees: Vec<PartitionTree<T>>,
    pub(crate) k: usize,
    pub(crate) mode: Mode,
    pub(crate) tree_type: TreeType,
    pub(crate) corpus: Arc<VectorSet<T>>,
}

impl<T: Scalar> EnsembleIndex<T> {
    /// Fits every tree's tables on `train` and its corpus labels.
    pub fn fit(
        mut trees: Vec<PartitionTree<T>>,
        corpus: Arc<VectorSet<T>>,
        train: &VectorSet<T>,
        labels: &GroundTruth,
    ) -> Result<Self> {
        let tree_type = check_trees(&trees, &corpus)?;
        if let Some(bad) = labels
            .rows
            .iter()
            .flat_map(|r| r.indices.iter())
            .find(|&&j| j as usize >= corpus.len())
        {
            return Err(Error::usage(format!("label {bad} is outside the corpus")));
        }
        trees
            .par_iter_mut()
            .try_for_each(|t| fit_leaf_tables(t, train, labels))?;
        Ok(Self {
            trees,
            k: labels.k,
            mode: Mode::Classification,
            tree_type,
            corpus,
        })
    }

    pub(crate) fn from_parts(
        trees: Vec<PartitionTree<T>>,
        k: usize,
        mode: Mode,
        tree_type: TreeType,
        corpus: Arc<VectorSet<T>>,
    ) -> Self {
        Self {
            trees,
            k,
            mode,
            tree_type,
            corpus,
        }
    }

    pub fn trees(&self) -> &[PartitionTree<T>] {
        &self.trees
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Neighbor count the tables were fit with.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn tree_type(&self) -> TreeType {
        self.tree_type
    }

    pub fn corpus(&self) -> &VectorSet<T> {
        &self.corpus
    }

    pub fn corpus_arc(&self) -> &Arc<VectorSet<T>> {
        &self.corpus
    }

    pub fn dim(&self) -> usize {
        self.corpus.dim()
    }

    /// Landing leaf of `x` in every tree.
    pub fn route_all(&self, x: &[T], leaves: &mut Vec<u32>) {
        leaves.clear();
        leaves.extend(self.trees.iter().map(|t| t.route(x) as u32));
    }

    /// Mean over trees of the average landing depth of training points.
    pub fn mean_leaf_depth(&self) -> f64 {
        self.trees.iter().map(|t| t.mean_leaf_depth()).sum::<f64>() / self.trees.len() as f64
    }

    pub fn accumulator(&self) -> ScoreAccumulator {
        ScoreAccumulator::new(self.corpus.len())
    }
}

fn check_trees<T: Scalar>(trees: &[PartitionTree<T>], corpus: &VectorSet<T>) -> Result<TreeType> {
    let first = trees
        .first()
        .ok_or_else(|| Error::usage("an ensemble needs at least one tree"))?;
    for t in trees {
        if t.dim() != corpus.dim() {
            return Err(Error::usage(format!(
                "tree dimension {} does not match corpus dimension {}",
                t.dim(),
                corpus.dim()
            )));
        }
    }
    Ok(first.tree_type())
}

/// Voting-mode ensemble: every leaf records the corpus points it contains,
/// each with count one.
pub fn make_voting_index<T: Scalar>(
    mut trees: Vec<PartitionTree<T>>,
    corpus: Arc<VectorSet<T>>,
) -> Result<EnsembleIndex<T>> {
    let tree_type = check_trees(&trees, &corpus)?;
    trees.par_iter_mut().for_each(|t| {
        let leaves: Vec<u32> = corpus.rows().map(|c| t.route(c) as u32).collect();
        let own: Vec<[u32; 1]> = (0..corpus.len() as u32).map(|j| [j]).collect();
        fill_tables(t, &leaves, |j| &own[j]);
    });
    Ok(EnsembleIndex::from_parts(trees, 1, Mode::Voting, tree_type, corpus))
}

/// Reusable sparse score buffer sized to the corpus.
///
/// Clearing costs time proportional to the labels touched by the last
/// query, not to the corpus size.
#[derive(Clone, Debug)]
pub struct ScoreAccumulator {
    scores: Vec<f64>,
    touched: Vec<u32>,
    divisor: f64,
}

impl ScoreAccumulator {
    pub fn new(m: usize) -> Self {
        Self {
            scores: vec![0.0; m],
            touched: Vec::new(),
            divisor: 1.0,
        }
    }

    pub fn clear(&mut self) {
        for &j in &self.touched {
            self.scores[j as usize] = 0.0;
        }
        self.touched.clear();
        self.divisor = 1.0;
    }

    /// Scores for the given landing leaves (one per tree), replacing any
    /// previous contents.
    pub fn score_leaves<T: Scalar>(&mut self, index: &EnsembleIndex<T>, leaves: &[u32], scale: Scale) {
        self.clear();
        for (tree, &l) in index.trees.iter().zip(leaves) {
            let table = tree.leaf(l as usize);
            if table.n_points == 0 {
                continue;
            }
            let n = table.n_points as f64;
            for (j, v) in table.entries() {
                let s = &mut self.scores[j as usize];
                if *s == 0.0 {
                    self.touched.push(j);
                }
                *s += match scale {
                    Scale::RawCount => v as f64,
                    Scale::MeanProbability => v as f64 / n,
                };
            }
        }
        if scale == Scale::MeanProbability {
            self.divisor = index.trees.len() as f64;
        }
    }

    pub fn score<T: Scalar>(&mut self, index: &EnsembleIndex<T>, x: &[T], scale: Scale) {
        let mut leaves = Vec::with_capacity(index.n_trees());
        index.route_all(x, &mut leaves);
        self.score_leaves(index, &leaves, scale);
    }

    /// Number of labels with positive score.
    pub fn support(&self) -> usize {
        self.touched.len()
    }

    #[inline]
    pub fn get(&self, j: u32) -> f64 {
        self.scores[j as usize] / self.divisor
    }

    /// Positive scores in first-touched order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.touched.iter().map(|&j| (j, self.get(j)))
    }

    /// Candidate set for `params`, ascending by corpus index.
    pub fn select(&self, params: &SelectionParams) -> Vec<u32> {
        let mut picked: Vec<(u32, f64)> = self.iter().filter(|&(_, s)| s > params.tau).collect();
        if let Some(cap) = params.max_candidates {
            if picked.len() > cap {
                picked.sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                picked.truncate(cap);
            }
        }
        let mut out: Vec<u32> = picked.into_iter().map(|p| p.0).collect();
        out.sort_unstable();
        out
    }
}

/// Ensemble label scores of `x`, sorted by label; only positive scores.
pub fn estimate_probabilities<T: Scalar>(index: &EnsembleIndex<T>, x: &[T], scale: Scale) -> Vec<(u32, f64)> {
    let mut acc = index.accumulator();
    acc.score(index, x, scale);
    let mut out: Vec<(u32, f64)> = acc.iter().collect();
    out.sort_unstable_by_key(|p| p.0);
    out
}

pub fn select_candidates<T: Scalar>(index: &EnsembleIndex<T>, x: &[T], params: &SelectionParams) -> Vec<u32> {
    let mut acc = index.accumulator();
    acc.score(index, x, params.scale);
    acc.select(params)
}

/// Union of the labels stored in the leaves `x` lands in, ascending.
///
/// On a voting index this is classic lookup search. Computed by set union,
/// without scores.
pub fn lookup_candidates<T: Scalar>(index: &EnsembleIndex<T>, x: &[T]) -> Vec<u32> {
    let mut out: Vec<u32> = index
        .trees
        .iter()
        .flat_map(|t| t.leaf(t.route(x)).labels().iter().copied())
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}
