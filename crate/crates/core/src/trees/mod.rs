//! Randomized space-partitioning trees.
//!
//! Every tree is a binary tree of hyperplane splits stored in a flat node
//! array. A point goes left when its projection is `<=` the threshold, so
//! the leaves partition the whole space. Leaves carry a
//! [`LeafLabelTable`](crate::model::LeafLabelTable) once fitted.

mod classification;
mod kd;
mod pca;
mod rp;

pub use classification::{best_split, build_classification_tree, SplitChoice};
pub use kd::build_kd_tree;
pub use pca::{build_pca_tree, principal_direction, PowerIteration};
pub use rp::build_rp_tree;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::knn::{dot, GroundTruth};
use crate::model::LeafLabelTable;
use crate::scalar::Scalar;
use crate::vectors::VectorSet;

/// Nodes at this depth always become leaves.
pub const MAX_DEPTH: usize = 64;

pub const DEFAULT_MAX_LEAF_SIZE: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TreeType {
    Rp,
    Kd,
    Pca,
    Classification,
}

impl TreeType {
    pub const ALL: [TreeType; 4] = [TreeType::Rp, TreeType::Kd, TreeType::Pca, TreeType::Classification];

    pub fn as_str(self) -> &'static str {
        match self {
            TreeType::Rp => "rp",
            TreeType::Kd => "kd",
            TreeType::Pca => "pca",
            TreeType::Classification => "class",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            TreeType::Rp => 0,
            TreeType::Kd => 1,
            TreeType::Pca => 2,
            TreeType::Classification => 3,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        TreeType::ALL.get(c as usize).copied()
    }
}

impl fmt::Display for TreeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TreeType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rp" => Ok(TreeType::Rp),
            "kd" => Ok(TreeType::Kd),
            "pca" => Ok(TreeType::Pca),
            "class" | "classification" => Ok(TreeType::Classification),
            other => Err(Error::usage(format!("unknown tree type {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeBuildParams {
    pub tree_type: TreeType,
    /// Nodes holding at most this many points become leaves.
    pub max_leaf_size: usize,
    /// Dimensions sampled per node by classification trees; `None` means `ceil(sqrt(d))`.
    pub mtry: Option<usize>,
    pub seed: u64,
    /// Neighbor count of the labels (classification trees only).
    pub k: usize,
    /// k-d trees: pick the split axis at random among the top `ceil(d/10)`
    /// variance axes instead of always taking the largest.
    pub randomized: bool,
}

impl Default for TreeBuildParams {
    fn default() -> Self {
        Self {
            tree_type: TreeType::Rp,
            max_leaf_size: DEFAULT_MAX_LEAF_SIZE,
            mtry: None,
            seed: 0,
            k: 10,
            randomized: true,
        }
    }
}

impl TreeBuildParams {
    pub fn new(tree_type: TreeType) -> Self {
        Self {
            tree_type,
            ..Default::default()
        }
    }

    pub fn mtry_for(&self, d: usize) -> usize {
        self.mtry
            .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
            .clamp(1, d.max(1))
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.max_leaf_size == 0 {
            return Err(Error::usage("max_leaf_size must be at least 1"));
        }
        if let Some(a) = self.mtry {
            if a == 0 || a > d {
                return Err(Error::usage(format!("mtry = {a} must lie in 1..={d}")));
            }
        }
        if self.tree_type == TreeType::Classification && self.k == 0 {
            return Err(Error::usage("k must be at least 1"));
        }
        Ok(())
    }

    /// Seed for the `t`-th tree of an ensemble built from these params.
    pub fn tree_seed(&self, t: usize) -> u64 {
        splitmix64(self.seed ^ splitmix64(t as u64 + 1))
    }
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SplitRule {
    /// Project onto one coordinate.
    Axis { axis: u32, threshold: f64 },
    /// Project onto a direction from the tree's direction pool.
    Direction { direction: u32, threshold: f64 },
}

impl SplitRule {
    pub fn threshold(&self) -> f64 {
        match *self {
            SplitRule::Axis { threshold, .. } | SplitRule::Direction { threshold, .. } => threshold,
        }
    }

    fn with_threshold(self, t: f64) -> Self {
        match self {
            SplitRule::Axis { axis, .. } => SplitRule::Axis { axis, threshold: t },
            SplitRule::Direction { direction, .. } => SplitRule::Direction {
                direction,
                threshold: t,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Node {
    Split { rule: SplitRule, left: u32, right: u32 },
    Leaf { leaf: u32 },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BuildDiagnostics {
    /// PCA nodes where power iteration did not converge and a
    /// max-variance axis split was used instead.
    pub power_iteration_fallbacks: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PartitionTree<T> {
    pub(crate) d: usize,
    pub(crate) tree_type: TreeType,
    pub(crate) tree_id: u64,
    /// Root is node 0.
    pub(crate) nodes: Vec<Node>,
    /// `d` values per direction.
    pub(crate) directions: Vec<T>,
    pub(crate) leaves: Vec<LeafLabelTable>,
    pub(crate) leaf_depths: Vec<u32>,
    pub(crate) diagnostics: BuildDiagnostics,
}

impl<T: Scalar> PartitionTree<T> {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn tree_type(&self) -> TreeType {
        self.tree_type
    }

    pub fn tree_id(&self) -> u64 {
        self.tree_id
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaves(&self) -> &[LeafLabelTable] {
        &self.leaves
    }

    pub fn leaf(&self, l: usize) -> &LeafLabelTable {
        &self.leaves[l]
    }

    pub fn leaf_depth(&self, l: usize) -> usize {
        self.leaf_depths[l] as usize
    }

    pub fn diagnostics(&self) -> &BuildDiagnostics {
        &self.diagnostics
    }

    pub fn direction(&self, i: usize) -> &[T] {
        &self.directions[i * self.d..(i + 1) * self.d]
    }

    pub fn max_depth(&self) -> usize {
        self.leaf_depths.iter().copied().max().unwrap_or(0) as usize
    }

    /// Depth of the leaf a fitted training point lands in, averaged over
    /// training points. Unweighted over leaves when no table is fitted.
    pub fn mean_leaf_depth(&self) -> f64 {
        let total: u64 = self.leaves.iter().map(|l| l.n_points() as u64).sum();
        if total == 0 {
            let sum: u64 = self.leaf_depths.iter().map(|&d| d as u64).sum();
            return sum as f64 / self.leaf_depths.len() as f64;
        }
        self.leaves
            .iter()
            .zip(&self.leaf_depths)
            .map(|(l, &d)| l.n_points() as f64 * d as f64)
            .sum::<f64>()
            / total as f64
    }

    #[inline]
    pub(crate) fn project(&self, rule: &SplitRule, x: &[T]) -> f64 {
        project(&self.directions, self.d, rule, x)
    }

    /// Index of the leaf whose region contains `x`.
    #[inline]
    pub fn route(&self, x: &[T]) -> usize {
        debug_assert_eq!(x.len(), self.d);
        let mut node = 0usize;
        loop {
            match &self.nodes[node] {
                Node::Leaf { leaf } => return *leaf as usize,
                Node::Split { rule, left, right } => {
                    node = if self.project(rule, x) <= rule.threshold() {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn try_route(&self, x: &[T]) -> Result<usize> {
        if x.len() != self.d {
            return Err(Error::usage(format!(
                "point has dimension {}, tree expects {}",
                x.len(),
                self.d
            )));
        }
        Ok(self.route(x))
    }

    /// A tree with `leaves` empty tables and the structure of `self`.
    pub(crate) fn clear_tables(&mut self) {
        for l in &mut self.leaves {
            *l = LeafLabelTable::default();
        }
    }
}

#[inline]
pub(crate) fn project<T: Scalar>(directions: &[T], d: usize, rule: &SplitRule, x: &[T]) -> f64 {
    match *rule {
        SplitRule::Axis { axis, .. } => x[axis as usize].as_f64(),
        SplitRule::Direction { direction, .. } => {
            let i = direction as usize;
            dot(&directions[i * d..(i + 1) * d], x)
        }
    }
}

/// Threshold that splits sorted `values` at the median, or `None` when
/// every value is equal. Points with value `<=` threshold go left.
pub(crate) fn median_threshold(values: &mut [f64]) -> Option<f64> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    values.sort_unstable_by(f64::total_cmp);
    let (first, last) = (values[0], values[n - 1]);
    if first == last {
        return None;
    }
    let h = n / 2;
    let (lo, hi) = (values[h - 1], values[h]);
    if lo < hi {
        return Some(midpoint(lo, hi));
    }
    // median value is repeated: cut just above or just below the run
    if lo < last {
        Some(lo)
    } else {
        let below = values[..h].iter().rev().find(|&&v| v < lo).copied()?;
        Some(midpoint(below, lo))
    }
}

/// A cut `t` with `a <= t < b`, for `a < b`.
pub(crate) fn midpoint(a: f64, b: f64) -> f64 {
    let m = 0.5 * a + 0.5 * b;
    if m >= a && m < b {
        m
    } else {
        a
    }
}

/// Chooses a split for a node's points, or `None` to make it a leaf.
pub(crate) trait Splitter<T> {
    fn split(
        &mut self,
        points: &VectorSet<T>,
        members: &[u32],
        depth: usize,
        parts: &mut TreeParts<T>,
    ) -> Option<SplitRule>;
}

/// Direction pool and diagnostics a splitter may write to.
pub(crate) struct TreeParts<T> {
    pub d: usize,
    pub directions: Vec<T>,
    pub diagnostics: BuildDiagnostics,
}

impl<T: Scalar> TreeParts<T> {
    pub fn push_direction(&mut self, dir: &[f64]) -> u32 {
        let idx = self.directions.len() / self.d;
        self.directions.extend(dir.iter().map(|&v| T::from_f64_lossy(v)));
        idx as u32
    }

    pub fn project(&self, rule: &SplitRule, x: &[T]) -> f64 {
        project(&self.directions, self.d, rule, x)
    }
}

/// Median threshold for a rule over the members' projections.
pub(crate) fn median_rule<T: Scalar>(
    parts: &TreeParts<T>,
    points: &VectorSet<T>,
    members: &[u32],
    rule: SplitRule,
) -> Option<SplitRule> {
    let mut values: Vec<f64> = members
        .iter()
        .map(|&i| parts.project(&rule, points.row(i as usize)))
        .collect();
    median_threshold(&mut values).map(|t| rule.with_threshold(t))
}

struct Grower<'a, T, S> {
    points: &'a VectorSet<T>,
    max_leaf_size: usize,
    splitter: S,
    parts: TreeParts<T>,
    nodes: Vec<Node>,
    leaf_depths: Vec<u32>,
    assignment: Vec<u32>,
}

impl<T: Scalar, S: Splitter<T>> Grower<'_, T, S> {
    fn grow(&mut self, members: Vec<u32>, depth: usize) -> u32 {
        let id = self.nodes.len() as u32;
        let rule = if members.len() > self.max_leaf_size && depth < MAX_DEPTH {
            self.splitter
                .split(self.points, &members, depth, &mut self.parts)
        } else {
            None
        };
        let Some(rule) = rule else {
            return self.make_leaf(&members, depth);
        };
        let (left, right): (Vec<u32>, Vec<u32>) = members.iter().partition(|&&i| {
            self.parts.project(&rule, self.points.row(i as usize)) <= rule.threshold()
        });
        if left.is_empty() || right.is_empty() {
            return self.make_leaf(&members, depth);
        }
        drop(members);
        self.nodes.push(Node::Leaf { leaf: u32::MAX });
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[id as usize] = Node::Split {
            rule,
            left: l,
            right: r,
        };
        id
    }

    fn make_leaf(&mut self, members: &[u32], depth: usize) -> u32 {
        let leaf = self.leaf_depths.len() as u32;
        self.leaf_depths.push(depth as u32);
        for &i in members {
            self.assignment[i as usize] = leaf;
        }
        self.nodes.push(Node::Leaf { leaf });
        self.nodes.len() as u32 - 1
    }
}

pub(crate) fn grow_tree<T: Scalar, S: Splitter<T>>(
    points: &VectorSet<T>,
    params: &TreeBuildParams,
    splitter: S,
) -> (PartitionTree<T>, Vec<u32>) {
    let d = points.dim();
    let mut g = Grower {
        points,
        max_leaf_size: params.max_leaf_size,
        splitter,
        parts: TreeParts {
            d,
            directions: Vec::new(),
            diagnostics: BuildDiagnostics::default(),
        },
        nodes: Vec::new(),
        leaf_depths: Vec::new(),
        assignment: vec![0; points.len()],
    };
    g.grow((0..points.len() as u32).collect(), 0);
    let n_leaves = g.leaf_depths.len();
    let tree = PartitionTree {
        d,
        tree_type: params.tree_type,
        tree_id: params.seed,
        nodes: g.nodes,
        directions: g.parts.directions,
        leaves: vec![LeafLabelTable::default(); n_leaves],
        leaf_depths: g.leaf_depths,
        diagnostics: g.parts.diagnostics,
    };
    (tree, g.assignment)
}

pub(crate) fn rng_for(params: &TreeBuildParams) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(params.seed)
}

/// Builds one tree of `params.tree_type` and returns it with the leaf each
/// input point was assigned to during growth.
///
/// `labels` is required for classification trees and ignored otherwise.
pub fn build_tree_with_assignment<T: Scalar>(
    points: &VectorSet<T>,
    labels: Option<&GroundTruth>,
    params: &TreeBuildParams,
) -> Result<(PartitionTree<T>, Vec<u32>)> {
    params.validate(points.dim())?;
    match params.tree_type {
        TreeType::Rp => Ok(rp::grow(points, params)),
        TreeType::Kd => Ok(kd::grow(points, params)),
        TreeType::Pca => Ok(pca::grow(points, params)),
        TreeType::Classification => {
            let labels = labels.ok_or_else(|| {
                Error::usage("classification trees need nearest-neighbor labels")
            })?;
            classification::grow(points, labels, params)
        }
    }
}

pub fn build_tree<T: Scalar>(
    points: &VectorSet<T>,
    labels: Option<&GroundTruth>,
    params: &TreeBuildParams,
) -> Result<PartitionTree<T>> {
    build_tree_with_assignment(points, labels, params).map(|(t, _)| t)
}

#[cfg(test)]
pub(crate) mod test_util {
    use super::*;
    use rand::Rng;

    pub fn uniform(n: usize, d: usize, seed: u64) -> VectorSet<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VectorSet::new(d, (0..n * d).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
    }

    pub fn leaf_sizes(assignment: &[u32], n_leaves: usize) -> Vec<usize> {
        let mut s = vec![0; n_leaves];
        for &a in assignment {
            s[a as usize] += 1;
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::test_util::*;
    use super::*;

    #[test]
    fn median_threshold_cases() {
        assert_eq!(median_threshold(&mut [3.0, 1.0, 2.0, 4.0]), Some(2.5));
        assert_eq!(median_threshold(&mut [1.0, 1.0]), None);
        assert_eq!(median_threshold(&mut [5.0]), None);
        // repeated median: everything <= 2 goes left
        assert_eq!(median_threshold(&mut [2.0, 2.0, 2.0, 3.0]), Some(2.0));
        // repeated top run: cut below it
        assert_eq!(median_threshold(&mut [1.0, 3.0, 3.0, 3.0]), Some(2.0));
    }

    #[test]
    fn midpoint_of_adjacent_floats_stays_left() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let m = midpoint(a, b);
        assert!(m >= a && m < b);
    }

    #[test]
    fn partition_property_for_all_types() {
        let pts = uniform(600, 5, 1);
        let labels = crate::knn::exact_knn_self(&pts, 3).unwrap();
        let queries = uniform(10_000, 5, 2);
        for tt in TreeType::ALL {
            let params = TreeBuildParams {
                tree_type: tt,
                max_leaf_size: 40,
                k: 3,
                seed: 9,
                ..Default::default()
            };
            let (tree, assign) = build_tree_with_assignment(&pts, Some(&labels), &params).unwrap();
            let internal = tree.nodes.iter().filter(|n| matches!(n, Node::Split { .. })).count();
            assert_eq!(internal + 1, tree.n_leaves(), "{tt}");
            let mut hits = vec![0usize; tree.n_leaves()];
            for q in queries.rows() {
                hits[tree.route(q)] += 1;
            }
            assert_eq!(hits.iter().sum::<usize>(), queries.len());
            // build bookkeeping agrees with routing
            for (i, p) in pts.rows().enumerate() {
                assert_eq!(tree.route(p) as u32, assign[i], "{tt} point {i}");
            }
            let sizes = leaf_sizes(&assign, tree.n_leaves());
            assert_eq!(sizes.iter().sum::<usize>(), pts.len());
            assert!(sizes.iter().all(|&s| s <= 40), "{tt}");
        }
    }

    #[test]
    fn single_leaf_routes_everything_to_zero() {
        let pts = uniform(10, 3, 0);
        for tt in [TreeType::Rp, TreeType::Kd, TreeType::Pca] {
            let params = TreeBuildParams {
                tree_type: tt,
                max_leaf_size: 10,
                ..Default::default()
            };
            let tree = build_tree(&pts, None, &params).unwrap();
            assert_eq!(tree.n_leaves(), 1);
            assert_eq!(tree.route(&[5.0, -3.0, 100.0]), 0);
        }
    }

    #[test]
    fn validation() {
        let pts = uniform(10, 3, 0);
        let mut p = TreeBuildParams::new(TreeType::Classification);
        assert!(build_tree(&pts, None, &p).is_err());
        p.mtry = Some(4);
        p.tree_type = TreeType::Rp;
        assert!(build_tree(&pts, None, &p).is_err());
        p.mtry = None;
        p.max_leaf_size = 0;
        assert!(build_tree(&pts, None, &p).is_err());
        let t = build_tree(&pts, None, &TreeBuildParams::default()).unwrap();
        assert!(t.try_route(&[1.0f32]).is_err());
    }

    #[test]
    fn tree_type_parsing() {
        for tt in TreeType::ALL {
            assert_eq!(tt.as_str().parse::<TreeType>().unwrap(), tt);
            assert_eq!(TreeType::from_code(tt.code()), Some(tt));
        }
        assert!("oak".parse::<TreeType>().is_err());
    }
}

impl<T, S: Splitter<T>> Splitter<T> for &mut S {
    fn split(
        &mut self,
        points: &VectorSet<T>,
        members: &[u32],
        depth: usize,
        parts: &mut TreeParts<T>,
    ) -> Option<SplitRule> {
        (**self).split(points, members, depth, parts)
    }
}
