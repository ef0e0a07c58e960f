//! Multi-class classification trees grown on nearest-neighbor labels.
//!
//! A training point's k neighbor labels are treated as k draws from one
//! categorical distribution per leaf. Each node takes the axis-aligned split
//! maximizing the multinomial log-likelihood of its two children,
//!
//! ```text
//! sum_j vL_j ln(vL_j / (k NL)) + sum_j vR_j ln(vR_j / (k NR))
//! ```
//!
//! with `0 ln 0 = 0`, searched over `mtry` randomly sampled dimensions.

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;

use super::{grow_tree, midpoint, rng_for, PartitionTree, SplitRule, Splitter, TreeBuildParams, TreeParts};
use crate::error::{Error, Result};
use crate::knn::GroundTruth;
use crate::scalar::Scalar;
use crate::vectors::VectorSet;

/// Relative slack under which a split does not count as an improvement.
const IMPROVEMENT_EPS: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitChoice {
    pub axis: usize,
    pub threshold: f64,
    /// Log-likelihood of the two children.
    pub criterion: f64,
}

pub fn build_classification_tree<T: Scalar>(
    points: &VectorSet<T>,
    labels: &GroundTruth,
    params: &TreeBuildParams,
) -> Result<PartitionTree<T>> {
    params.validate(points.dim())?;
    grow(points, labels, params).map(|(t, _)| t)
}

pub(super) fn grow<T: Scalar>(
    points: &VectorSet<T>,
    labels: &GroundTruth,
    params: &TreeBuildParams,
) -> Result<(PartitionTree<T>, Vec<u32>)> {
    labels.validate(points.len())?;
    if labels.k != params.k {
        return Err(Error::usage(format!(
            "labels have k = {}, params expect k = {}",
            labels.k, params.k
        )));
    }
    let splitter = ClassSplitter {
        sweep: Sweep::new(labels, points.len()),
        rng: rng_for(params),
        mtry: params.mtry_for(points.dim()),
    };
    Ok(grow_tree(points, params, splitter))
}

/// Best split of `members` over the listed dimensions, tried in order;
/// ties keep the earliest (dimension order, then lowest threshold).
///
/// Returns the node's own log-likelihood and the best split, if any
/// dimension has two distinct values.
pub fn best_split<T: Scalar>(
    points: &VectorSet<T>,
    labels: &GroundTruth,
    members: &[u32],
    dims: &[usize],
) -> (f64, Option<SplitChoice>) {
    let mut sweep = Sweep::new(labels, points.len());
    sweep.best(points, members, dims)
}

fn xlogx(c: f64) -> f64 {
    if c > 0.0 {
        c * c.ln()
    } else {
        0.0
    }
}

/// Scratch for incremental criterion sweeps.
struct Sweep<'a> {
    labels: &'a GroundTruth,
    k: f64,
    /// `c ln c` for every count a node can reach
    xlogx: Vec<f64>,
    total: Vec<u32>,
    left: Vec<u32>,
    touched: Vec<u32>,
    order: Vec<(f64, u32)>,
}

impl<'a> Sweep<'a> {
    fn new(labels: &'a GroundTruth, n: usize) -> Self {
        let m = labels
            .rows
            .iter()
            .flat_map(|r| r.indices.iter())
            .copied()
            .max()
            .map_or(0, |j| j as usize + 1);
        Self::with_label_space(labels, n, m)
    }

    fn with_label_space(labels: &'a GroundTruth, n: usize, m: usize) -> Self {
        Self {
            labels,
            k: labels.k as f64,
            xlogx: (0..=n).map(|c| xlogx(c as f64)).collect(),
            total: vec![0; m],
            left: vec![0; m],
            touched: Vec::new(),
            order: Vec::new(),
        }
    }

    fn best<T: Scalar>(&mut self, points: &VectorSet<T>, members: &[u32], dims: &[usize]) -> (f64, Option<SplitChoice>) {
        let n = members.len();
        self.touched.clear();
        for &i in members {
            for &j in self.labels.labels(i as usize) {
                let c = &mut self.total[j as usize];
                if *c == 0 {
                    self.touched.push(j);
                }
                *c += 1;
            }
        }
        let s_total: f64 = self.touched.iter().map(|&j| self.xlogx[self.total[j as usize] as usize]).sum();
        let parent = s_total - xlogx(self.k * n as f64);

        let mut best: Option<SplitChoice> = None;
        for &axis in dims {
            self.order.clear();
            self.order
                .extend(members.iter().map(|&i| (points.row(i as usize)[axis].as_f64(), i)));
            self.order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let (mut s_left, mut s_right) = (0.0, s_total);
            for pos in 0..n - 1 {
                let (value, i) = self.order[pos];
                for &j in self.labels.labels(i as usize) {
                    let j = j as usize;
                    let (l, r) = (self.left[j] as usize, (self.total[j] - self.left[j]) as usize);
                    s_left += self.xlogx[l + 1] - self.xlogx[l];
                    s_right += self.xlogx[r - 1] - self.xlogx[r];
                    self.left[j] += 1;
                }
                let next = self.order[pos + 1].0;
                if value < next {
                    let n_left = (pos + 1) as f64;
                    let n_right = (n - pos - 1) as f64;
                    let crit = s_left - xlogx(self.k * n_left) + s_right - xlogx(self.k * n_right);
                    if best.is_none_or(|b| crit > b.criterion) {
                        best = Some(SplitChoice {
                            axis,
                            threshold: midpoint(value, next),
                            criterion: crit,
                        });
                    }
                }
            }
            for &j in &self.touched {
                self.left[j as usize] = 0;
            }
        }
        for &j in &self.touched {
            self.total[j as usize] = 0;
        }
        (parent, best)
    }
}

struct ClassSplitter<'a> {
    sweep: Sweep<'a>,
    rng: ChaCha8Rng,
    mtry: usize,
}

impl<T: Scalar> Splitter<T> for ClassSplitter<'_> {
    fn split(&mut self, points: &VectorSet<T>, members: &[u32], _depth: usize, _parts: &mut TreeParts<T>) -> Option<SplitRule> {
        let dims = sample(&mut self.rng, points.dim(), self.mtry).into_vec();
        let (parent, choice) = self.sweep.best(points, members, &dims);
        let choice = choice?;
        if choice.criterion - parent <= IMPROVEMENT_EPS * parent.abs().max(1.0) {
            return None;
        }
        Some(SplitRule::Axis {
            axis: choice.axis as u32,
            threshold: choice.threshold,
        })
    }
}
