use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{grow_tree, median_rule, rng_for, PartitionTree, SplitRule, Splitter, TreeBuildParams, TreeParts};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::vectors::VectorSet;

/// k-d tree: median splits on a high-variance coordinate axis.
pub fn build_kd_tree<T: Scalar>(points: &VectorSet<T>, params: &TreeBuildParams) -> Result<PartitionTree<T>> {
    params.validate(points.dim())?;
    Ok(grow(points, params).0)
}

pub(super) fn grow<T: Scalar>(points: &VectorSet<T>, params: &TreeBuildParams) -> (PartitionTree<T>, Vec<u32>) {
    let splitter = KdSplitter {
        rng: rng_for(params),
        randomized: params.randomized,
    };
    grow_tree(points, params, splitter)
}

/// Per-coordinate variance of the given rows, in `f64`.
pub(super) fn variances<T: Scalar>(points: &VectorSet<T>, members: &[u32]) -> Vec<f64> {
    let d = points.dim();
    let n = members.len() as f64;
    let mut mean = vec![0.0; d];
    for &i in members {
        for (m, v) in mean.iter_mut().zip(points.row(i as usize)) {
            *m += v.as_f64();
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for &i in members {
        for ((s, v), m) in var.iter_mut().zip(points.row(i as usize)).zip(&mean) {
            let t = v.as_f64() - m;
            *s += t * t;
        }
    }
    var.iter_mut().for_each(|s| *s /= n);
    var
}

/// Axes with positive variance, highest first (ties to the lower axis).
pub(super) fn ranked_axes(var: &[f64]) -> Vec<usize> {
    let mut axes: Vec<usize> = (0..var.len()).filter(|&a| var[a] > 0.0).collect();
    axes.sort_by(|&a, &b| var[b].total_cmp(&var[a]).then(a.cmp(&b)));
    axes
}

struct KdSplitter {
    rng: ChaCha8Rng,
    randomized: bool,
}

impl<T: Scalar> Splitter<T> for KdSplitter {
    fn split(&mut self, points: &VectorSet<T>, members: &[u32], _depth: usize, parts: &mut TreeParts<T>) -> Option<SplitRule> {
        let var = variances(points, members);
        let axes = ranked_axes(&var);
        if axes.is_empty() {
            return None;
        }
        let axis = if self.randomized {
            let top = points.dim().div_ceil(10).min(axes.len());
            axes[self.rng.random_range(0..top)]
        } else {
            axes[0]
        };
        median_rule(
            parts,
            points,
            members,
            SplitRule::Axis {
                axis: axis as u32,
                threshold: 0.0,
            },
        )
    }
}
