use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::kd::{ranked_axes, variances};
use super::{grow_tree, median_rule, rng_for, PartitionTree, SplitRule, Splitter, TreeBuildParams, TreeParts};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::vectors::VectorSet;

/// Nodes larger than this estimate their principal direction from a random
/// subsample of this many points.
pub const PCA_SAMPLE_SIZE: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerIteration {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 100,
        }
    }
}

/// PCA tree: median splits along the top principal direction of each node.
pub fn build_pca_tree<T: Scalar>(points: &VectorSet<T>, params: &TreeBuildParams) -> Result<PartitionTree<T>> {
    params.validate(points.dim())?;
    Ok(grow(points, params).0)
}

pub(super) fn grow<T: Scalar>(points: &VectorSet<T>, params: &TreeBuildParams) -> (PartitionTree<T>, Vec<u32>) {
    let splitter = PcaSplitter {
        rng: rng_for(params),
        power: PowerIteration::default(),
    };
    grow_tree(points, params, splitter)
}

/// Unit-norm top eigenvector of the covariance of `rows` by power iteration
/// from a random start. `None` if the iteration does not converge or the
/// covariance vanishes.
///
/// Converged means the Rayleigh quotient changed by at most
/// `tolerance` relative, or the iterate moved by at most `tolerance`.
pub fn principal_direction<T: Scalar>(
    rows: &[&[T]],
    power: PowerIteration,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<f64>> {
    let n = rows.len();
    let d = rows.first()?.len();
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r.iter()) {
            *m += v.as_f64();
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<f64> = rows
        .iter()
        .flat_map(|r| r.iter().zip(&mean).map(|(v, m)| v.as_f64() - m))
        .collect();

    // explicit covariance when it is cheaper than two passes over the rows
    let cov = (d <= n).then(|| {
        let mut c = vec![0.0; d * d];
        for r in centered.chunks_exact(d) {
            for a in 0..d {
                let ra = r[a];
                let row = &mut c[a * d..a * d + d];
                for b in a..d {
                    row[b] += ra * r[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                c[a * d + b] = c[b * d + a];
            }
        }
        c
    });
    let apply = |v: &[f64], out: &mut [f64]| match &cov {
        Some(c) => {
            for (o, row) in out.iter_mut().zip(c.chunks_exact(d)) {
                *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
            }
        }
        None => {
            out.iter_mut().for_each(|o| *o = 0.0);
            for r in centered.chunks_exact(d) {
                let p: f64 = r.iter().zip(v).map(|(a, b)| a * b).sum();
                for (o, a) in out.iter_mut().zip(r) {
                    *o += p * a;
                }
            }
        }
    };

    let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    normalize(&mut v)?;
    let mut w = vec![0.0; d];
    let mut prev_lambda = f64::NAN;
    for _ in 0..power.max_iterations {
        apply(&v, &mut w);
        let lambda: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
        normalize(&mut w)?;
        let moved = w.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        std::mem::swap(&mut v, &mut w);
        if moved <= power.tolerance || (lambda - prev_lambda).abs() <= power.tolerance * lambda.abs() {
            return Some(v);
        }
        prev_lambda = lambda;
    }
    None
}

fn normalize(v: &mut [f64]) -> Option<()> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(())
}

struct PcaSplitter {
    rng: ChaCha8Rng,
    power: PowerIteration,
}

impl<T: Scalar> Splitter<T> for PcaSplitter {
    fn split(&mut self, points: &VectorSet<T>, members: &[u32], _depth: usize, parts: &mut TreeParts<T>) -> Option<SplitRule> {
        let rows: Vec<&[T]> = if members.len() > PCA_SAMPLE_SIZE {
            sample(&mut self.rng, members.len(), PCA_SAMPLE_SIZE)
                .into_iter()
                .map(|i| points.row(members[i] as usize))
                .collect()
        } else {
            members.iter().map(|&i| points.row(i as usize)).collect()
        };
        let rule = match principal_direction(&rows, self.power, &mut self.rng) {
            Some(dir) => SplitRule::Direction {
                direction: parts.push_direction(&dir),
                threshold: 0.0,
            },
            None => {
                parts.diagnostics.power_iteration_fallbacks += 1;
                let axis = *ranked_axes(&variances(points, members)).first()?;
                SplitRule::Axis {
                    axis: axis as u32,
                    threshold: 0.0,
                }
            }
        };
        median_rule(parts, points, members, rule)
    }
}
