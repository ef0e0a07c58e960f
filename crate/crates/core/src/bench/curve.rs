//! Recall as a function of the selection threshold, without re-ranking.
//!
//! Re-ranking the candidate set exactly returns every true neighbor that
//! made it into the set, so the recall of a query at threshold `tau` is the
//! fraction of its true neighbors scoring above `tau`. Pooling the scores of
//! all queries gives the mean candidate count and mean recall at any
//! threshold by two binary searches.

use rayon::prelude::*;

use crate::knn::GroundTruth;
use crate::model::{EnsembleIndex, Scale};
use crate::scalar::Scalar;
use crate::vectors::VectorSet;

/// A realizable threshold with its mean candidate count and mean recall.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OperatingPoint {
    pub tau: f64,
    pub candidates: f64,
    pub recall: f64,
}

#[derive(Clone, Debug)]
pub struct OperatingCurve {
    /// Every positive score of every query, ascending.
    scores: Vec<f64>,
    /// Score of every true neighbor of every query (zero if unscored), ascending.
    hits: Vec<f64>,
    n_queries: usize,
    k: usize,
}

impl OperatingCurve {
    pub fn measure<T: Scalar>(index: &EnsembleIndex<T>, queries: &VectorSet<T>, truth: &GroundTruth, scale: Scale) -> Self {
        assert_eq!(queries.len(), truth.len(), "one ground-truth row per query");
        let per_query: Vec<(Vec<f64>, Vec<f64>)> = (0..queries.len())
            .into_par_iter()
            .map_init(
                || index.accumulator(),
                |acc, i| {
                    acc.score(index, queries.row(i), scale);
                    let all: Vec<f64> = acc.iter().map(|(_, s)| s).collect();
                    let hits: Vec<f64> = truth.rows[i].indices.iter().map(|&j| acc.get(j)).collect();
                    (all, hits)
                },
            )
            .collect();
        let mut scores = Vec::new();
        let mut hits = Vec::new();
        for (a, h) in per_query {
            scores.extend(a);
            hits.extend(h);
        }
        scores.sort_unstable_by(f64::total_cmp);
        hits.sort_unstable_by(f64::total_cmp);
        Self {
            scores,
            hits,
            n_queries: queries.len(),
            k: truth.k,
        }
    }

    pub fn n_queries(&self) -> usize {
        self.n_queries
    }

    /// Mean number of labels scoring strictly above `tau`.
    pub fn candidates_at(&self, tau: f64) -> f64 {
        let above = self.scores.len() - self.scores.partition_point(|&s| s <= tau);
        above as f64 / self.n_queries as f64
    }

    /// Mean recall at `tau`.
    pub fn recall_at(&self, tau: f64) -> f64 {
        let above = self.hits.len() - self.hits.partition_point(|&s| s <= tau);
        above as f64 / (self.n_queries * self.k) as f64
    }

    pub fn at(&self, tau: f64) -> OperatingPoint {
        OperatingPoint {
            tau,
            candidates: self.candidates_at(tau),
            recall: self.recall_at(tau),
        }
    }

    /// Realizable threshold whose mean candidate count is closest to
    /// `target`, or `None` if even that one misses by more than
    /// `band * target`.
    pub fn match_candidates(&self, target: f64, band: f64) -> Option<OperatingPoint> {
        let len = self.scores.len();
        let want = (target * self.n_queries as f64).round().clamp(0.0, len as f64) as usize;
        let cut = len - want;
        // A cut position is realizable when it falls between distinct values.
        let (lo, hi) = if cut == 0 || cut == len {
            (cut, cut)
        } else {
            let v = self.scores[cut];
            let start = self.scores.partition_point(|&s| s < v);
            if start == cut {
                (cut, cut)
            } else {
                (start, self.scores.partition_point(|&s| s <= v))
            }
        };
        let tau_for = |b: usize| if b == 0 { 0.0 } else { self.scores[b - 1] };
        let best = [lo, hi]
            .into_iter()
            .map(|b| self.at(tau_for(b)))
            .min_by(|a, b| (a.candidates - target).abs().total_cmp(&(b.candidates - target).abs()))?;
        ((best.candidates - target).abs() <= band * target).then_some(best)
    }

    /// Threshold at quantile `q` of the pooled positive scores; `q = 0` keeps
    /// every scored label.
    pub fn quantile(&self, q: f64) -> f64 {
        if q <= 0.0 || self.scores.is_empty() {
            return 0.0;
        }
        let i = ((self.scores.len() - 1) as f64 * q.min(1.0)).floor() as usize;
        self.scores[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{build, IndexParams, Searcher};
    use crate::io::SyntheticRecipe;
    use crate::knn::exact_knn;
    use crate::metrics::recall;
    use crate::model::SelectionParams;
    use crate::trees::{TreeBuildParams, TreeType};
    use std::sync::Arc;

    fn setup() -> (EnsembleIndex<f32>, VectorSet<f32>, GroundTruth) {
        let corpus = Arc::new(SyntheticRecipe::gaussian(1.0, 1500, 8, 1).generate::<f32>().unwrap());
        let queries = SyntheticRecipe::gaussian(1.0, 60, 8, 2).generate::<f32>().unwrap();
        let truth = exact_knn(&corpus, &queries, 10).unwrap();
        let params = IndexParams {
            tree: TreeBuildParams {
                tree_type: TreeType::Rp,
                max_leaf_size: 40,
                seed: 3,
                ..Default::default()
            },
            n_trees: 6,
            ..Default::default()
        };
        (build(corpus, None, &params).unwrap(), queries, truth)
    }

    #[test]
    fn curve_matches_reranked_queries() {
        let (idx, queries, truth) = setup();
        for scale in [Scale::MeanProbability, Scale::RawCount] {
            let curve = OperatingCurve::measure(&idx, &queries, &truth, scale);
            for q in [0.0, 0.3, 0.7, 0.95] {
                let tau = curve.quantile(q);
                let sel = SelectionParams::new(tau, scale);
                let mut s = Searcher::new(&idx);
                let (mut r, mut c) = (0.0, 0.0);
                for (i, x) in queries.rows().enumerate() {
                    let res = s.query(x, 10, &sel);
                    r += recall(&res.neighbors.indices, &truth.rows[i]);
                    c += res.candidate_count as f64;
                }
                let n = queries.len() as f64;
                assert!((curve.recall_at(tau) - r / n).abs() < 1e-12);
                assert!((curve.candidates_at(tau) - c / n).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matching_picks_closest_realizable_count() {
        let (idx, queries, truth) = setup();
        let curve = OperatingCurve::measure(&idx, &queries, &truth, Scale::RawCount);
        let full = curve.candidates_at(0.0);
        let p = curve.match_candidates(full, 0.0).unwrap();
        assert_eq!(p.candidates, full);
        for target in [20.0, 50.0, 100.0] {
            if let Some(p) = curve.match_candidates(target, 0.05) {
                assert!((p.candidates - target).abs() <= 0.05 * target);
                assert_eq!(p, curve.at(p.tau));
            }
        }
        // integer scores: only thresholds 0..T are realizable
        for tau in 0..6 {
            let p = curve.at(tau as f64);
            assert_eq!(curve.match_candidates(p.candidates, 0.0).unwrap().candidates, p.candidates);
        }
        assert!(curve.match_candidates(full * 3.0, 0.05).is_none());
    }
}
