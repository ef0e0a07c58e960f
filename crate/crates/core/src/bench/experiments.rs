//! Desk-scale versions of the distribution-shift and training-set-scale
//! experiments. Both compare classification-tree ensembles by recall at
//! matched mean candidate-set size and emit timed frontier records.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::{build_with_labels, IndexParams};
use crate::io::SyntheticRecipe;
use crate::knn::{exact_knn, exact_knn_self, GroundTruth};
use crate::model::{EnsembleIndex, Mode, Scale, SelectionParams};
use crate::scalar::Scalar;
use crate::trees::{splitmix64, TreeBuildParams, TreeType};
use crate::vectors::VectorSet;

use super::{mean_sd, pareto_frontier, time_queries, Mtry, OperatingCurve, OperatingPoint, Tradeoff};

/// Recall of one model at one candidate budget.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchedRecall {
    /// `sigma` or training multiplier.
    pub setting: f64,
    pub algorithm: String,
    pub seed: u64,
    /// Target mean candidate count.
    pub budget: f64,
    /// `None` when no threshold lands within the matching band.
    pub point: Option<OperatingPoint>,
}

fn data_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed.wrapping_mul(0x9e37_79b9).wrapping_add(stream))
}

fn class_params(n_trees: usize, leaf: usize, a: usize, k: usize, seed: u64) -> IndexParams {
    IndexParams {
        tree: TreeBuildParams {
            tree_type: TreeType::Classification,
            max_leaf_size: leaf,
            mtry: Some(a),
            seed,
            k,
            randomized: true,
        },
        n_trees,
        k,
        mode: Mode::Classification,
        selection: SelectionParams::default(),
    }
}

/// Timed runs at the score quantiles of `index`, as `(tau, run)` pairs.
fn timed_sweep<T: Scalar>(
    index: &EnsembleIndex<T>,
    curve: &OperatingCurve,
    queries: &VectorSet<T>,
    truth: &GroundTruth,
    quantiles: &[f64],
) -> Vec<(f64, super::TimedRun)> {
    let mut taus: Vec<f64> = quantiles.iter().map(|&q| curve.quantile(q)).collect();
    taus.dedup();
    taus.into_iter()
        .map(|tau| {
            let sel = SelectionParams::new(tau, Scale::MeanProbability);
            (tau, time_queries(index, queries, truth, &sel))
        })
        .collect()
}

fn matched<'a>(
    curve: &'a OperatingCurve,
    budgets: &'a [f64],
    band: f64,
    setting: f64,
    algorithm: &'a str,
    seed: u64,
) -> impl Iterator<Item = MatchedRecall> + 'a {
    budgets.iter().map(move |&b| MatchedRecall {
        setting,
        algorithm: algorithm.to_string(),
        seed,
        budget: b,
        point: curve.match_candidates(b, band),
    })
}

/// Per-seed mean over budgets of `recall(a) - recall(b)` at `setting`;
/// `None` for a seed where some budget could not be matched.
fn paired_gaps(m: &[MatchedRecall], setting: f64, a: &str, b: &str) -> Vec<(u64, Option<f64>)> {
    let mut seeds: Vec<u64> = m.iter().filter(|r| r.setting == setting).map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    seeds
        .into_iter()
        .map(|seed| {
            let pick = |alg: &str| -> Vec<&MatchedRecall> {
                m.iter()
                    .filter(|r| r.setting == setting && r.seed == seed && r.algorithm == alg)
                    .collect()
            };
            let (ra, rb) = (pick(a), pick(b));
            let gaps: Option<Vec<f64>> = ra
                .iter()
                .map(|x| {
                    let y = rb.iter().find(|y| y.budget == x.budget)?;
                    Some(x.point?.recall - y.point?.recall)
                })
                .collect();
            let gap = gaps.filter(|g| !g.is_empty()).map(|g| g.iter().sum::<f64>() / g.len() as f64);
            (seed, gap)
        })
        .collect()
}

/// Setup of the distribution-shift experiment: a uniform corpus, queries
/// from a centered Gaussian, and one model trained on a Gaussian sample
/// against one trained on the corpus itself.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftConfig {
    pub corpus_n: usize,
    pub train_n: usize,
    pub n_queries: usize,
    pub d: usize,
    /// Corpus coordinates are uniform on `(-half_width, half_width)`.
    pub half_width: f64,
    pub sigmas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub n_trees: usize,
    pub leaf: usize,
    pub mtry: Mtry,
    pub k: usize,
    pub tau_quantiles: Vec<f64>,
    /// Matching budgets as fractions of the corpus size. A model trained on
    /// a concentrated query sample scores few labels, so budgets must stay
    /// within the smallest support being compared.
    pub budgets: Vec<f64>,
    /// Relative tolerance of candidate-count matching.
    pub band: f64,
}

impl ShiftConfig {
    /// Full size is a 100k-point corpus in 500 dimensions with 100k
    /// training points; `factor` scales the point counts and the dimension.
    pub fn scaled(factor: f64) -> Self {
        let s = |v: f64| ((v * factor).round() as usize).max(1);
        Self {
            corpus_n: s(100_000.0),
            train_n: s(100_000.0),
            n_queries: 1000,
            d: s(500.0),
            half_width: 10.0,
            sigmas: vec![1.0, 2.5, 5.0],
            seeds: vec![1, 2, 3, 4, 5],
            n_trees: 10,
            leaf: 32,
            mtry: Mtry::Sqrt,
            k: 10,
            tau_quantiles: vec![0.0, 0.5, 0.8, 0.9, 0.95, 0.98, 0.99, 0.995],
            budgets: vec![0.001, 0.002, 0.005],
            band: 0.05,
        }
    }
}

/// One CSV row of the distribution-shift experiment.
#[derive(Clone, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ShiftRecord {
    pub sigma: f64,
    pub algorithm: String,
    #[serde(rename = "T")]
    pub n_trees: usize,
    pub leaf: usize,
    pub a: usize,
    pub tau: f64,
    pub scale: Scale,
    pub recall: f64,
    pub qtime: f64,
    pub candidates: f64,
    pub seed: u64,
}

impl Tradeoff for ShiftRecord {
    fn recall(&self) -> f64 {
        self.recall
    }

    fn qtime(&self) -> f64 {
        self.qtime
    }
}

pub const SHIFT_QUERY_TRAINED: &str = "rf-class";
pub const SHIFT_CORPUS_TRAINED: &str = "rf-class-corpus";

#[derive(Clone, Debug)]
pub struct ShiftOutcome {
    pub records: Vec<ShiftRecord>,
    pub matched: Vec<MatchedRecall>,
}

impl ShiftOutcome {
    /// Per-seed recall gap (query-trained minus corpus-trained) at `sigma`,
    /// averaged over budgets.
    pub fn gaps(&self, sigma: f64) -> Vec<(u64, Option<f64>)> {
        paired_gaps(&self.matched, sigma, SHIFT_QUERY_TRAINED, SHIFT_CORPUS_TRAINED)
    }

    /// Mean and standard deviation of the gap over seeds, if every seed
    /// matched every budget.
    pub fn gap_stats(&self, sigma: f64) -> Option<(f64, f64)> {
        let g: Option<Vec<f64>> = self.gaps(sigma).into_iter().map(|(_, g)| g).collect();
        g.filter(|g| !g.is_empty()).map(|g| mean_sd(&g))
    }

    /// Frontier of each (sigma, algorithm) pair, pooled over seeds.
    pub fn frontiers(&self) -> Vec<(f64, String, Vec<ShiftRecord>)> {
        let mut keys: Vec<(f64, String)> = self.records.iter().map(|r| (r.sigma, r.algorithm.clone())).collect();
        keys.dedup();
        keys.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        keys.dedup();
        keys.into_iter()
            .map(|(s, alg)| {
                let rs: Vec<ShiftRecord> =
                    self.records.iter().filter(|r| r.sigma == s && r.algorithm == alg).cloned().collect();
                (s, alg, pareto_frontier(&rs))
            })
            .collect()
    }
}

pub fn experiment_distribution_shift(cfg: &ShiftConfig) -> Result<ShiftOutcome> {
    if cfg.sigmas.is_empty() || cfg.seeds.is_empty() || cfg.budgets.is_empty() {
        return Err(Error::usage("shift experiment needs sigmas, seeds and budgets"));
    }
    let a = cfg.mtry.resolve(cfg.d);
    let budgets: Vec<f64> = cfg.budgets.iter().map(|f| f * cfg.corpus_n as f64).collect();
    let mut records = Vec::new();
    let mut matched_all = Vec::new();
    for &seed in &cfg.seeds {
        let corpus: Arc<VectorSet<f32>> = Arc::new(
            SyntheticRecipe::uniform(-cfg.half_width, cfg.half_width, cfg.corpus_n, cfg.d, data_seed(seed, 1))
                .generate()?,
        );
        let self_labels = exact_knn_self(&corpus, cfg.k)?;
        let params = class_params(cfg.n_trees, cfg.leaf, a, cfg.k, seed);
        let corpus_model = build_with_labels(corpus.clone(), &corpus, Some(&self_labels), &params)?;
        for &sigma in &cfg.sigmas {
            let train = SyntheticRecipe::gaussian(sigma, cfg.train_n, cfg.d, data_seed(seed, 2)).generate::<f32>()?;
            let queries = SyntheticRecipe::gaussian(sigma, cfg.n_queries, cfg.d, data_seed(seed, 3)).generate::<f32>()?;
            let truth = exact_knn(&corpus, &queries, cfg.k)?;
            let labels = exact_knn(&corpus, &train, cfg.k)?;
            let query_model = build_with_labels(corpus.clone(), &train, Some(&labels), &params)?;
            for (alg, model) in [(SHIFT_QUERY_TRAINED, &query_model), (SHIFT_CORPUS_TRAINED, &corpus_model)] {
                let curve = OperatingCurve::measure(model, &queries, &truth, Scale::MeanProbability);
                matched_all.extend(matched(&curve, &budgets, cfg.band, sigma, alg, seed));
                for (tau, run) in timed_sweep(model, &curve, &queries, &truth, &cfg.tau_quantiles) {
                    records.push(ShiftRecord {
                        sigma,
                        algorithm: alg.to_string(),
                        n_trees: cfg.n_trees,
                        leaf: cfg.leaf,
                        a,
                        tau,
                        scale: Scale::MeanProbability,
                        recall: run.recall,
                        qtime: run.qtime,
                        candidates: run.candidates,
                        seed,
                    });
                }
            }
            log::info!("shift sigma={sigma} seed={seed} done");
        }
    }
    Ok(ShiftOutcome {
        records,
        matched: matched_all,
    })
}

/// Setup of the training-set-scale experiment: a Gaussian corpus and
/// nested training sets of `multiplier * corpus_n` points from the same
/// distribution, the first `corpus_n` of which are the corpus itself.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleConfig {
    pub corpus_n: usize,
    pub n_queries: usize,
    pub d: usize,
    pub multipliers: Vec<usize>,
    pub seeds: Vec<u64>,
    pub n_trees: usize,
    pub leaf: usize,
    pub mtry: Mtry,
    pub k: usize,
    pub tau_quantiles: Vec<f64>,
    pub budgets: Vec<f64>,
    pub band: f64,
}

impl Default for ScaleConfig {
    fn default() -> Self {
        Self {
            corpus_n: 10_000,
            n_queries: 1000,
            d: 32,
            multipliers: vec![1, 4, 16],
            seeds: vec![1, 2, 3, 4, 5],
            n_trees: 10,
            leaf: 32,
            mtry: Mtry::Sqrt,
            k: 10,
            tau_quantiles: vec![0.0, 0.5, 0.8, 0.9, 0.95, 0.98, 0.99, 0.995],
            budgets: vec![0.01, 0.02, 0.05],
            band: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ScaleRecord {
    pub multiplier: usize,
    pub algorithm: String,
    #[serde(rename = "T")]
    pub n_trees: usize,
    pub leaf: usize,
    pub a: usize,
    pub tau: f64,
    pub scale: Scale,
    pub recall: f64,
    pub qtime: f64,
    pub candidates: f64,
    pub seed: u64,
    /// Point-weighted mean leaf depth of the ensemble.
    pub depth: f64,
}

impl Tradeoff for ScaleRecord {
    fn recall(&self) -> f64 {
        self.recall
    }

    fn qtime(&self) -> f64 {
        self.qtime
    }
}

#[derive(Clone, Debug)]
pub struct ScaleOutcome {
    pub records: Vec<ScaleRecord>,
    pub matched: Vec<MatchedRecall>,
    /// `(multiplier, seed, mean leaf depth)`.
    pub depths: Vec<(usize, u64, f64)>,
}

impl ScaleOutcome {
    /// Seed-mean recall at each budget for `multiplier`; `None` if some
    /// seed missed the band.
    pub fn mean_recall(&self, multiplier: usize) -> Option<Vec<f64>> {
        let mut budgets: Vec<f64> = self.matched.iter().map(|m| m.budget).collect();
        budgets.sort_by(f64::total_cmp);
        budgets.dedup();
        budgets
            .into_iter()
            .map(|b| {
                let r: Option<Vec<f64>> = self
                    .matched
                    .iter()
                    .filter(|m| m.setting == multiplier as f64 && m.budget == b)
                    .map(|m| m.point.map(|p| p.recall))
                    .collect();
                r.filter(|r| !r.is_empty()).map(|r| mean_sd(&r).0)
            })
            .collect()
    }

    pub fn mean_depth(&self, multiplier: usize) -> f64 {
        let d: Vec<f64> = self.depths.iter().filter(|x| x.0 == multiplier).map(|x| x.2).collect();
        mean_sd(&d).0
    }

    pub fn frontiers(&self) -> Vec<(usize, Vec<ScaleRecord>)> {
        let mut ms: Vec<usize> = self.records.iter().map(|r| r.multiplier).collect();
        ms.sort_unstable();
        ms.dedup();
        ms.into_iter()
            .map(|m| {
                let rs: Vec<ScaleRecord> = self.records.iter().filter(|r| r.multiplier == m).cloned().collect();
                (m, pareto_frontier(&rs))
            })
            .collect()
    }
}

pub fn experiment_training_scale(cfg: &ScaleConfig) -> Result<ScaleOutcome> {
    let max_mult = cfg.multipliers.iter().copied().max().unwrap_or(0);
    if max_mult == 0 || cfg.multipliers.contains(&0) || cfg.seeds.is_empty() || cfg.budgets.is_empty() {
        return Err(Error::usage("scale experiment needs positive multipliers, seeds and budgets"));
    }
    let a = cfg.mtry.resolve(cfg.d);
    let budgets: Vec<f64> = cfg.budgets.iter().map(|f| f * cfg.corpus_n as f64).collect();
    let mut out = ScaleOutcome {
        records: Vec::new(),
        matched: Vec::new(),
        depths: Vec::new(),
    };
    for &seed in &cfg.seeds {
        let corpus: Arc<VectorSet<f32>> =
            Arc::new(SyntheticRecipe::gaussian(1.0, cfg.corpus_n, cfg.d, data_seed(seed, 1)).generate()?);
        let queries = SyntheticRecipe::gaussian(1.0, cfg.n_queries, cfg.d, data_seed(seed, 3)).generate::<f32>()?;
        let truth = exact_knn(&corpus, &queries, cfg.k)?;
        let mut train: VectorSet<f32> = (*corpus).clone();
        let mut labels = exact_knn_self(&corpus, cfg.k)?;
        if max_mult > 1 {
            let extra =
                SyntheticRecipe::gaussian(1.0, (max_mult - 1) * cfg.corpus_n, cfg.d, data_seed(seed, 2)).generate()?;
            labels = labels.concat(&exact_knn(&corpus, &extra, cfg.k)?)?;
            train = train.concat(&extra)?;
        }
        let params = class_params(cfg.n_trees, cfg.leaf, a, cfg.k, seed);
        for &mult in &cfg.multipliers {
            let n = mult * cfg.corpus_n;
            let sub = VectorSet::new(cfg.d, train.as_slice()[..n * cfg.d].to_vec())?;
            let sub_labels = GroundTruth {
                k: labels.k,
                rows: labels.rows[..n].to_vec(),
            };
            let model = build_with_labels(corpus.clone(), &sub, Some(&sub_labels), &params)?;
            let depth = model.mean_leaf_depth();
            out.depths.push((mult, seed, depth));
            let curve = OperatingCurve::measure(&model, &queries, &truth, Scale::MeanProbability);
            out.matched
                .extend(matched(&curve, &budgets, cfg.band, mult as f64, "rf-class", seed));
            for (tau, run) in timed_sweep(&model, &curve, &queries, &truth, &cfg.tau_quantiles) {
                out.records.push(ScaleRecord {
                    multiplier: mult,
                    algorithm: "rf-class".into(),
                    n_trees: cfg.n_trees,
                    leaf: cfg.leaf,
                    a,
                    tau,
                    scale: Scale::MeanProbability,
                    recall: run.recall,
                    qtime: run.qtime,
                    candidates: run.candidates,
                    seed,
                    depth,
                });
            }
            log::info!("scale multiplier={mult} seed={seed} depth={depth:.3}");
        }
    }
    Ok(out)
}
