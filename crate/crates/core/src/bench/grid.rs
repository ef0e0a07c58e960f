use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::index::{build_with_labels, IndexParams};
use crate::knn::{exact_knn, exact_knn_self, GroundTruth};
use crate::model::{Mode, Scale, SelectionParams};
use crate::scalar::Scalar;
use crate::trees::{TreeBuildParams, TreeType};
use crate::vectors::VectorSet;

use super::{short_digest, time_lookup, time_queries, BenchmarkRecord, OperatingCurve};

/// Dimensions sampled per classification split, possibly relative to `d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mtry {
    Sqrt,
    Tenth,
    All,
    Fixed(usize),
}

impl Mtry {
    pub fn resolve(self, d: usize) -> usize {
        match self {
            Mtry::Sqrt => (d as f64).sqrt().ceil() as usize,
            Mtry::Tenth => d.div_ceil(10),
            Mtry::All => d,
            Mtry::Fixed(a) => a,
        }
    }
}

impl FromStr for Mtry {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sqrt" => Ok(Mtry::Sqrt),
            "tenth" => Ok(Mtry::Tenth),
            "d" | "all" => Ok(Mtry::All),
            n => n
                .parse()
                .map(Mtry::Fixed)
                .map_err(|_| Error::usage(format!("mtry must be sqrt, tenth, d or an integer, got {n:?}"))),
        }
    }
}

impl fmt::Display for Mtry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mtry::Sqrt => f.write_str("sqrt"),
            Mtry::Tenth => f.write_str("tenth"),
            Mtry::All => f.write_str("d"),
            Mtry::Fixed(a) => write!(f, "{a}"),
        }
    }
}

/// Value sets to sweep. Every combination of tree type, mode, T, leaf size
/// and (classification trees only) `a` is built once per seed; every scale
/// and threshold is then timed on that build.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub tree_types: Vec<TreeType>,
    /// `Classification` gives the `rf-*` algorithms, `Voting` gives
    /// `vote-*` plus one `lookup-*` record.
    pub modes: Vec<Mode>,
    pub n_trees: Vec<usize>,
    pub leaf_sizes: Vec<usize>,
    pub mtry: Vec<Mtry>,
    pub scales: Vec<Scale>,
    /// Explicit thresholds; when empty they are derived per build.
    pub taus: Vec<f64>,
    /// Quantiles of the observed positive scores used as thresholds when
    /// `taus` is empty (raw-count voting uses the integers 0..=T instead).
    pub tau_quantiles: Vec<f64>,
    pub k: usize,
    pub seeds: Vec<u64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            tree_types: vec![TreeType::Rp, TreeType::Kd, TreeType::Pca, TreeType::Classification],
            modes: vec![Mode::Classification, Mode::Voting],
            n_trees: vec![8, 32, 128],
            leaf_sizes: vec![32, 128, 512],
            mtry: vec![Mtry::Sqrt, Mtry::Tenth, Mtry::All],
            scales: vec![Scale::MeanProbability, Scale::RawCount],
            taus: Vec::new(),
            tau_quantiles: vec![0.0, 0.5, 0.8, 0.9, 0.95, 0.98, 0.99, 0.995, 0.999],
            k: 10,
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

fn algorithm_tag(mode: Mode, tt: TreeType) -> String {
    match mode {
        Mode::Classification => format!("rf-{tt}"),
        Mode::Voting => format!("vote-{tt}"),
    }
}

/// Quantile scores are only sampled from this many queries.
const TAU_SAMPLE_QUERIES: usize = 200;

/// Times every configuration of `spec` against `truth`, the exact
/// neighbors of `queries` in `corpus`.
///
/// Training labels are computed once. Infeasible configurations are logged
/// and skipped. Query loops run on the calling thread, one at a time.
pub fn run_grid<T: Scalar>(
    corpus: Arc<VectorSet<T>>,
    training: Option<&VectorSet<T>>,
    queries: &VectorSet<T>,
    truth: &GroundTruth,
    spec: &GridSpec,
) -> Result<Vec<BenchmarkRecord>> {
    queries.check_dim(corpus.dim(), "query set")?;
    truth.validate(queries.len())?;
    if truth.rows.iter().flat_map(|r| &r.indices).any(|&j| j as usize >= corpus.len()) {
        return Err(Error::usage("ground truth refers to points outside the corpus"));
    }
    let d = corpus.dim();
    let train = training.unwrap_or(&corpus);
    let digests = (
        short_digest(&corpus),
        training.map_or_else(|| "self".to_string(), short_digest),
        short_digest(queries),
    );
    let mut train_labels: Option<GroundTruth> = None;
    let mut self_labels: Option<GroundTruth> = None;
    let mut out = Vec::new();

    for &seed in &spec.seeds {
        for &tt in &spec.tree_types {
            for &mode in &spec.modes {
                let mtrys: Vec<Option<usize>> = if tt == TreeType::Classification {
                    spec.mtry.iter().map(|m| Some(m.resolve(d))).collect()
                } else {
                    vec![None]
                };
                for &n_trees in &spec.n_trees {
                    for &leaf in &spec.leaf_sizes {
                        for &a in &mtrys {
                            let params = IndexParams {
                                tree: TreeBuildParams {
                                    tree_type: tt,
                                    max_leaf_size: leaf,
                                    mtry: a,
                                    seed,
                                    k: spec.k,
                                    randomized: true,
                                },
                                n_trees,
                                k: spec.k,
                                mode,
                                selection: SelectionParams::default(),
                            };
                            let tag = algorithm_tag(mode, tt);
                            if let Err(e) = params.validate(d, corpus.len()) {
                                log::warn!("skipping {tag} T={n_trees} leaf={leaf} a={a:?}: {e}");
                                continue;
                            }
                            // voting tables hold corpus membership, so voting grows on the corpus
                            let (points, lab) = match (mode, tt) {
                                (Mode::Classification, _) => {
                                    (train, Some(lazy_labels(&mut train_labels, &corpus, training, spec.k)?))
                                }
                                (Mode::Voting, TreeType::Classification) => {
                                    (&*corpus, Some(lazy_labels(&mut self_labels, &corpus, None, spec.k)?))
                                }
                                (Mode::Voting, _) => (&*corpus, None),
                            };
                            let t0 = Instant::now();
                            let index = build_with_labels(corpus.clone(), points, lab, &params)?;
                            let build_time = t0.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);
                            log::info!("built {tag} T={n_trees} leaf={leaf} a={a:?} seed={seed} in {build_time:.3}s");

                            let base = BenchmarkRecord {
                                algorithm: tag,
                                n_trees,
                                leaf,
                                a,
                                tau_level: 0.0,
                                tau: 0.0,
                                scale: Scale::RawCount,
                                recall: 0.0,
                                qtime: 0.0,
                                candidates: 0.0,
                                build_time,
                                seed,
                                k: spec.k,
                                corpus: digests.0.clone(),
                                training: if mode == Mode::Voting { "self".into() } else { digests.1.clone() },
                                queries: digests.2.clone(),
                            };
                            for &scale in &spec.scales {
                                for (level, tau) in thresholds(&index, queries, truth, spec, mode, scale, n_trees) {
                                    let run = time_queries(&index, queries, truth, &SelectionParams::new(tau, scale));
                                    out.push(BenchmarkRecord {
                                        tau_level: level,
                                        tau,
                                        scale,
                                        recall: run.recall,
                                        qtime: run.qtime,
                                        candidates: run.candidates,
                                        ..base.clone()
                                    });
                                }
                            }
                            if mode == Mode::Voting {
                                let run = time_lookup(&index, queries, truth);
                                out.push(BenchmarkRecord {
                                    algorithm: format!("lookup-{tt}"),
                                    recall: run.recall,
                                    qtime: run.qtime,
                                    candidates: run.candidates,
                                    ..base
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

fn lazy_labels<'a, T: Scalar>(
    slot: &'a mut Option<GroundTruth>,
    corpus: &VectorSet<T>,
    training: Option<&VectorSet<T>>,
    k: usize,
) -> Result<&'a GroundTruth> {
    if slot.is_none() {
        *slot = Some(match training {
            Some(t) => exact_knn(corpus, t, k)?,
            None => exact_knn_self(corpus, k)?,
        });
    }
    Ok(slot.as_ref().expect("just filled"))
}

/// `(grid level, threshold)` pairs with duplicate thresholds removed.
fn thresholds<T: Scalar>(
    index: &crate::model::EnsembleIndex<T>,
    queries: &VectorSet<T>,
    truth: &GroundTruth,
    spec: &GridSpec,
    mode: Mode,
    scale: Scale,
    n_trees: usize,
) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = if !spec.taus.is_empty() {
        spec.taus.iter().map(|&t| (t, t)).collect()
    } else if mode == Mode::Voting && scale == Scale::RawCount {
        (0..=n_trees).map(|t| (t as f64, t as f64)).collect()
    } else {
        let n = queries.len().min(TAU_SAMPLE_QUERIES);
        let sample = VectorSet::new(queries.dim(), queries.as_slice()[..n * queries.dim()].to_vec())
            .expect("prefix of a valid set");
        let sub_truth = GroundTruth {
            k: truth.k,
            rows: truth.rows[..n].to_vec(),
        };
        let curve = OperatingCurve::measure(index, &sample, &sub_truth, scale);
        spec.tau_quantiles.iter().map(|&q| (q, curve.quantile(q))).collect()
    };
    let mut seen = Vec::new();
    out.retain(|&(_, t)| {
        let fresh = !seen.contains(&t.to_bits());
        seen.push(t.to_bits());
        fresh
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::SyntheticRecipe;

    fn data() -> (Arc<VectorSet<f32>>, VectorSet<f32>, GroundTruth) {
        let corpus = Arc::new(SyntheticRecipe::gaussian(1.0, 800, 6, 1).generate::<f32>().unwrap());
        let queries = SyntheticRecipe::gaussian(1.0, 40, 6, 2).generate::<f32>().unwrap();
        let truth = exact_knn(&corpus, &queries, 5).unwrap();
        (corpus, queries, truth)
    }

    fn one(tt: TreeType, mode: Mode) -> GridSpec {
        GridSpec {
            tree_types: vec![tt],
            modes: vec![mode],
            n_trees: vec![6],
            leaf_sizes: vec![40],
            mtry: vec![Mtry::Sqrt],
            scales: vec![Scale::MeanProbability],
            taus: vec![0.01],
            k: 5,
            seeds: vec![1],
            ..Default::default()
        }
    }

    #[test]
    fn single_configuration_gives_one_record() {
        let (c, q, gt) = data();
        let recs = run_grid(c, None, &q, &gt, &one(TreeType::Kd, Mode::Classification)).unwrap();
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert_eq!(r.algorithm, "rf-kd");
        assert!((0.0..=1.0).contains(&r.recall) && r.qtime > 0.0 && r.build_time > 0.0);
    }

    #[test]
    fn voting_recall_non_increasing_and_tau0_equals_lookup() {
        let (c, q, gt) = data();
        let spec = GridSpec {
            scales: vec![Scale::RawCount],
            taus: vec![0.0, 1.0, 2.0, 4.0],
            ..one(TreeType::Rp, Mode::Voting)
        };
        let recs = run_grid(c, None, &q, &gt, &spec).unwrap();
        assert_eq!(recs.len(), 5);
        for w in recs[..4].windows(2) {
            assert!(w[1].recall <= w[0].recall && w[1].candidates <= w[0].candidates);
        }
        let lookup = &recs[4];
        assert_eq!(lookup.algorithm, "lookup-rp");
        assert_eq!((lookup.recall, lookup.candidates), (recs[0].recall, recs[0].candidates));
    }

    #[test]
    fn infeasible_configurations_are_skipped() {
        let (c, q, gt) = data();
        let spec = GridSpec {
            mtry: vec![Mtry::Fixed(7), Mtry::Fixed(2)],
            ..one(TreeType::Classification, Mode::Classification)
        };
        let recs = run_grid(c.clone(), None, &q, &gt, &spec).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].a, Some(2));
        let big_k = GridSpec { k: 5000, ..one(TreeType::Rp, Mode::Classification) };
        assert!(run_grid(c, None, &q, &gt, &big_k).unwrap().is_empty());
    }

    #[test]
    fn default_thresholds_cover_voting_integers_and_quantiles() {
        let (c, q, gt) = data();
        let spec = GridSpec {
            modes: vec![Mode::Voting, Mode::Classification],
            scales: vec![Scale::RawCount, Scale::MeanProbability],
            taus: Vec::new(),
            ..one(TreeType::Pca, Mode::Voting)
        };
        let recs = run_grid(c, None, &q, &gt, &spec).unwrap();
        let vote_count: Vec<f64> = recs
            .iter()
            .filter(|r| r.algorithm == "vote-pca" && r.scale == Scale::RawCount)
            .map(|r| r.tau)
            .collect();
        assert_eq!(vote_count, (0..=6).map(f64::from).collect::<Vec<_>>());
        let rf: Vec<&BenchmarkRecord> = recs.iter().filter(|r| r.algorithm == "rf-pca").collect();
        assert!(rf.len() >= 4);
        assert!(rf.windows(2).all(|w| w[0].scale != w[1].scale || w[0].tau < w[1].tau));
    }

    #[test]
    fn mtry_parsing() {
        assert_eq!("sqrt".parse::<Mtry>().unwrap().resolve(50), 8);
        assert_eq!("tenth".parse::<Mtry>().unwrap().resolve(50), 5);
        assert_eq!("d".parse::<Mtry>().unwrap().resolve(50), 50);
        assert_eq!("12".parse::<Mtry>().unwrap(), Mtry::Fixed(12));
        assert!("x".parse::<Mtry>().is_err());
    }
}
