//! Benchmark harness: hyperparameter grids, timed query runs, Pareto
//! frontiers and the distribution-shift and training-scale experiments.

mod curve;
mod experiments;
mod grid;

use std::cmp::Ordering;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knn::{knn_among, GroundTruth};
use crate::metrics::recall;
use crate::model::{lookup_candidates, EnsembleIndex, Scale, SelectionParams};
use crate::index::Searcher;
use crate::scalar::Scalar;
use crate::vectors::VectorSet;

pub use curve::{OperatingCurve, OperatingPoint};
pub use experiments::{
    experiment_distribution_shift, experiment_training_scale, MatchedRecall, ScaleConfig, ScaleOutcome, ScaleRecord,
    ShiftConfig, ShiftOutcome, ShiftRecord, SHIFT_CORPUS_TRAINED, SHIFT_QUERY_TRAINED,
};
pub use grid::{run_grid, GridSpec, Mtry};

/// One timed operating point of one index configuration.
#[derive(Clone, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub algorithm: String,
    #[serde(rename = "T")]
    pub n_trees: usize,
    pub leaf: usize,
    /// Dimensions sampled per split; classification trees only.
    pub a: Option<usize>,
    /// Grid position of `tau`: a quantile of positive scores, or the
    /// threshold itself for fixed grids.
    pub tau_level: f64,
    pub tau: f64,
    pub scale: Scale,
    pub recall: f64,
    /// Mean query time in seconds.
    pub qtime: f64,
    pub candidates: f64,
    /// Index build time in seconds.
    pub build_time: f64,
    pub seed: u64,
    pub k: usize,
    pub corpus: String,
    pub training: String,
    pub queries: String,
}

/// Anything with a recall / query-time tradeoff.
pub trait Tradeoff {
    fn recall(&self) -> f64;
    fn qtime(&self) -> f64;
}

impl Tradeoff for BenchmarkRecord {
    fn recall(&self) -> f64 {
        self.recall
    }

    fn qtime(&self) -> f64 {
        self.qtime
    }
}

/// Records not dominated by another one (recall at least as high and time
/// at least as low, one of them strictly), ascending by recall.
///
/// Along the output both recall and time strictly increase. Of several
/// records with identical recall and time the smallest by field order is
/// kept, so the result does not depend on the input order.
pub fn pareto_frontier<R: Tradeoff + PartialOrd + Clone>(records: &[R]) -> Vec<R> {
    let mut order: Vec<&R> = records.iter().collect();
    order.sort_by(|a, b| {
        b.recall()
            .total_cmp(&a.recall())
            .then(a.qtime().total_cmp(&b.qtime()))
            .then(a.partial_cmp(b).unwrap_or(Ordering::Equal))
    });
    let mut out: Vec<R> = Vec::new();
    let mut best_time = f64::INFINITY;
    for r in order {
        if r.qtime() < best_time {
            best_time = r.qtime();
            out.push(r.clone());
        }
    }
    out.reverse();
    out
}

pub fn write_csv<R: Serialize, W: Write>(records: &[R], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in records {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn save_csv<R: Serialize>(records: &[R], path: impl AsRef<Path>) -> Result<()> {
    write_csv(records, std::fs::File::create(path)?)
}

pub fn read_csv<R: DeserializeOwned, Rd: Read>(r: Rd) -> Result<Vec<R>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

pub fn load_csv<R: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<R>> {
    read_csv(std::fs::File::open(path)?)
}

/// Mean and sample standard deviation (zero for fewer than two values).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Seed-aggregated view of grid records sharing every hyperparameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub algorithm: String,
    #[serde(rename = "T")]
    pub n_trees: usize,
    pub leaf: usize,
    pub a: Option<usize>,
    pub tau_level: f64,
    pub scale: Scale,
    pub seeds: usize,
    pub recall_mean: f64,
    pub recall_sd: f64,
    pub qtime_mean: f64,
    pub qtime_sd: f64,
    pub candidates_mean: f64,
    pub candidates_sd: f64,
}

pub fn summarize_seeds(records: &[BenchmarkRecord]) -> Vec<SeedSummary> {
    let mut groups: Vec<(SeedSummary, Vec<&BenchmarkRecord>)> = Vec::new();
    for r in records {
        let same = |s: &SeedSummary| {
            s.algorithm == r.algorithm
                && s.n_trees == r.n_trees
                && s.leaf == r.leaf
                && s.a == r.a
                && s.tau_level == r.tau_level
                && s.scale == r.scale
        };
        match groups.iter_mut().find(|(s, _)| same(s)) {
            Some((_, members)) => members.push(r),
            None => groups.push((
                SeedSummary {
                    algorithm: r.algorithm.clone(),
                    n_trees: r.n_trees,
                    leaf: r.leaf,
                    a: r.a,
                    tau_level: r.tau_level,
                    scale: r.scale,
                    seeds: 0,
                    recall_mean: 0.0,
                    recall_sd: 0.0,
                    qtime_mean: 0.0,
                    qtime_sd: 0.0,
                    candidates_mean: 0.0,
                    candidates_sd: 0.0,
                },
                vec![r],
            )),
        }
    }
    groups
        .into_iter()
        .map(|(mut s, members)| {
            let col = |f: fn(&BenchmarkRecord) -> f64| mean_sd(&members.iter().map(|r| f(r)).collect::<Vec<_>>());
            s.seeds = members.len();
            (s.recall_mean, s.recall_sd) = col(|r| r.recall);
            (s.qtime_mean, s.qtime_sd) = col(|r| r.qtime);
            (s.candidates_mean, s.candidates_sd) = col(|r| r.candidates);
            s
        })
        .collect()
}

/// Mean recall, mean query seconds and mean candidate count of one timed
/// single-threaded pass over `queries`, after an untimed warm-up pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimedRun {
    pub recall: f64,
    pub qtime: f64,
    pub candidates: f64,
}

pub fn time_queries<T: Scalar>(
    index: &EnsembleIndex<T>,
    queries: &VectorSet<T>,
    truth: &GroundTruth,
    selection: &SelectionParams,
) -> TimedRun {
    let mut s = Searcher::new(index);
    for x in queries.rows() {
        std::hint::black_box(s.query(x, truth.k, selection));
    }
    let mut results = Vec::with_capacity(queries.len());
    let t0 = Instant::now();
    for x in queries.rows() {
        results.push(s.query(x, truth.k, selection));
    }
    let elapsed = t0.elapsed().as_secs_f64();
    summarize_run(
        results.iter().map(|r| (&r.neighbors.indices[..], r.candidate_count)),
        truth,
        elapsed,
    )
}

/// Like [`time_queries`] with classic lookup (union of leaf contents) as
/// candidate selection.
pub fn time_lookup<T: Scalar>(index: &EnsembleIndex<T>, queries: &VectorSet<T>, truth: &GroundTruth) -> TimedRun {
    let run = |x: &[T]| {
        let c = lookup_candidates(index, x);
        (knn_among(index.corpus(), &c, x, truth.k), c.len())
    };
    for x in queries.rows() {
        std::hint::black_box(run(x));
    }
    let mut results = Vec::with_capacity(queries.len());
    let t0 = Instant::now();
    for x in queries.rows() {
        results.push(run(x));
    }
    let elapsed = t0.elapsed().as_secs_f64();
    summarize_run(results.iter().map(|(n, c)| (&n.indices[..], *c)), truth, elapsed)
}

fn summarize_run<'a>(results: impl Iterator<Item = (&'a [u32], usize)>, truth: &GroundTruth, elapsed: f64) -> TimedRun {
    let (mut r, mut c, mut n) = (0.0, 0.0, 0usize);
    for (i, (found, count)) in results.enumerate() {
        r += recall(found, &truth.rows[i]);
        c += count as f64;
        n += 1;
    }
    let n = n.max(1) as f64;
    TimedRun {
        recall: r / n,
        // a zero reading on a coarse clock is still a positive duration
        qtime: (elapsed / n).max(f64::MIN_POSITIVE),
        candidates: c / n,
    }
}

/// Short hex form of a dataset digest for CSV provenance columns.
pub fn short_digest<T: Scalar>(v: &VectorSet<T>) -> String {
    v.digest()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses a comma-separated list.
pub fn parse_list<V: FromStr>(s: &str) -> Result<Vec<V>>
where
    V::Err: std::fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<V>().map_err(|e| Error::usage(format!("bad list element {p:?}: {e}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[derive(Clone, Debug, PartialEq, PartialOrd)]
    struct P(f64, f64, u32);

    impl Tradeoff for P {
        fn recall(&self) -> f64 {
            self.0
        }
        fn qtime(&self) -> f64 {
            self.1
        }
    }

    #[test]
    fn dominated_record_is_dropped() {
        let f = pareto_frontier(&[P(0.8, 1.0, 0), P(0.9, 2.0, 1), P(0.8, 2.0, 2)]);
        assert_eq!(f, vec![P(0.8, 1.0, 0), P(0.9, 2.0, 1)]);
        assert_eq!(pareto_frontier(&[P(0.5, 3.0, 0)]), vec![P(0.5, 3.0, 0)]);
    }

    #[test]
    fn equal_recall_keeps_faster() {
        let f = pareto_frontier(&[P(0.9, 2.0, 0), P(0.9, 1.0, 1), P(0.9, 1.0, 2)]);
        assert_eq!(f, vec![P(0.9, 1.0, 1)]);
    }

    proptest! {
        #[test]
        fn frontier_is_permutation_invariant_chain(
            pts in prop::collection::vec((0u8..20, 1u8..20), 1..40),
            perm_seed in any::<u64>(),
        ) {
            let recs: Vec<P> = pts.iter().enumerate()
                .map(|(i, &(r, t))| P(r as f64 / 20.0, t as f64, i as u32 % 3)).collect();
            let f = pareto_frontier(&recs);
            let mut shuffled = recs.clone();
            use rand::{seq::SliceRandom, SeedableRng};
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed));
            prop_assert_eq!(&pareto_frontier(&shuffled), &f);
            for w in f.windows(2) {
                prop_assert!(w[0].0 < w[1].0 && w[0].1 < w[1].1);
            }
            // nothing on the frontier is dominated
            for p in &f {
                prop_assert!(!recs.iter().any(|q| q.0 >= p.0 && q.1 <= p.1 && (q.0 > p.0 || q.1 < p.1)));
            }
            // everything off the frontier is dominated or duplicates a frontier point
            for q in &recs {
                prop_assert!(f.iter().any(|p| p.0 >= q.0 && p.1 <= q.1));
            }
        }
    }

    #[test]
    fn mean_sd_examples() {
        assert_eq!(mean_sd(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn list_parsing() {
        assert_eq!(parse_list::<usize>("8, 32,128").unwrap(), vec![8, 32, 128]);
        assert!(parse_list::<usize>("8,x").is_err());
    }
}
