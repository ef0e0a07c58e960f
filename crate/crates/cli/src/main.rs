//! Command-line front end: ground truth, index build and query, grid search
//! and the two desk-scale experiments.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use annclass::bench::{
    experiment_distribution_shift, experiment_training_scale, load_csv, mean_sd, pareto_frontier, run_grid, save_csv,
    summarize_seeds, BenchmarkRecord, GridSpec, Mtry, ScaleConfig, ShiftConfig,
};
use annclass::index::{build_with_labels, IndexParams, Searcher};
use annclass::io::{
    load_index, read_ground_truth, read_vectors, save_index, write_ground_truth, write_ivecs, DatasetSpec,
    GroundTruthCache,
};
use annclass::knn::{exact_knn, exact_knn_self, GroundTruth};
use annclass::metrics::mean_recall;
use annclass::model::{Mode, Scale, SelectionParams};
use annclass::trees::{TreeBuildParams, TreeType};
use annclass::VectorSet;

#[derive(Parser)]
#[command(name = "annclass", version, about = "Tree-ensemble nearest neighbor search as multi-label classification")]
struct Cli {
    /// Log progress to stderr (RUST_LOG overrides).
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Compute exact k nearest neighbors of queries (or of the corpus itself).
    Groundtruth(GroundtruthArgs),
    /// Build an index and save it.
    Build(BuildArgs),
    /// Query a saved index.
    Query(QueryArgs),
    /// Time every configuration of a hyperparameter grid.
    Grid(GridArgs),
    /// Query-distribution-trained vs corpus-trained classification trees.
    ShiftExp(ShiftArgs),
    /// Classification trees trained on growing training sets.
    ScaleExp(ScaleArgs),
    /// Pareto frontier of a grid CSV.
    Pareto(ParetoArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Leaf tables fit on k-nearest-neighbor labels.
    Class,
    /// Leaf tables record corpus membership.
    Vote,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Class => Mode::Classification,
            ModeArg::Vote => Mode::Voting,
        }
    }
}

/// Datasets are `fvecs:PATH`, `bvecs:PATH`, `raw:D:PATH`,
/// `uniform:LO:HI:N:D:SEED`, `gaussian:SIGMA:N:D:SEED` or
/// `powerlaw:EXPONENT:N:D:SEED`.
#[derive(Args)]
struct GroundtruthArgs {
    #[arg(long)]
    corpus: DatasetSpec,
    /// Omit to label the corpus with its own neighbors.
    #[arg(long)]
    queries: Option<DatasetSpec>,
    #[arg(short, long, default_value_t = 10)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
    /// Also write neighbor indices as ivecs.
    #[arg(long)]
    ivecs: Option<PathBuf>,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    corpus: DatasetSpec,
    /// Training sample from the query distribution; defaults to the corpus.
    #[arg(long)]
    training: Option<DatasetSpec>,
    #[arg(long, default_value = "rp")]
    tree: TreeType,
    #[arg(long, default_value_t = 32)]
    trees: usize,
    #[arg(long, default_value_t = 128)]
    leaf: usize,
    /// Dimensions tried per classification split: sqrt, tenth, d or a number.
    #[arg(long, default_value = "sqrt")]
    mtry: Mtry,
    #[arg(short, long, default_value_t = 10)]
    k: usize,
    #[arg(long, value_enum, default_value = "class")]
    mode: ModeArg,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Directory for cached training labels.
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct QueryArgs {
    /// The corpus the index was built over.
    #[arg(long)]
    corpus: DatasetSpec,
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    queries: DatasetSpec,
    #[arg(short, long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    #[arg(long, default_value = "prob")]
    scale: Scale,
    #[arg(long)]
    max_candidates: Option<usize>,
    /// Ground-truth file from `groundtruth`, to report recall.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Write neighbor indices as ivecs.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    corpus: DatasetSpec,
    #[arg(long)]
    training: Option<DatasetSpec>,
    #[arg(long)]
    queries: DatasetSpec,
    #[arg(short, long, default_value_t = 10)]
    k: usize,
    #[arg(long, value_delimiter = ',', default_value = "rp,kd,pca,class")]
    tree_types: Vec<TreeType>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "class,vote")]
    modes: Vec<ModeArg>,
    #[arg(long, value_delimiter = ',', default_value = "8,32,128")]
    trees: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "32,128,512")]
    leaf: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "sqrt,tenth,d")]
    mtry: Vec<Mtry>,
    #[arg(long, value_delimiter = ',', default_value = "prob,count")]
    scales: Vec<Scale>,
    /// Fixed thresholds; by default they are derived per build.
    #[arg(long, value_delimiter = ',')]
    taus: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,0.8,0.9,0.95,0.98,0.99,0.995,0.999")]
    quantiles: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    seeds: Vec<u64>,
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Seed means and standard deviations.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long)]
    frontier: Option<PathBuf>,
}

#[derive(Args)]
struct ShiftArgs {
    /// Fraction of the full-size setup (100k points, 500 dimensions).
    #[arg(long, default_value_t = 0.1)]
    scale: f64,
    #[arg(long, value_delimiter = ',', default_value = "1,2.5,5")]
    sigmas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    seeds: Vec<u64>,
    #[arg(long)]
    queries: Option<usize>,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    leaf: Option<usize>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ScaleArgs {
    #[arg(long, default_value_t = 10_000)]
    corpus_n: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,4,16")]
    multipliers: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    seeds: Vec<u64>,
    #[arg(long)]
    queries: Option<usize>,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    leaf: Option<usize>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ParetoArgs {
    /// Grid CSV written by `grid`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// One frontier per algorithm instead of one overall.
    #[arg(long)]
    by_algorithm: bool,
}

fn load(spec: &DatasetSpec, what: &str) -> Result<VectorSet<f32>> {
    let t0 = Instant::now();
    let v = read_vectors::<f32>(spec).with_context(|| format!("loading {what} {spec}"))?;
    log::info!("{what}: {} x {} from {spec} in {:.2}s", v.len(), v.dim(), t0.elapsed().as_secs_f64());
    Ok(v)
}

fn labels(cache: Option<&Path>, corpus: &VectorSet<f32>, training: Option<&VectorSet<f32>>, k: usize) -> Result<GroundTruth> {
    Ok(match (cache, training) {
        (Some(dir), _) => GroundTruthCache::new(dir)?.get_or_compute(corpus, training, k)?,
        (None, Some(t)) => exact_knn(corpus, t, k)?,
        (None, None) => exact_knn_self(corpus, k)?,
    })
}

fn groundtruth(a: GroundtruthArgs) -> Result<()> {
    let corpus = load(&a.corpus, "corpus")?;
    let gt = match &a.queries {
        Some(q) => exact_knn(&corpus, &load(q, "queries")?, a.k)?,
        None => exact_knn_self(&corpus, a.k)?,
    };
    write_ground_truth(&a.out, &gt)?;
    if let Some(p) = &a.ivecs {
        let rows: Vec<Vec<u32>> = gt.rows.iter().map(|r| r.indices.clone()).collect();
        write_ivecs(p, &rows)?;
    }
    println!("wrote {} rows of {} neighbors to {}", gt.len(), gt.k, a.out.display());
    Ok(())
}

fn build(a: BuildArgs) -> Result<()> {
    let corpus = Arc::new(load(&a.corpus, "corpus")?);
    let training = a.training.as_ref().map(|t| load(t, "training")).transpose()?;
    let mode: Mode = a.mode.into();
    let params = IndexParams {
        tree: TreeBuildParams {
            tree_type: a.tree,
            max_leaf_size: a.leaf,
            mtry: Some(a.mtry.resolve(corpus.dim())),
            seed: a.seed,
            k: a.k,
            randomized: true,
        },
        n_trees: a.trees,
        k: a.k,
        mode,
        selection: SelectionParams::default(),
    };
    params.validate(corpus.dim(), corpus.len())?;
    let t0 = Instant::now();
    let (points, lab) = match mode {
        Mode::Classification => {
            let l = labels(a.cache.as_deref(), &corpus, training.as_ref(), a.k)?;
            (training.as_ref().unwrap_or(&corpus), Some(l))
        }
        Mode::Voting => {
            if training.is_some() {
                log::warn!("voting tables record corpus membership; the training set is ignored");
            }
            let l = (a.tree == TreeType::Classification)
                .then(|| labels(a.cache.as_deref(), &corpus, None, a.k))
                .transpose()?;
            (&*corpus, l)
        }
    };
    let index = build_with_labels(corpus.clone(), points, lab.as_ref(), &params)?;
    save_index(&index, &a.out)?;
    println!(
        "built {} trees ({}, {:?}) in {:.2}s, mean leaf depth {:.2}; saved to {}",
        index.n_trees(),
        index.tree_type(),
        index.mode(),
        t0.elapsed().as_secs_f64(),
        index.mean_leaf_depth(),
        a.out.display()
    );
    Ok(())
}

fn query(a: QueryArgs) -> Result<()> {
    let corpus = Arc::new(load(&a.corpus, "corpus")?);
    let queries = load(&a.queries, "queries")?;
    let index = load_index(&a.index, corpus).with_context(|| format!("loading index {}", a.index.display()))?;
    if queries.dim() != index.dim() {
        bail!("queries have dimension {}, index expects {}", queries.dim(), index.dim());
    }
    if a.k == 0 {
        bail!("k must be at least 1");
    }
    let sel = SelectionParams {
        tau: a.tau,
        scale: a.scale,
        max_candidates: a.max_candidates,
    };
    sel.validate()?;
    let mut s = Searcher::new(&index);
    let results: Vec<_> = queries.rows().map(|x| s.query(x, a.k, &sel)).collect();
    let n = results.len() as f64;
    let mean = |f: &dyn Fn(&annclass::QueryResult) -> f64| results.iter().map(f).sum::<f64>() / n;
    println!("queries: {}", results.len());
    println!("mean candidates: {:.2}", mean(&|r| r.candidate_count as f64));
    println!("mean query time: {:.3e} s", mean(&|r| r.timings.total_ns() as f64) * 1e-9);
    if let Some(p) = &a.truth {
        let gt = read_ground_truth(p)?;
        if gt.len() != results.len() || gt.k < a.k {
            bail!("ground truth holds {} rows of {} neighbors; need {} rows of at least {}", gt.len(), gt.k, results.len(), a.k);
        }
        let truth: Vec<_> = gt
            .rows
            .iter()
            .map(|r| annclass::NeighborList {
                indices: r.indices[..a.k].to_vec(),
                dissimilarities: r.dissimilarities[..a.k].to_vec(),
            })
            .collect();
        let found: Vec<&[u32]> = results.iter().map(|r| &r.neighbors.indices[..]).collect();
        println!("mean recall: {:.4}", mean_recall(&found, &truth));
    }
    if let Some(p) = &a.out {
        let rows: Vec<Vec<u32>> = results.iter().map(|r| r.neighbors.indices.clone()).collect();
        write_ivecs(p, &rows)?;
    }
    Ok(())
}

fn grid(a: GridArgs) -> Result<()> {
    let corpus = Arc::new(load(&a.corpus, "corpus")?);
    let training = a.training.as_ref().map(|t| load(t, "training")).transpose()?;
    let queries = load(&a.queries, "queries")?;
    let truth = match &a.cache {
        Some(dir) => GroundTruthCache::new(dir)?.get_or_compute(&corpus, Some(&queries), a.k)?,
        None => exact_knn(&corpus, &queries, a.k)?,
    };
    let spec = GridSpec {
        tree_types: a.tree_types,
        modes: a.modes.into_iter().map(Mode::from).collect(),
        n_trees: a.trees,
        leaf_sizes: a.leaf,
        mtry: a.mtry,
        scales: a.scales,
        taus: a.taus,
        tau_quantiles: a.quantiles,
        k: a.k,
        seeds: a.seeds,
    };
    let records = run_grid(corpus, training.as_ref(), &queries, &truth, &spec)?;
    save_csv(&records, &a.out)?;
    println!("wrote {} records to {}", records.len(), a.out.display());
    if let Some(p) = &a.summary {
        save_csv(&summarize_seeds(&records), p)?;
    }
    if let Some(p) = &a.frontier {
        save_csv(&pareto_frontier(&records), p)?;
    }
    Ok(())
}

fn shift_exp(a: ShiftArgs) -> Result<()> {
    let mut cfg = ShiftConfig::scaled(a.scale);
    cfg.sigmas = a.sigmas;
    cfg.seeds = a.seeds;
    if let Some(q) = a.queries {
        cfg.n_queries = q;
    }
    if let Some(t) = a.trees {
        cfg.n_trees = t;
    }
    if let Some(l) = a.leaf {
        cfg.leaf = l;
    }
    fs::create_dir_all(&a.out_dir)?;
    let out = experiment_distribution_shift(&cfg)?;
    save_csv(&out.records, a.out_dir.join("shift.csv"))?;
    for (sigma, alg, f) in out.frontiers() {
        save_csv(&f, a.out_dir.join(format!("shift_frontier_sigma{sigma}_{alg}.csv")))?;
    }
    for &sigma in &cfg.sigmas {
        match out.gap_stats(sigma) {
            Some((m, sd)) => println!("sigma {sigma}: recall gap at matched candidates {m:+.4} (sd {sd:.4})"),
            None => println!("sigma {sigma}: some budget could not be matched"),
        }
    }
    println!("wrote {}", a.out_dir.display());
    Ok(())
}

fn scale_exp(a: ScaleArgs) -> Result<()> {
    let mut cfg = ScaleConfig {
        corpus_n: a.corpus_n,
        d: a.dim,
        multipliers: a.multipliers,
        seeds: a.seeds,
        ..Default::default()
    };
    if let Some(q) = a.queries {
        cfg.n_queries = q;
    }
    if let Some(t) = a.trees {
        cfg.n_trees = t;
    }
    if let Some(l) = a.leaf {
        cfg.leaf = l;
    }
    fs::create_dir_all(&a.out_dir)?;
    let out = experiment_training_scale(&cfg)?;
    save_csv(&out.records, a.out_dir.join("scale.csv"))?;
    for (m, f) in out.frontiers() {
        save_csv(&f, a.out_dir.join(format!("scale_frontier_x{m}.csv")))?;
    }
    for &m in &cfg.multipliers {
        let depths: Vec<f64> = out.depths.iter().filter(|d| d.0 == m).map(|d| d.2).collect();
        let (dm, dsd) = mean_sd(&depths);
        println!(
            "multiplier {m}: mean recall per budget {:?}, leaf depth {dm:.3} (sd {dsd:.3})",
            out.mean_recall(m)
        );
    }
    println!("wrote {}", a.out_dir.display());
    Ok(())
}

fn pareto(a: ParetoArgs) -> Result<()> {
    let records: Vec<BenchmarkRecord> = load_csv(&a.input)?;
    if records.is_empty() {
        bail!("{} holds no records", a.input.display());
    }
    let frontier = if a.by_algorithm {
        let mut algs: Vec<&str> = records.iter().map(|r| r.algorithm.as_str()).collect();
        algs.sort_unstable();
        algs.dedup();
        algs.iter()
            .flat_map(|alg| {
                let rs: Vec<BenchmarkRecord> = records.iter().filter(|r| r.algorithm == *alg).cloned().collect();
                pareto_frontier(&rs)
            })
            .collect()
    } else {
        pareto_frontier(&records)
    };
    save_csv(&frontier, &a.out)?;
    println!("{} of {} records on the frontier", frontier.len(), records.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default)).init();
    let res = match cli.command {
        Command::Groundtruth(a) => groundtruth(a),
        Command::Build(a) => build(a),
        Command::Query(a) => query(a),
        Command::Grid(a) => grid(a),
        Command::ShiftExp(a) => shift_exp(a),
        Command::ScaleExp(a) => scale_exp(a),
        Command::Pareto(a) => pareto(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
