//! `spantree`: draw exact random spanning trees, benchmark the samplers on
//! block-structured graphs, check them against enumeration oracles, and fit
//! tree-structured dendrograms to tabular data.
//!
//! Exit codes: 0 on success, 2 on validation or input errors, 3 when a
//! statistical check fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use spantree::bench::{
    ab_ff_two_sample, oracle_check, oracle_corpus, run_experiment, scaling_sizes, smoke_corpus,
    write_records, ExperimentConfig, GeneratorSpec, OracleResult,
};
use spantree::data_io::{load_csv_columns, IngestOptions};
use spantree::dendro::{gibbs_run, rj_run, similarity_matrix, spr_run, ModelConfig};
use spantree::graph_io::load_graph;
use spantree::sample::{sample_rooted_tree_seeded, Algo, KappaPolicy};

const EXIT_STAT_FAILURE: u8 = 3;

#[derive(Parser)]
#[command(name = "spantree", version, about = "Exact spanning-tree samplers and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one rooted spanning tree from a graph file.
    Sample(SampleArgs),
    /// Run benchmark experiments from a config file or the scaling preset.
    Bench(BenchArgs),
    /// Validate the samplers against exhaustive small-graph tree laws.
    OracleCheck(OracleArgs),
    /// Fit a dendrogram to CSV data by one of the posterior samplers.
    Dendro(DendroArgs),
}

fn parse_algo(s: &str) -> Result<Algo, String> {
    s.parse()
}

#[derive(Args)]
struct KappaArgs {
    /// Fixed fast-forward threshold (steps without a new node).
    #[arg(long, value_name = "N", conflicts_with = "kappa_prop")]
    kappa0: Option<u64>,
    /// Threshold proportional to the visited-set size.
    #[arg(long, value_name = "C")]
    kappa_prop: Option<f64>,
}

impl KappaArgs {
    fn policy(&self) -> KappaPolicy {
        match (self.kappa0, self.kappa_prop) {
            (_, Some(c)) => KappaPolicy::Proportional(c),
            (Some(k), None) => KappaPolicy::Fixed(k),
            (None, None) => KappaPolicy::default(),
        }
    }
}

#[derive(Args)]
struct SampleArgs {
    /// Edge-list TSV (`src<TAB>dst<TAB>weight` header, 0-based ids).
    #[arg(long, value_name = "FILE")]
    graph: PathBuf,
    /// Mirror every edge, for files listing one direction of an undirected
    /// graph.
    #[arg(long)]
    symmetrize: bool,
    #[arg(long, value_parser = parse_algo, default_value = "ff")]
    algo: Algo,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fix the root instead of drawing it from the exact root law.
    #[arg(long)]
    root: Option<usize>,
    #[command(flatten)]
    kappa: KappaArgs,
    /// Write the drawn tree as JSON here instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// TOML file with one or more [[experiment]] tables.
    #[arg(long, value_name = "FILE", required_unless_present = "scaling")]
    config: Option<PathBuf>,
    /// Run the node-count scaling preset instead of a config file.
    #[arg(long)]
    scaling: bool,
    /// Use the reduced scaling sizes (100..200) instead of (500..1000).
    #[arg(long, requires = "scaling")]
    desk_scale: bool,
    /// Override the seed of every experiment.
    #[arg(long)]
    seed: Option<u64>,
    /// Algorithms for the scaling preset (repeatable).
    #[arg(long, value_parser = parse_algo)]
    algo: Vec<Algo>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, default_value = "jsonl", value_parser = ["jsonl", "csv"])]
    format: String,
    #[command(flatten)]
    kappa: KappaArgs,
}

#[derive(Args)]
struct OracleArgs {
    /// Samples per (graph, algorithm) check.
    #[arg(long, default_value_t = 20_000)]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Check a small cross-section of the corpus instead of all of it.
    #[arg(long)]
    smoke: bool,
    /// Algorithms to check (repeatable; default: all four).
    #[arg(long, value_parser = parse_algo)]
    algo: Vec<Algo>,
    #[command(flatten)]
    kappa: KappaArgs,
    /// Write per-check outcomes as JSON-lines here.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DendroArgs {
    /// CSV file with a header row.
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    /// Numeric columns to model, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    columns: Vec<String>,
    #[arg(long)]
    log_transform: bool,
    #[arg(long)]
    standardize: bool,
    #[arg(long, default_value = "gibbs", value_parser = ["gibbs", "rj", "spr"])]
    sampler: String,
    #[arg(long, default_value_t = 5000)]
    iters: usize,
    #[arg(long, default_value_t = 3500)]
    burnin: usize,
    /// Thinning stride for retained samples (tree-draw sampler only).
    #[arg(long, default_value_t = 10)]
    thin: usize,
    /// Node budget; defaults to max(2, n/4).
    #[arg(long)]
    m_tilde: Option<usize>,
    /// Edge-kernel precision scale.
    #[arg(long, default_value_t = 0.25)]
    lambda: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    kappa: KappaArgs,
    /// Output directory for samples, traces, the ESS table, and
    /// similarity matrices.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Sample(args) => cmd_sample(args),
        Command::Bench(args) => cmd_bench(args),
        Command::OracleCheck(args) => cmd_oracle_check(args),
        Command::Dendro(args) => cmd_dendro(args),
    }
}

fn cmd_sample(args: SampleArgs) -> Result<ExitCode> {
    let graph = load_graph(&args.graph, args.symmetrize)
        .with_context(|| format!("loading {}", args.graph.display()))?;
    let m = graph.node_count();
    let scores = match args.root {
        None => vec![1.0; m],
        Some(r) => {
            if r >= m {
                bail!("root {r} out of range for a {m}-node graph");
            }
            let mut s = vec![0.0; m];
            s[r] = 1.0;
            s
        }
    };
    let (root, tree, stats) =
        sample_rooted_tree_seeded(&graph, &scores, args.algo, args.kappa.policy(), args.seed)?;
    let parents: Vec<i64> =
        tree.parents().iter().map(|p| p.map(|v| v as i64).unwrap_or(-1)).collect();
    let doc = serde_json::json!({
        "root": root,
        "parent": parents,
        "algo": args.algo.as_str(),
        "walk_steps": stats.walk_steps,
        "ff_count": stats.ff_count,
        "iterations": stats.iterations,
        "wall_nanos": stats.wall_nanos,
        "seed": args.seed,
    });
    match &args.out {
        Some(path) => fs::write(path, format!("{doc}\n"))
            .with_context(|| format!("writing {}", path.display()))?,
        None => println!("{doc}"),
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Deserialize)]
struct BenchFile {
    experiment: Vec<ExperimentConfig>,
}

fn cmd_bench(args: BenchArgs) -> Result<ExitCode> {
    let mut experiments: Vec<ExperimentConfig> = if let Some(config) = &args.config {
        let text = fs::read_to_string(config)
            .with_context(|| format!("reading {}", config.display()))?;
        let file: BenchFile = toml::from_str(&text)
            .with_context(|| format!("parsing {}", config.display()))?;
        if file.experiment.is_empty() {
            bail!("{} defines no experiments", config.display());
        }
        file.experiment
    } else {
        let algos = if args.algo.is_empty() {
            vec![Algo::AldousBroder, Algo::Wilson, Algo::FastForward]
        } else {
            args.algo.clone()
        };
        scaling_sizes(args.desk_scale)
            .iter()
            .map(|&m| ExperimentConfig {
                generator: GeneratorSpec::Scaling { m },
                algos: algos.clone(),
                replicates: 10,
                seed: args.seed.unwrap_or(0),
                kappa: args.kappa.policy(),
                outputs: Vec::new(),
            })
            .collect()
    };
    if let Some(seed) = args.seed {
        for e in &mut experiments {
            e.seed = seed;
        }
    }
    let sink = match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            Some(dir.join(format!("records.{}", args.format)))
        }
        None => None,
    };
    let mut total = 0usize;
    let mut failed = 0usize;
    for cfg in &experiments {
        let records = run_experiment(cfg)?;
        total += records.len();
        failed += records
            .iter()
            .filter(|r| r.status == spantree::bench::RunStatus::Error)
            .count();
        if let Some(path) = &sink {
            write_records(&records, path)?;
        }
        if sink.is_none() && cfg.outputs.is_empty() {
            for r in &records {
                println!("{}", serde_json::to_string(r)?);
            }
        }
        eprintln!(
            "{}: {} records ({} algorithms x {} replicates)",
            cfg.generator.id(),
            records.len(),
            cfg.algos.len(),
            cfg.replicates
        );
    }
    eprintln!("bench: {total} records, {failed} failed sampler invocations");
    Ok(ExitCode::SUCCESS)
}

fn cmd_oracle_check(args: OracleArgs) -> Result<ExitCode> {
    let corpus = if args.smoke { smoke_corpus() } else { oracle_corpus() };
    let algos = if args.algo.is_empty() {
        vec![Algo::AldousBroder, Algo::Wilson, Algo::FastForward, Algo::Laplacian]
    } else {
        args.algo.clone()
    };
    let kappa = match (args.kappa.kappa0, args.kappa.kappa_prop) {
        (None, None) => KappaPolicy::Fixed(2),
        _ => args.kappa.policy(),
    };
    let summary = oracle_check(&corpus, &algos, args.samples, kappa, args.seed)?;
    if let Some(path) = &args.out {
        let mut lines = String::new();
        for o in &summary.outcomes {
            lines.push_str(&serde_json::to_string(o)?);
            lines.push('\n');
        }
        fs::write(path, lines).with_context(|| format!("writing {}", path.display()))?;
    }
    for o in summary.outcomes.iter().filter(|o| o.failed()) {
        if let OracleResult::Report(r) = &o.result {
            eprintln!("FAIL {} {} p={:.3e}", o.entry, o.algo.as_str(), r.pvalue);
        }
    }
    let two_sample = ab_ff_two_sample(2_000, args.seed)?;
    let two_sample_ok = two_sample.pvalue >= 1e-3;
    eprintln!(
        "oracle-check: {} checked, {} skipped, {} failed; bridged-cliques two-sample p={:.3}",
        summary.checked, summary.skipped, summary.failed, two_sample.pvalue
    );
    if summary.passes() && two_sample_ok {
        eprintln!("oracle-check: PASS");
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("oracle-check: FAIL");
        Ok(ExitCode::from(EXIT_STAT_FAILURE))
    }
}

fn write_similarity_csv(path: &Path, sim: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for i in 0..sim.nrows() {
        let row: Vec<String> = (0..sim.ncols()).map(|j| format!("{:.6}", sim[(i, j)])).collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_dendro(args: DendroArgs) -> Result<ExitCode> {
    let data = load_csv_columns(
        &args.data,
        &args.columns,
        IngestOptions { log_transform: args.log_transform, standardize: args.standardize },
    )
    .with_context(|| format!("ingesting {}", args.data.display()))?;
    let n = data.nrows();
    let d = data.ncols();
    let mut cfg = ModelConfig::defaults_for(n, d);
    if let Some(m) = args.m_tilde {
        cfg.m_tilde = m;
    }
    cfg.lambda = args.lambda;
    cfg.kappa = args.kappa.policy();
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let (samples, diag) = match args.sampler.as_str() {
        "gibbs" => gibbs_run(&data, &cfg, args.iters, args.burnin, args.thin, &mut rng)?,
        "rj" => rj_run(&data, &cfg, args.iters, args.burnin, &mut rng)?,
        _ => spr_run(&data, &cfg, args.iters, args.burnin, &mut rng)?,
    };
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let mut sample_lines = String::new();
    for (i, s) in samples.iter().enumerate() {
        let doc = serde_json::json!({
            "index": i,
            "dendrogram": s.dendro,
            "z": s.z,
        });
        sample_lines.push_str(&doc.to_string());
        sample_lines.push('\n');
    }
    fs::write(args.out.join("samples.jsonl"), sample_lines)?;

    let mut traces = csv::Writer::from_path(args.out.join("traces.csv"))?;
    traces.write_record(["iter", "max_degree", "max_depth", "nonempty_leaves"])?;
    let lookup = |name: &str| diag.trace(name).expect("trace recorded every sweep");
    let (deg, dep, leaves) =
        (lookup("max_degree"), lookup("max_depth"), lookup("nonempty_leaves"));
    for t in 0..deg.values.len() {
        traces.write_record([
            (t + 1).to_string(),
            deg.values[t].to_string(),
            dep.values[t].to_string(),
            leaves.values[t].to_string(),
        ])?;
    }
    traces.flush()?;

    let mut ess = csv::Writer::from_path(args.out.join("ess.csv"))?;
    ess.write_record(["trace", "ess_per_iter"])?;
    for t in &diag.traces {
        let value = t.ess_per_iter.map(|v| format!("{v:.6}")).unwrap_or_default();
        ess.write_record([t.name.as_str(), value.as_str()])?;
    }
    ess.flush()?;

    if !samples.is_empty() {
        for depth in 1..=3 {
            let sim = similarity_matrix(&samples, depth, n);
            write_similarity_csv(&args.out.join(format!("similarity_depth{depth}.csv")), &sim)?;
        }
    }

    let summary = serde_json::json!({
        "sampler": args.sampler,
        "n": n,
        "d": d,
        "m_tilde": cfg.m_tilde,
        "iters": args.iters,
        "burnin": args.burnin,
        "retained": samples.len(),
        "ess_per_iter": diag
            .traces
            .iter()
            .map(|t| (t.name.clone(), t.ess_per_iter))
            .collect::<std::collections::BTreeMap<_, _>>(),
    });
    println!("{summary}");
    Ok(ExitCode::SUCCESS)
}
