//! Experiment plumbing: the block-structured graph generators, the
//! instrumented experiment runner with JSON-lines / CSV record streams, and
//! the exactness-check corpus that drives every sampler against the
//! enumeration oracle.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write as _};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    build_kernel_circulation, build_kernel_general, check_circulation, validate_dense, GraphError,
    TransitionKernel, WeightedDigraph,
};
use crate::oracle::{
    enumerate_rooted_trees, gof_from_counts, two_sample_chi2, GofReport, OracleError,
};
use crate::sample::{
    aldous_broder, fast_forwarded_cover, laplacian_sampler, sample_rooted_tree_seeded, wilson,
    Algo, KappaPolicy, SampleError,
};
use crate::spectral::{lambda2, SpectralError};

/// Attempt budget for the connectivity-conditioned generators.
pub const MAX_GEN_ATTEMPTS: u32 = 100;
/// Version stamp carried by every emitted record.
pub const RUN_RECORD_SCHEMA: u32 = 1;
/// Per-test significance for the exactness checks.
pub const ORACLE_ALPHA: f64 = 1e-3;
/// Allowed fraction of failing checks before the whole suite is declared
/// broken; matches the one-in-a-hundred flake budget of the test policy.
pub const ORACLE_FLAKE_RATE: f64 = 0.01;

const CIRCULATION_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("no connected instance after {attempts} attempts")]
    GenerationFailed { attempts: u32 },
    #[error("invalid experiment configuration: {0}")]
    BadConfig(String),
    #[error("sampler produced a tree outside the enumerated law on {0}")]
    TreeOutsideLaw(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("i/o failure")]
    Io(#[from] std::io::Error),
    #[error("record serialization failed")]
    Json(#[from] serde_json::Error),
    #[error("csv record handling failed")]
    Csv(#[from] csv::Error),
}

/// Weight scheme for the two-block generator: the random-weight form used
/// in the walk experiments, or the plain 0/1 form the unweighted-sampler
/// comparisons need.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TwoBlockScheme {
    #[default]
    Weighted,
    Unweighted,
}

impl TwoBlockScheme {
    fn label(self) -> &'static str {
        match self {
            TwoBlockScheme::Weighted => "weighted",
            TwoBlockScheme::Unweighted => "unweighted",
        }
    }
}

/// One of the benchmark graph families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    /// Two equal blocks; within-block weight u * (m/2)^2 with u uniform,
    /// cross-block weight u on a Bernoulli(zeta) edge (or 0/1 weights under
    /// the unweighted scheme).
    TwoBlock {
        m: usize,
        zeta: f64,
        #[serde(default)]
        scheme: TwoBlockScheme,
    },
    /// K equal blocks on m nodes; within-block weight u * (m/K)^2,
    /// cross-block weight u * 0.005/K on a Bernoulli(0.001) edge.
    KBlock { m: usize, k: usize },
    /// Node-count scaling family: the two-block graph at zeta = 0.1.
    Scaling { m: usize },
}

impl GeneratorSpec {
    pub fn id(&self) -> String {
        match self {
            GeneratorSpec::TwoBlock { m, zeta, scheme } => {
                format!("two_block_m{}_zeta{}_{}", m, zeta, scheme.label())
            }
            GeneratorSpec::KBlock { m, k } => format!("k_block_m{}_k{}", m, k),
            GeneratorSpec::Scaling { m } => format!("scaling_m{}", m),
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        match *self {
            GeneratorSpec::TwoBlock { m, zeta, .. } => two_block_preconditions(m, zeta),
            GeneratorSpec::KBlock { m, k } => {
                if m < 2 {
                    return Err(BenchError::BadConfig("k-block needs m >= 2".into()));
                }
                if k == 0 || m % k != 0 {
                    return Err(BenchError::BadConfig(format!(
                        "block count {k} must divide node count {m}"
                    )));
                }
                Ok(())
            }
            GeneratorSpec::Scaling { m } => two_block_preconditions(m, SCALING_ZETA),
        }
    }

    /// Draws one connected instance, reporting how many rejected draws the
    /// connectivity conditioning consumed.
    pub fn generate<R: Rng>(&self, rng: &mut R) -> Result<(WeightedDigraph, u32), BenchError> {
        self.validate()?;
        match *self {
            GeneratorSpec::TwoBlock { m, zeta, scheme } => {
                retry_connected(rng, |rng| two_block_once(m, zeta, scheme, rng))
            }
            GeneratorSpec::KBlock { m, k } => retry_connected(rng, |rng| k_block_once(m, k, rng)),
            GeneratorSpec::Scaling { m } => {
                retry_connected(rng, |rng| {
                    two_block_once(m, SCALING_ZETA, TwoBlockScheme::Weighted, rng)
                })
            }
        }
    }
}

/// Cross-block edge probability of the scaling family.
pub const SCALING_ZETA: f64 = 0.1;

/// Node counts of the scaling experiment; `desk` selects the reduced sizes
/// that keep a laptop-class run short.
pub fn scaling_sizes(desk: bool) -> &'static [usize] {
    if desk {
        &[100, 120, 160, 200]
    } else {
        &[500, 600, 800, 1000]
    }
}

fn two_block_preconditions(m: usize, zeta: f64) -> Result<(), BenchError> {
    if m < 2 || m % 2 != 0 {
        return Err(BenchError::BadConfig(format!(
            "two-block generator needs an even node count >= 2, got {m}"
        )));
    }
    if !(zeta > 0.0 && zeta <= 1.0) {
        return Err(BenchError::BadConfig(format!(
            "cross-block edge probability must lie in (0, 1], got {zeta}"
        )));
    }
    Ok(())
}

fn two_block_once<R: Rng>(
    m: usize,
    zeta: f64,
    scheme: TwoBlockScheme,
    rng: &mut R,
) -> DMatrix<f64> {
    let half = m / 2;
    let within = (half * half) as f64;
    let mut w = DMatrix::zeros(m, m);
    for j in 0..m {
        for l in (j + 1)..m {
            let same_block = (j < half) == (l < half);
            let value = match scheme {
                TwoBlockScheme::Weighted => {
                    // u and the Bernoulli mark are drawn once per unordered
                    // pair; the stream length is fixed for reproducibility.
                    if same_block {
                        rng.gen::<f64>() * within
                    } else {
                        let u = rng.gen::<f64>();
                        let present = rng.gen::<f64>() < zeta;
                        if present {
                            u
                        } else {
                            0.0
                        }
                    }
                }
                TwoBlockScheme::Unweighted => {
                    if same_block || rng.gen::<f64>() < zeta {
                        1.0
                    } else {
                        0.0
                    }
                }
            };
            w[(j, l)] = value;
            w[(l, j)] = value;
        }
    }
    w
}

fn k_block_once<R: Rng>(m: usize, k: usize, rng: &mut R) -> DMatrix<f64> {
    let block = m / k;
    let within = (block * block) as f64;
    let cross_scale = 0.005 / k as f64;
    let mut w = DMatrix::zeros(m, m);
    for j in 0..m {
        for l in (j + 1)..m {
            let value = if j / block == l / block {
                rng.gen::<f64>() * within
            } else {
                let u = rng.gen::<f64>();
                let present = rng.gen::<f64>() < 0.001;
                if present {
                    u * cross_scale
                } else {
                    0.0
                }
            };
            w[(j, l)] = value;
            w[(l, j)] = value;
        }
    }
    w
}

fn retry_connected<R: Rng>(
    rng: &mut R,
    mut build: impl FnMut(&mut R) -> DMatrix<f64>,
) -> Result<(WeightedDigraph, u32), BenchError> {
    for attempt in 0..MAX_GEN_ATTEMPTS {
        match validate_dense(build(rng)) {
            Ok(g) => return Ok((g, attempt)),
            Err(GraphError::NotStronglyConnected { .. }) | Err(GraphError::ZeroOutDegree(_)) => {
                continue
            }
            Err(e) => return Err(e.into()),
        }
    }
    Err(BenchError::GenerationFailed { attempts: MAX_GEN_ATTEMPTS })
}

/// Two-block instance under the random-weight scheme (the walk benchmark
/// form), regenerated until connected.
pub fn gen_two_block<R: Rng>(
    m: usize,
    zeta: f64,
    rng: &mut R,
) -> Result<WeightedDigraph, BenchError> {
    let spec = GeneratorSpec::TwoBlock { m, zeta, scheme: TwoBlockScheme::Weighted };
    let (g, regen) = spec.generate(rng)?;
    log_regenerations(&spec.id(), regen);
    Ok(g)
}

/// Two-block instance with 0/1 weights, for samplers restricted to
/// unweighted graphs.
pub fn gen_two_block_unweighted<R: Rng>(
    m: usize,
    zeta: f64,
    rng: &mut R,
) -> Result<WeightedDigraph, BenchError> {
    let spec = GeneratorSpec::TwoBlock { m, zeta, scheme: TwoBlockScheme::Unweighted };
    let (g, regen) = spec.generate(rng)?;
    log_regenerations(&spec.id(), regen);
    Ok(g)
}

/// K-block instance, regenerated until connected.
pub fn gen_k_block<R: Rng>(m: usize, k: usize, rng: &mut R) -> Result<WeightedDigraph, BenchError> {
    let spec = GeneratorSpec::KBlock { m, k };
    let (g, regen) = spec.generate(rng)?;
    log_regenerations(&spec.id(), regen);
    Ok(g)
}

fn log_regenerations(id: &str, regen: u32) {
    if regen > 0 {
        eprintln!("{id}: {regen} disconnected draw(s) rejected before a connected instance");
    }
}

/// Declarative description of one benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub generator: GeneratorSpec,
    pub algos: Vec<Algo>,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default)]
    pub kappa: KappaPolicy,
    /// Record sinks; extension selects the format (.jsonl or .csv).
    #[serde(default)]
    pub outputs: Vec<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        self.generator.validate()?;
        if self.replicates == 0 {
            return Err(BenchError::BadConfig("replicates must be >= 1".into()));
        }
        if self.algos.is_empty() {
            return Err(BenchError::BadConfig("no algorithms selected".into()));
        }
        match self.kappa {
            KappaPolicy::Fixed(k) if k == 0 => {
                Err(BenchError::BadConfig("fixed threshold must be >= 1".into()))
            }
            KappaPolicy::Proportional(c) if !(c > 0.0 && c.is_finite()) => {
                Err(BenchError::BadConfig("proportional factor must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Error,
}

/// One sampler invocation's instrumentation, as it lands in the record
/// stream. Append-only: readers must accept unknown future fields on newer
/// schema versions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema: u32,
    pub graph_id: String,
    pub algo: Algo,
    pub replicate: usize,
    pub walk_steps: u64,
    pub ff_count: u64,
    /// Walk-step-equivalent work: steps plus three per fast-forward.
    pub iterations: u64,
    pub wall_nanos: u64,
    pub lambda2: f64,
    pub seed: u64,
    pub status: RunStatus,
    pub error: Option<String>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for one replicate, split deterministically from the master seed so
/// replicates are independent streams. Shared across algorithms, which
/// pairs their draws on the same instance.
pub fn replicate_seed(master: u64, replicate: u64) -> u64 {
    splitmix64(master ^ splitmix64(replicate.wrapping_add(0xA076_1D64_78BD_642F)))
}

fn kernel_for(g: &WeightedDigraph) -> Result<TransitionKernel, GraphError> {
    if check_circulation(g, CIRCULATION_TOL) {
        build_kernel_circulation(g)
    } else {
        build_kernel_general(g)
    }
}

/// Runs one experiment: a single generated instance, `replicates` tree
/// draws per algorithm, every record stamped with the instance's spectral
/// bottleneck. Deterministic given the seed, except for wall-clock fields.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>, BenchError> {
    cfg.validate()?;
    let mut gen_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let graph_id = cfg.generator.id();
    let (graph, regen) = cfg.generator.generate(&mut gen_rng)?;
    log_regenerations(&graph_id, regen);
    let kernel = kernel_for(&graph)?;
    let lam = lambda2(&graph, &kernel)?.lambda2;
    let scores = vec![1.0; graph.node_count()];
    let mut records = Vec::with_capacity(cfg.algos.len() * cfg.replicates);
    for &algo in &cfg.algos {
        for replicate in 0..cfg.replicates {
            let seed = replicate_seed(cfg.seed, replicate as u64);
            let mut record = RunRecord {
                schema: RUN_RECORD_SCHEMA,
                graph_id: graph_id.clone(),
                algo,
                replicate,
                walk_steps: 0,
                ff_count: 0,
                iterations: 0,
                wall_nanos: 0,
                lambda2: lam,
                seed,
                status: RunStatus::Ok,
                error: None,
            };
            match sample_rooted_tree_seeded(&graph, &scores, algo, cfg.kappa, seed) {
                Ok((_root, _tree, stats)) => {
                    record.walk_steps = stats.walk_steps;
                    record.ff_count = stats.ff_count;
                    record.iterations = stats.iterations;
                    record.wall_nanos = stats.wall_nanos;
                }
                Err(e) => {
                    record.status = RunStatus::Error;
                    record.error = Some(e.to_string());
                }
            }
            records.push(record);
        }
    }
    for path in &cfg.outputs {
        write_records(&records, path)?;
    }
    Ok(records)
}

/// Appends records to `path`, picking JSON-lines or CSV from the extension.
pub fn write_records(records: &[RunRecord], path: &Path) -> Result<(), BenchError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => append_csv(records, path),
        _ => append_jsonl(records, path),
    }
}

pub fn append_jsonl(records: &[RunRecord], path: &Path) -> Result<(), BenchError> {
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<RunRecord>, BenchError> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(records)
}

pub fn append_csv(records: &[RunRecord], path: &Path) -> Result<(), BenchError> {
    let fresh = match std::fs::metadata(path) {
        Ok(meta) => meta.len() == 0,
        Err(_) => true,
    };
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<RunRecord>, BenchError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut records = Vec::new();
    for row in reader.deserialize() {
        records.push(row?);
    }
    Ok(records)
}

/// One exactness-check instance: a small graph with a fixed root so every
/// run of the suite tests the identical law.
pub struct CorpusEntry {
    pub id: String,
    pub graph: WeightedDigraph,
    pub root: usize,
}

/// The exactness corpus: every connected symmetric graph on 2..=4 nodes
/// with edge weights in {1, 2}, ten random weighted 5-node graphs, five
/// directed circulations, and five general directed graphs. Roots cycle
/// deterministically through the node set.
pub fn oracle_corpus() -> Vec<CorpusEntry> {
    let mut entries = Vec::new();
    for m in 2..=4 {
        exhaustive_symmetric(m, &mut entries);
    }
    random_m5(&mut entries);
    directed_circulations_m4(&mut entries);
    general_directed_m4(&mut entries);
    for (idx, entry) in entries.iter_mut().enumerate() {
        entry.root = idx % entry.graph.node_count();
    }
    entries
}

/// A fast cross-section of [`oracle_corpus`]: a handful of entries from
/// each family.
pub fn smoke_corpus() -> Vec<CorpusEntry> {
    let full = oracle_corpus();
    let mut picked = Vec::new();
    let mut take = |pred: &dyn Fn(&CorpusEntry) -> bool, count: usize| {
        let mut left = count;
        for e in &full {
            if left > 0 && pred(e) {
                picked.push(e.id.clone());
                left -= 1;
            }
        }
    };
    take(&|e| e.id.starts_with("sym_m2"), 2);
    take(&|e| e.id.starts_with("sym_m3"), 3);
    take(&|e| e.id.starts_with("sym_m4"), 3);
    take(&|e| e.id.starts_with("rand_m5"), 1);
    take(&|e| e.id.starts_with("circ_m4"), 1);
    take(&|e| e.id.starts_with("gen_m4"), 1);
    full.into_iter().filter(|e| picked.contains(&e.id)).collect()
}

fn exhaustive_symmetric(m: usize, entries: &mut Vec<CorpusEntry>) {
    let pairs: Vec<(usize, usize)> =
        (0..m).flat_map(|j| ((j + 1)..m).map(move |l| (j, l))).collect();
    let combos = 3usize.pow(pairs.len() as u32);
    for code in 0..combos {
        let mut w = DMatrix::zeros(m, m);
        let mut c = code;
        for &(j, l) in &pairs {
            let weight = match c % 3 {
                0 => 0.0,
                1 => 1.0,
                _ => 2.0,
            };
            c /= 3;
            w[(j, l)] = weight;
            w[(l, j)] = weight;
        }
        if let Ok(graph) = validate_dense(w) {
            entries.push(CorpusEntry { id: format!("sym_m{m}_{code:03}"), graph, root: 0 });
        }
    }
}

fn random_m5(entries: &mut Vec<CorpusEntry>) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0C09_9105);
    for i in 0..10 {
        let graph = loop {
            let mut w = DMatrix::zeros(5, 5);
            for j in 0..5 {
                for l in (j + 1)..5 {
                    if rng.gen::<f64>() < 0.6 {
                        let weight = if rng.gen::<bool>() { 1.0 } else { 2.0 };
                        w[(j, l)] = weight;
                        w[(l, j)] = weight;
                    }
                }
            }
            if let Ok(g) = validate_dense(w) {
                break g;
            }
        };
        entries.push(CorpusEntry { id: format!("rand_m5_{i}"), graph, root: 0 });
    }
}

/// The nine fixed-point-free permutations of four elements; superposing a
/// few of them with integer weights yields a directed circulation (every
/// row and column sums to the same total) without self-loops.
const DERANGEMENTS_4: [[usize; 4]; 9] = [
    [1, 0, 3, 2],
    [1, 2, 3, 0],
    [1, 3, 0, 2],
    [2, 0, 3, 1],
    [2, 3, 0, 1],
    [2, 3, 1, 0],
    [3, 0, 1, 2],
    [3, 2, 0, 1],
    [3, 2, 1, 0],
];

fn directed_circulations_m4(entries: &mut Vec<CorpusEntry>) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0C19_C01A);
    for i in 0..5 {
        let graph = loop {
            let mut w = DMatrix::zeros(4, 4);
            let picks = 2 + (rng.gen::<u8>() % 2) as usize;
            for _ in 0..picks {
                let perm = DERANGEMENTS_4[rng.gen_range(0..DERANGEMENTS_4.len())];
                let weight = if rng.gen::<bool>() { 1.0 } else { 2.0 };
                for (j, &l) in perm.iter().enumerate() {
                    w[(j, l)] += weight;
                }
            }
            let directed = (0..4).any(|j| (0..4).any(|l| w[(j, l)] != w[(l, j)]));
            if !directed {
                continue;
            }
            if let Ok(g) = validate_dense(w) {
                debug_assert!(check_circulation(&g, CIRCULATION_TOL));
                break g;
            }
        };
        entries.push(CorpusEntry { id: format!("circ_m4_{i}"), graph, root: 0 });
    }
}

fn general_directed_m4(entries: &mut Vec<CorpusEntry>) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0DE5_160D);
    for i in 0..5 {
        let graph = loop {
            let mut w = DMatrix::zeros(4, 4);
            for j in 0..4 {
                for l in 0..4 {
                    if j != l && rng.gen::<f64>() < 0.5 {
                        w[(j, l)] = if rng.gen::<bool>() { 1.0 } else { 2.0 };
                    }
                }
            }
            match validate_dense(w) {
                Ok(g) if !check_circulation(&g, CIRCULATION_TOL) => break g,
                _ => continue,
            }
        };
        entries.push(CorpusEntry { id: format!("gen_m4_{i}"), graph, root: 0 });
    }
}

/// Two complete 4-node blocks joined by a single weight-0.01 edge: the
/// bridge is a cut edge, so it appears in every spanning tree and the tree
/// law is uniform while the cover walk still stalls at the bottleneck.
pub fn bridged_cliques() -> WeightedDigraph {
    let m = 8;
    let mut w = DMatrix::zeros(m, m);
    for j in 0..m {
        for l in (j + 1)..m {
            if (j < 4) == (l < 4) {
                w[(j, l)] = 1.0;
                w[(l, j)] = 1.0;
            }
        }
    }
    w[(3, 4)] = 0.01;
    w[(4, 3)] = 0.01;
    validate_dense(w).expect("bridged cliques are connected by construction")
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleResult {
    Report(GofReport),
    Skipped(String),
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleOutcome {
    pub entry: String,
    pub algo: Algo,
    pub result: OracleResult,
}

impl OracleOutcome {
    pub fn failed(&self) -> bool {
        matches!(&self.result, OracleResult::Report(r) if r.pvalue < ORACLE_ALPHA)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleSummary {
    pub outcomes: Vec<OracleOutcome>,
    pub checked: usize,
    pub failed: usize,
    pub skipped: usize,
}

impl OracleSummary {
    /// Whether the suite as a whole passes: failures must stay within the
    /// flake budget (at least one failure is always tolerated, since each
    /// check is a statistical test).
    pub fn passes(&self) -> bool {
        let budget = (self.checked as f64 * ORACLE_FLAKE_RATE).ceil() as usize;
        self.failed <= budget.max(1)
    }
}

/// Runs every requested sampler over the corpus entries and tests the
/// empirical tree frequencies against enumeration. Samplers that reject an
/// entry's kernel are recorded as skips, not failures.
pub fn oracle_check(
    entries: &[CorpusEntry],
    algos: &[Algo],
    n: u64,
    kappa: KappaPolicy,
    master_seed: u64,
) -> Result<OracleSummary, BenchError> {
    let mut outcomes = Vec::new();
    for (idx, entry) in entries.iter().enumerate() {
        let law = enumerate_rooted_trees(&entry.graph, entry.root)?;
        let kernel = kernel_for(&entry.graph)?;
        for (aidx, &algo) in algos.iter().enumerate() {
            let seed = splitmix64(
                master_seed ^ splitmix64((idx as u64) << 8 | aidx as u64),
            );
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut counts = vec![0u64; law.len()];
            let mut skip = None;
            for _ in 0..n {
                let drawn = match algo {
                    Algo::AldousBroder => aldous_broder(&kernel, entry.root, &mut rng),
                    Algo::Wilson => wilson(&kernel, entry.root, &mut rng),
                    Algo::FastForward => {
                        fast_forwarded_cover(&kernel, entry.root, kappa, &mut rng)
                    }
                    Algo::Laplacian => laplacian_sampler(&entry.graph, entry.root, &mut rng),
                };
                match drawn {
                    Ok((tree, _)) => {
                        let cat = law
                            .index_of(&tree)
                            .ok_or_else(|| BenchError::TreeOutsideLaw(entry.id.clone()))?;
                        counts[cat] += 1;
                    }
                    Err(SampleError::UnsupportedKernel(msg)) => {
                        skip = Some(msg);
                        break;
                    }
                    Err(SampleError::NotUnweighted) => {
                        skip = Some("needs a symmetric 0/1 graph".to_string());
                        break;
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            let result = match skip {
                Some(msg) => OracleResult::Skipped(msg),
                None => OracleResult::Report(gof_from_counts(&law, &counts)?),
            };
            outcomes.push(OracleOutcome { entry: entry.id.clone(), algo, result });
        }
    }
    let checked = outcomes
        .iter()
        .filter(|o| matches!(o.result, OracleResult::Report(_)))
        .count();
    let failed = outcomes.iter().filter(|o| o.failed()).count();
    let skipped = outcomes.len() - checked;
    Ok(OracleSummary { outcomes, checked, failed, skipped })
}

/// Draws `n` trees each from the plain cover walk and the fast-forwarded
/// walk on the bridged-cliques graph and compares the two empirical laws.
pub fn ab_ff_two_sample(n: u64, seed: u64) -> Result<GofReport, BenchError> {
    let g = bridged_cliques();
    let kernel = build_kernel_circulation(&g)?;
    let law = enumerate_rooted_trees(&g, 0)?;
    let count = |algo: Algo, seed: u64| -> Result<Vec<u64>, BenchError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = vec![0u64; law.len()];
        for _ in 0..n {
            let (tree, _) = match algo {
                Algo::AldousBroder => aldous_broder(&kernel, 0, &mut rng)?,
                _ => fast_forwarded_cover(&kernel, 0, KappaPolicy::Fixed(50), &mut rng)?,
            };
            let cat = law
                .index_of(&tree)
                .ok_or_else(|| BenchError::TreeOutsideLaw("bridged_cliques".into()))?;
            counts[cat] += 1;
        }
        Ok(counts)
    };
    let a = count(Algo::AldousBroder, splitmix64(seed))?;
    let b = count(Algo::FastForward, splitmix64(seed ^ 0x00FF_00FF_00FF_00FF))?;
    Ok(two_sample_chi2(&a, &b)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_has_documented_shape() {
        let corpus = oracle_corpus();
        let count = |prefix: &str| corpus.iter().filter(|e| e.id.starts_with(prefix)).count();
        assert_eq!(count("sym_m2"), 2);
        assert_eq!(count("sym_m3"), 20);
        assert_eq!(count("sym_m4"), 624);
        assert_eq!(count("rand_m5"), 10);
        assert_eq!(count("circ_m4"), 5);
        assert_eq!(count("gen_m4"), 5);
        assert_eq!(corpus.len(), 666);
        for e in &corpus {
            assert!(e.root < e.graph.node_count());
        }
        for e in corpus.iter().filter(|e| e.id.starts_with("circ_m4")) {
            assert!(check_circulation(&e.graph, 1e-12));
            assert!(e.graph.is_directed());
        }
        for e in corpus.iter().filter(|e| e.id.starts_with("gen_m4")) {
            assert!(!check_circulation(&e.graph, CIRCULATION_TOL));
        }
    }

    #[test]
    fn two_block_zeta_one_has_all_cross_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = gen_two_block(4, 1.0, &mut rng).unwrap();
        // |V1|^2 = 4 scales within-block weights; cross-block weights are
        // bare uniforms.
        for j in 0..4 {
            for l in 0..4 {
                if j == l {
                    continue;
                }
                let w = g.weight(j, l);
                assert!(w > 0.0, "edge ({j},{l}) missing at zeta=1");
                if (j < 2) == (l < 2) {
                    assert!(w <= 4.0);
                } else {
                    assert!(w <= 1.0);
                }
                assert_eq!(w, g.weight(l, j));
            }
        }
    }

    #[test]
    fn two_block_moments_match_the_scheme() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = 100;
        let zeta = 0.25;
        let g = gen_two_block(m, zeta, &mut rng).unwrap();
        let half = m / 2;
        let mut within = Vec::new();
        let mut cross_present = 0usize;
        let mut cross_pairs = 0usize;
        for j in 0..m {
            for l in (j + 1)..m {
                if (j < half) == (l < half) {
                    within.push(g.weight(j, l));
                } else {
                    cross_pairs += 1;
                    if g.weight(j, l) > 0.0 {
                        cross_present += 1;
                    }
                }
            }
        }
        // Within-block weights are Unif(0, 1) * 2500: mean 1250, sd
        // 2500/sqrt(12); test at 3 standard errors.
        let mean: f64 = within.iter().sum::<f64>() / within.len() as f64;
        let se = 2500.0 / 12f64.sqrt() / (within.len() as f64).sqrt();
        assert!(
            (mean - 1250.0).abs() <= 3.0 * se,
            "within-block mean {mean} vs 1250 +- {}",
            3.0 * se
        );
        let rate = cross_present as f64 / cross_pairs as f64;
        let rate_se = (zeta * (1.0 - zeta) / cross_pairs as f64).sqrt();
        assert!(
            (rate - zeta).abs() <= 3.0 * rate_se,
            "cross-block presence {rate} vs {zeta} +- {}",
            3.0 * rate_se
        );
    }

    #[test]
    fn two_block_unweighted_is_zero_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = gen_two_block_unweighted(20, 0.3, &mut rng).unwrap();
        for j in 0..20 {
            for l in 0..20 {
                let w = g.weight(j, l);
                assert!(w == 0.0 || w == 1.0);
                if j != l && (j < 10) == (l < 10) {
                    assert_eq!(w, 1.0, "within-block edge ({j},{l}) missing");
                }
            }
        }
    }

    #[test]
    fn generator_preconditions_are_enforced() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(matches!(gen_two_block(5, 0.5, &mut rng), Err(BenchError::BadConfig(_))));
        assert!(matches!(gen_two_block(4, 0.0, &mut rng), Err(BenchError::BadConfig(_))));
        assert!(matches!(gen_two_block(4, 1.5, &mut rng), Err(BenchError::BadConfig(_))));
        assert!(matches!(gen_k_block(8, 3, &mut rng), Err(BenchError::BadConfig(_))));
        assert!(matches!(gen_k_block(8, 0, &mut rng), Err(BenchError::BadConfig(_))));
    }

    #[test]
    fn k_block_weights_follow_the_block_pattern() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // Structure check on a raw draw; the tiny cross rate would make the
        // connectivity retry loop fail at this size.
        let w = k_block_once(8, 2, &mut rng);
        for j in 0..8 {
            for l in 0..8 {
                if j == l {
                    assert_eq!(w[(j, l)], 0.0);
                } else if j / 4 == l / 4 {
                    assert!(w[(j, l)] > 0.0 && w[(j, l)] <= 16.0);
                } else {
                    assert!(w[(j, l)] <= 0.0025);
                }
                assert_eq!(w[(j, l)], w[(l, j)]);
            }
        }
        let g = gen_k_block(600, 4, &mut rng).unwrap();
        assert_eq!(g.node_count(), 600);
        let max = (0..600)
            .flat_map(|j| (0..600).map(move |l| (j, l)))
            .map(|(j, l)| g.weight(j, l))
            .fold(0.0f64, f64::max);
        assert!(max <= 150.0 * 150.0);
    }

    #[test]
    fn k_block_single_block_is_a_clique() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = gen_k_block(6, 1, &mut rng).unwrap();
        for j in 0..6 {
            for l in 0..6 {
                if j != l {
                    assert!(g.weight(j, l) > 0.0);
                }
            }
        }
    }

    fn small_experiment() -> ExperimentConfig {
        ExperimentConfig {
            generator: GeneratorSpec::TwoBlock {
                m: 16,
                zeta: 0.5,
                scheme: TwoBlockScheme::Weighted,
            },
            algos: vec![Algo::AldousBroder, Algo::FastForward, Algo::Wilson],
            replicates: 3,
            seed: 7,
            kappa: KappaPolicy::Fixed(1000),
            outputs: Vec::new(),
        }
    }

    #[test]
    fn experiment_counts_and_reruns_match() {
        let cfg = small_experiment();
        let records = run_experiment(&cfg).unwrap();
        assert_eq!(records.len(), 9);
        assert!(records.iter().all(|r| r.status == RunStatus::Ok));
        assert!(records.iter().all(|r| r.schema == RUN_RECORD_SCHEMA));
        assert!(records.iter().all(|r| r.lambda2 > 0.0));
        // Replicate seeds are shared across algorithms and distinct across
        // replicates.
        assert_eq!(records[0].seed, records[3].seed);
        assert_ne!(records[0].seed, records[1].seed);
        let again = run_experiment(&cfg).unwrap();
        for (a, b) in records.iter().zip(again.iter()) {
            let mut b = b.clone();
            b.wall_nanos = a.wall_nanos;
            assert_eq!(*a, b);
        }
    }

    #[test]
    fn sampler_errors_become_record_status() {
        let mut cfg = small_experiment();
        cfg.algos = vec![Algo::Laplacian];
        let records = run_experiment(&cfg).unwrap();
        assert_eq!(records.len(), 3);
        for r in &records {
            assert_eq!(r.status, RunStatus::Error);
            assert!(r.error.as_deref().unwrap().contains("0/1"));
        }
    }

    #[test]
    fn record_streams_round_trip() {
        let cfg = small_experiment();
        let records = run_experiment(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let jsonl = dir.path().join("records.jsonl");
        let csv_path = dir.path().join("records.csv");
        append_jsonl(&records, &jsonl).unwrap();
        append_jsonl(&records, &jsonl).unwrap();
        let back = read_jsonl(&jsonl).unwrap();
        assert_eq!(back.len(), 18);
        assert_eq!(&back[..9], &records[..]);
        assert_eq!(&back[9..], &records[..]);
        append_csv(&records, &csv_path).unwrap();
        append_csv(&records, &csv_path).unwrap();
        let back = read_csv(&csv_path).unwrap();
        assert_eq!(back.len(), 18);
        assert_eq!(&back[..9], &records[..]);
    }

    #[test]
    fn fast_forward_fires_on_bottlenecked_instances() {
        let cfg = ExperimentConfig {
            generator: GeneratorSpec::TwoBlock {
                m: 200,
                zeta: 0.01,
                scheme: TwoBlockScheme::Weighted,
            },
            algos: vec![Algo::FastForward],
            replicates: 10,
            seed: 11,
            kappa: KappaPolicy::Fixed(1000),
            outputs: Vec::new(),
        };
        let records = run_experiment(&cfg).unwrap();
        let fired = records.iter().filter(|r| r.ff_count >= 1).count();
        assert!(fired >= 9, "fast-forward fired in only {fired}/10 replicates");
    }

    #[test]
    fn smoke_oracle_check_passes() {
        let corpus = smoke_corpus();
        assert_eq!(corpus.len(), 11);
        let summary = oracle_check(
            &corpus,
            &[Algo::AldousBroder, Algo::FastForward, Algo::Wilson, Algo::Laplacian],
            20_000,
            KappaPolicy::Fixed(2),
            99,
        )
        .unwrap();
        // Directed entries must be skipped by the loop-erased sampler, and
        // any weighted entry by the unweighted-only one.
        assert!(summary.skipped > 0);
        assert!(summary.checked > 0);
        assert!(
            summary.passes(),
            "{} of {} checks failed",
            summary.failed,
            summary.checked
        );
    }

    #[test]
    fn bridged_cliques_two_sample_agrees() {
        let report = ab_ff_two_sample(2_000, 17).unwrap();
        assert!(report.pvalue >= 1e-3, "AB vs FF diverged: p = {}", report.pvalue);
    }

    #[test]
    fn scaling_presets() {
        assert_eq!(scaling_sizes(false), &[500, 600, 800, 1000]);
        assert_eq!(scaling_sizes(true), &[100, 120, 160, 200]);
        let spec = GeneratorSpec::Scaling { m: 100 };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (g, _) = spec.generate(&mut rng).unwrap();
        assert_eq!(g.node_count(), 100);
    }
}
