//! Batch jobs behind the `extpart` binary: build graph stores, cluster,
//! partition and evaluate. Each job prints one JSON report line on stdout
//! and a short human summary on stderr.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use extpart::coloring::{bucket_cluster, BucketConfig, SizeVariant};
use extpart::em::{BlockConfig, Em};
use extpart::graph::{
    build_from_path, compute_balance, compute_cut, read_assignment_file, write_assignment_file, ClusterAssignment,
    DiskGraph, InputFormat, Partition,
};
use extpart::lp::{lp_cluster, LpConfig, Model, TieBreaker, TieMode};
use extpart::multilevel::{contract, partition, renumber, PartitionConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INFEASIBLE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_RESOURCE: i32 = 3;

const MIB: u64 = 1 << 20;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] extpart::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_INPUT,
            CliError::Core(e) => match e {
                extpart::Error::Infeasible(_) => EXIT_INFEASIBLE,
                extpart::Error::OverBudget { .. } | extpart::Error::Config(_) | extpart::Error::Stalled { .. } => {
                    EXIT_RESOURCE
                }
                _ => EXIT_INPUT,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    #[default]
    SeLp,
    SeLpPar,
    ExtLp,
    Bucket,
    BucketScMap,
    BucketScPq,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::SeLp => "se-lp",
            Algo::SeLpPar => "se-lp-par",
            Algo::ExtLp => "ext-lp",
            Algo::Bucket => "bucket",
            Algo::BucketScMap => "bucket-sc-map",
            Algo::BucketScPq => "bucket-sc-pq",
        }
    }

    fn model(self) -> Model {
        match self {
            Algo::SeLp | Algo::SeLpPar => Model::SemiExternal,
            _ => Model::External,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Ties {
    #[default]
    LowestId,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Metis,
    EdgeList,
}

impl From<Format> for InputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Metis => InputFormat::Metis,
            Format::EdgeList => InputFormat::EdgeList,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Build,
    Cluster,
    Partition,
    Evaluate,
}

/// Fully resolved description of one job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobConfig {
    pub command: Command,
    /// Input file for `build`, graph directory otherwise.
    pub input: PathBuf,
    pub output: Option<PathBuf>,
    /// Partition file for `evaluate`.
    pub partition: Option<PathBuf>,
    pub format: Format,
    pub algo: Algo,
    pub k: Option<u64>,
    pub epsilon: f64,
    pub rounds: u64,
    pub constraint: Option<u64>,
    pub memory_budget: u64,
    pub block_size: u64,
    pub seed: u64,
    pub workers: usize,
    pub scratch: Option<PathBuf>,
    pub ties: Ties,
    pub active: bool,
}

impl JobConfig {
    pub fn new(command: Command, input: impl Into<PathBuf>) -> Self {
        Self {
            command,
            input: input.into(),
            output: None,
            partition: None,
            format: Format::Metis,
            algo: Algo::SeLp,
            k: None,
            epsilon: 0.03,
            rounds: 3,
            constraint: None,
            memory_budget: 256 * MIB,
            block_size: MIB,
            seed: 0,
            workers: 1,
            scratch: None,
            ties: Ties::LowestId,
            active: false,
        }
    }

    /// Flag checks that need no I/O.
    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: &str| Err(CliError::Usage(m.to_string()));
        if self.workers == 0 {
            return usage("--workers must be at least 1");
        }
        if !(self.epsilon >= 0.0) {
            return usage("--epsilon must be non-negative");
        }
        if self.block_size == 0 || self.memory_budget < 2 * self.block_size {
            return usage("--memory-budget must hold at least two blocks of --block-size");
        }
        match self.command {
            Command::Build => {
                if self.output.is_none() {
                    return usage("build needs --out <dir>");
                }
            }
            Command::Cluster => {
                match (self.algo, self.constraint) {
                    (Algo::ExtLp, Some(_)) => {
                        return usage(
                            "ext-lp does not support --constraint; use bucket-sc-map or bucket-sc-pq",
                        )
                    }
                    (Algo::Bucket, Some(_)) => {
                        return usage("bucket is unconstrained; use bucket-sc-map or bucket-sc-pq with --constraint")
                    }
                    (Algo::BucketScMap | Algo::BucketScPq, None) => {
                        return usage("bucket-sc-map and bucket-sc-pq need --constraint")
                    }
                    _ => {}
                }
                if self.constraint == Some(0) {
                    return usage("--constraint must be positive");
                }
                if self.active && !matches!(self.algo, Algo::SeLp | Algo::ExtLp) {
                    return usage("--active is available for se-lp and ext-lp only");
                }
            }
            Command::Partition => {
                match self.k {
                    None => return usage("partition needs --k"),
                    Some(k) if k < 2 => return usage("--k must be at least 2"),
                    _ => {}
                }
                if self.active {
                    return usage("--active applies to cluster only");
                }
            }
            Command::Evaluate => {
                if self.partition.is_none() {
                    return usage("evaluate needs a partition file");
                }
                if self.k.is_some_and(|k| k < 2) {
                    return usage("--k must be at least 2");
                }
            }
        }
        Ok(())
    }

    fn tie_breaker(&self) -> TieBreaker {
        TieBreaker {
            seed: self.seed,
            mode: match self.ties {
                Ties::LowestId => TieMode::LowestId,
                Ties::Random => TieMode::Random,
            },
        }
    }

    fn workers(&self) -> usize {
        if self.algo == Algo::SeLpPar {
            self.workers
        } else {
            1
        }
    }
}

/// Accepts plain byte counts and `K`, `KiB`, `M`, `MiB`, `G`, `GiB` suffixes (powers of two).
pub fn parse_size(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let split = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let num: u64 = num.parse().map_err(|_| format!("bad size '{s}'"))?;
    let mult = match unit.trim().to_ascii_lowercase().as_str() {
        "" | "b" => 1,
        "k" | "kib" | "kb" => 1 << 10,
        "m" | "mib" | "mb" => 1 << 20,
        "g" | "gib" | "gb" => 1 << 30,
        _ => return Err(format!("bad size unit in '{s}'")),
    };
    num.checked_mul(mult).ok_or_else(|| format!("size '{s}' overflows"))
}

#[derive(Debug, Parser)]
#[command(name = "extpart", version, about = "Out-of-core graph clustering and partitioning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
    #[command(flatten)]
    pub opts: Opts,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Convert a METIS or edge-list file into a graph directory.
    Build {
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Size-constrained or unconstrained label propagation clustering.
    Cluster {
        graph: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Multilevel k-way partitioning.
    Partition {
        graph: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Recompute cut and balance of an assignment file.
    Evaluate { graph: PathBuf, partition: PathBuf },
}

#[derive(Debug, Args)]
pub struct Opts {
    #[arg(long, global = true, value_enum, default_value_t = Algo::SeLp)]
    pub algo: Algo,
    #[arg(long, global = true)]
    pub k: Option<u64>,
    #[arg(long, global = true, default_value_t = 0.03)]
    pub epsilon: f64,
    #[arg(long, global = true, default_value_t = 3)]
    pub rounds: u64,
    #[arg(long, global = true)]
    pub constraint: Option<u64>,
    #[arg(long, global = true, value_parser = parse_size, default_value = "256MiB")]
    pub memory_budget: u64,
    #[arg(long, global = true, value_parser = parse_size, default_value = "1MiB")]
    pub block_size: u64,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    /// Root for per-job scratch directories (default: system temp dir).
    #[arg(long, global = true)]
    pub scratch: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Metis)]
    pub format: Format,
    #[arg(long, global = true, value_enum, default_value_t = Ties::LowestId)]
    pub ties: Ties,
    /// Re-evaluate only nodes whose neighbourhood changed.
    #[arg(long, global = true)]
    pub active: bool,
}

impl From<Cli> for JobConfig {
    fn from(cli: Cli) -> Self {
        let (command, input, output, partition) = match cli.command {
            Cmd::Build { input, out } => (Command::Build, input, Some(out), None),
            Cmd::Cluster { graph, out } => (Command::Cluster, graph, out, None),
            Cmd::Partition { graph, out } => (Command::Partition, graph, out, None),
            Cmd::Evaluate { graph, partition } => (Command::Evaluate, graph, None, Some(partition)),
        };
        let o = cli.opts;
        JobConfig {
            command,
            input,
            output,
            partition,
            format: o.format,
            algo: o.algo,
            k: o.k,
            epsilon: o.epsilon,
            rounds: o.rounds,
            constraint: o.constraint,
            memory_budget: o.memory_budget,
            block_size: o.block_size,
            seed: o.seed,
            workers: o.workers,
            scratch: o.scratch,
            ties: o.ties,
            active: o.active,
        }
    }
}

/// Result of a finished job.
#[derive(Debug)]
pub struct Outcome {
    /// One-line JSON report.
    pub report: Value,
    /// Human-readable summary.
    pub summary: String,
    pub exit_code: i32,
}

/// Runs the job. The scratch directory is removed on success and kept on
/// failure; its path is then part of the error context on stderr.
pub fn run(job: &JobConfig) -> Result<Outcome, (CliError, Option<PathBuf>)> {
    job.validate().map_err(|e| (e, None))?;
    let cfg = BlockConfig::new(job.block_size, job.memory_budget).map_err(|e| (e.into(), None))?;
    let root = job.scratch.clone().unwrap_or_else(std::env::temp_dir);
    let em = Em::new(cfg, &root).map_err(|e| (e.into(), None))?;
    let result = match job.command {
        Command::Build => run_build(job, &em),
        Command::Cluster => run_cluster(job, &em),
        Command::Partition => run_partition(job, &em),
        Command::Evaluate => run_evaluate(job, &em),
    };
    result.map_err(|e| match e {
        CliError::Usage(_) => (e, None),
        CliError::Core(_) => {
            em.keep_scratch();
            (e, Some(em.scratch_dir().to_path_buf()))
        }
    })
}

fn finish(job: &JobConfig, em: &Em, mut report: Value) -> Value {
    report["io"] = json!(em.io_report());
    report["peak_memory_bytes"] = json!(em.budget().peak());
    report["budget_violations"] = json!(em.budget().violations());
    report["job"] = serde_json::to_value(job).expect("job config serializes");
    report
}

fn run_build(job: &JobConfig, em: &Em) -> Result<Outcome, CliError> {
    let t = Instant::now();
    let g = build_from_path(em, &job.input, job.format.into())?;
    let out = job.output.as_ref().expect("validated");
    let g = g.save(out)?;
    g.validate()?;
    let secs = t.elapsed().as_secs_f64();
    let report = json!({
        "command": "build",
        "n": g.n(),
        "m": g.m(),
        "bytes": g.size_bytes(),
        "phases": { "build": secs },
    });
    Ok(Outcome {
        summary: format!("n={} m={} bytes={} ({:.3}s)", g.n(), g.m(), g.size_bytes(), secs),
        report: finish(job, em, report),
        exit_code: EXIT_OK,
    })
}

/// Number of clusters and heaviest cluster weight, via the quotient graph.
fn cluster_summary(g: &DiskGraph, a: &ClusterAssignment) -> Result<(u64, u64), CliError> {
    let map = renumber(a)?;
    let q = contract(g, &map)?;
    let mut heaviest = 0u64;
    q.node_weights().scan(|w| {
        heaviest = heaviest.max(w);
        Ok(())
    })?;
    Ok((map.n_coarse, heaviest))
}

fn run_cluster(job: &JobConfig, em: &Em) -> Result<Outcome, CliError> {
    let g = DiskGraph::open(em, &job.input)?;
    let mut phases = BTreeMap::new();
    let t = Instant::now();
    let (a, rounds, moves, evaluations) = match job.algo {
        Algo::SeLp | Algo::SeLpPar | Algo::ExtLp => {
            let cfg = LpConfig {
                rounds: job.rounds,
                constraint: job.constraint,
                model: job.algo.model(),
                workers: job.workers(),
                tie: job.tie_breaker(),
                active_nodes: job.active,
            };
            let (a, st) = lp_cluster(&g, &cfg)?;
            (a, st.rounds, st.moves, st.evaluations)
        }
        Algo::Bucket | Algo::BucketScMap | Algo::BucketScPq => {
            let cfg = BucketConfig {
                rounds: job.rounds,
                constraint: job.constraint,
                variant: if job.algo == Algo::BucketScPq {
                    SizeVariant::Pq
                } else {
                    SizeVariant::Map
                },
                tie: job.tie_breaker(),
                class_bound: None,
            };
            let (a, st) = bucket_cluster(&g, &cfg, None)?;
            (a, st.rounds, st.moves, st.evaluations)
        }
    };
    phases.insert("cluster", t.elapsed().as_secs_f64());
    let t = Instant::now();
    if let Some(out) = &job.output {
        write_assignment_file(out, &a, None)?;
    }
    phases.insert("write", t.elapsed().as_secs_f64());
    let t = Instant::now();
    let cut = compute_cut(&g, &a)?;
    let (clusters, heaviest) = cluster_summary(&g, &a)?;
    phases.insert("evaluate", t.elapsed().as_secs_f64());
    let feasible = job.constraint.is_none_or(|u| heaviest <= u);
    let report = json!({
        "command": "cluster",
        "algorithm": job.algo.name(),
        "seed": job.seed,
        "clusters": clusters,
        "cut": cut,
        "max_cluster_weight": heaviest,
        "constraint": job.constraint,
        "feasible": feasible,
        "rounds": rounds,
        "moves": moves,
        "evaluations": evaluations,
        "phases": phases,
    });
    Ok(Outcome {
        summary: format!(
            "{}: {clusters} clusters, cut {cut}, heaviest cluster {heaviest}, {rounds} rounds",
            job.algo.name()
        ),
        report: finish(job, em, report),
        exit_code: if feasible { EXIT_OK } else { EXIT_INFEASIBLE },
    })
}

fn run_partition(job: &JobConfig, em: &Em) -> Result<Outcome, CliError> {
    let g = DiskGraph::open(em, &job.input)?;
    let k = job.k.expect("validated");
    if k > g.n() {
        return Err(CliError::Usage(format!("--k {k} exceeds the node count {}", g.n())));
    }
    let cfg = PartitionConfig {
        k,
        epsilon: job.epsilon,
        coarsening_constraint: job.constraint,
        rounds: job.rounds,
        refine_rounds: job.rounds,
        seed: job.seed,
        tie: job.tie_breaker().mode,
        model: job.algo.model(),
        workers: job.workers(),
        ..PartitionConfig::default()
    };
    let (p, mut metrics) = partition(&g, &cfg)?;
    let t = Instant::now();
    if let Some(out) = &job.output {
        write_assignment_file(out, &p, Some(k))?;
    }
    metrics.phases.insert("write".into(), t.elapsed().as_secs_f64());
    metrics.algorithm = format!("{}:{}", metrics.algorithm, job.algo.name());
    let summary = format!(
        "k={k} cut={} max_block={} L_max={} levels={}",
        metrics.cut,
        metrics.max_block,
        metrics.l_max,
        metrics.levels.len()
    );
    let mut report = serde_json::to_value(&metrics).expect("report serializes");
    report["command"] = json!("partition");
    let mut report = finish(job, em, report);
    // The run's own I/O excludes writing the output file.
    report["io"] = json!(metrics.io);
    Ok(Outcome {
        summary,
        report,
        exit_code: EXIT_OK,
    })
}

fn run_evaluate(job: &JobConfig, em: &Em) -> Result<Outcome, CliError> {
    let g = DiskGraph::open(em, &job.input)?;
    let (a, header_k) = read_assignment_file(em, job.partition.as_ref().expect("validated"))?;
    let cut = compute_cut(&g, &a)?;
    match job.k.or(header_k) {
        Some(k) => {
            let bal = compute_balance(&g, &Partition::new(k, job.epsilon, a))?;
            let summary = format!(
                "cut={cut} max_block={} L_max={} {}",
                bal.max_block,
                bal.l_max,
                if bal.feasible { "feasible" } else { "INFEASIBLE" }
            );
            let report = json!({
                "command": "evaluate",
                "k": k,
                "epsilon": job.epsilon,
                "cut": cut,
                "max_block": bal.max_block,
                "l_max": bal.l_max,
                "feasible": bal.feasible,
                "block_weights": bal.block_weights,
            });
            Ok(Outcome {
                summary,
                report: finish(job, em, report),
                exit_code: if bal.feasible { EXIT_OK } else { EXIT_INFEASIBLE },
            })
        }
        None => {
            let (clusters, heaviest) = cluster_summary(&g, &a)?;
            let feasible = job.constraint.is_none_or(|u| heaviest <= u);
            let report = json!({
                "command": "evaluate",
                "cut": cut,
                "clusters": clusters,
                "max_cluster_weight": heaviest,
                "constraint": job.constraint,
                "feasible": feasible,
            });
            Ok(Outcome {
                summary: format!("cut={cut} clusters={clusters} heaviest={heaviest}"),
                report: finish(job, em, report),
                exit_code: if feasible { EXIT_OK } else { EXIT_INFEASIBLE },
            })
        }
    }
}
