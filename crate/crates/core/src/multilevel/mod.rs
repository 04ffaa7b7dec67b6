//! Multilevel partitioning: coarsen by size-constrained clustering and
//! contraction, partition the coarsest graph in memory, then project and
//! refine level by level.

mod coarsest;
mod contract;
mod project;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use coarsest::partition_coarsest;
pub use contract::{contract, contract_external, contract_semi_external, renumber, ContractionMap};
pub use project::project;

use crate::coloring::{bucket_cluster, BucketConfig, SizeVariant};
use crate::em::{ExternalArray, IoSnapshot};
use crate::error::{Error, Result};
use crate::graph::{
    compute_balance, compute_cut, l_max, write_assignment_file, ClusterAssignment, CsrGraph, DiskGraph, Partition,
};
use crate::lp::{lp_semi_external, LpConfig, Model, TieBreaker, TieMode};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionConfig {
    pub k: u64,
    pub epsilon: f64,
    /// Cluster weight bound while coarsening; `None` uses L_max.
    pub coarsening_constraint: Option<u64>,
    /// LP rounds per coarsening level.
    pub rounds: u64,
    /// LP rounds per refinement level.
    pub refine_rounds: u64,
    pub seed: u64,
    pub tie: TieMode,
    pub model: Model,
    /// Threads for semi-external coarsening rounds.
    pub workers: usize,
    /// Resident bytes at which coarsening stops; `None` uses a quarter of
    /// the memory budget.
    pub stop_threshold: Option<u64>,
    /// Coarsening stalls when a level keeps more than this fraction of nodes.
    pub shrink_factor: f64,
    /// Region-growing attempts on the coarsest graph.
    pub attempts: u32,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            k: 2,
            epsilon: 0.03,
            coarsening_constraint: None,
            rounds: 3,
            refine_rounds: 3,
            seed: 0,
            tie: TieMode::LowestId,
            model: Model::SemiExternal,
            workers: 1,
            stop_threshold: None,
            shrink_factor: 0.95,
            attempts: 4,
        }
    }
}

impl PartitionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Parameter(format!("k must be at least 2, got {}", self.k)));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::Parameter(format!("epsilon must be non-negative, got {}", self.epsilon)));
        }
        if self.workers == 0 {
            return Err(Error::Parameter("workers must be at least 1".into()));
        }
        if !(self.shrink_factor > 0.0 && self.shrink_factor <= 1.0) {
            return Err(Error::Parameter("shrink factor must lie in (0, 1]".into()));
        }
        Ok(())
    }

    fn tie_breaker(&self) -> TieBreaker {
        TieBreaker {
            seed: self.seed,
            mode: self.tie,
        }
    }
}

/// Bytes of a graph loaded as [`CsrGraph`].
pub fn resident_bytes(g: &DiskGraph) -> u64 {
    8 * (g.n() + 1) + 8 * g.n() + 32 * g.m()
}

/// One level: its graph and the map to the next coarser level.
#[derive(Debug, Clone)]
pub struct LevelGraph {
    pub graph: DiskGraph,
    pub map: Option<ContractionMap>,
}

#[derive(Debug, Clone)]
pub struct Hierarchy {
    /// Finest first.
    pub levels: Vec<LevelGraph>,
    pub stop_threshold: u64,
}

impl Hierarchy {
    pub fn coarsest(&self) -> &DiskGraph {
        &self.levels.last().expect("hierarchy has a level").graph
    }

    /// Writes `level_<i>/` graph directories and `map_<i>.bin` files.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for (i, l) in self.levels.iter().enumerate() {
            l.graph.clone().save(dir.join(format!("level_{i}")))?;
            if let Some(m) = &l.map {
                write_assignment_file(dir.join(format!("map_{i}.bin")), &m.map, Some(m.n_coarse))?;
            }
        }
        Ok(())
    }
}

fn cluster_level(g: &DiskGraph, cfg: &PartitionConfig, bound: u64) -> Result<ClusterAssignment> {
    match cfg.model {
        Model::SemiExternal => {
            let lp = LpConfig {
                rounds: cfg.rounds,
                constraint: Some(bound),
                model: Model::SemiExternal,
                workers: cfg.workers,
                tie: cfg.tie_breaker(),
                active_nodes: false,
            };
            let (a, _) = lp_semi_external(g, (0..g.n()).collect(), &lp)?;
            Ok(ClusterAssignment::InMemory(a))
        }
        Model::External => {
            let bc = BucketConfig {
                rounds: cfg.rounds,
                constraint: Some(bound),
                variant: SizeVariant::Map,
                tie: cfg.tie_breaker(),
                class_bound: None,
            };
            Ok(bucket_cluster(g, &bc, None)?.0)
        }
    }
}

/// Builds the hierarchy. Stops when a level's resident size is within the
/// threshold; fails with [`Error::Stalled`] when a level above the
/// threshold shrinks too little (or below `k` nodes).
pub fn coarsen(g: &DiskGraph, cfg: &PartitionConfig) -> Result<Hierarchy> {
    cfg.validate()?;
    let stop = cfg.stop_threshold.unwrap_or(g.em().memory_budget() / 4);
    let bound = cfg
        .coarsening_constraint
        .unwrap_or_else(|| l_max(g.total_node_weight(), cfg.k, cfg.epsilon));
    let mut levels = vec![LevelGraph {
        graph: g.clone(),
        map: None,
    }];
    loop {
        let cur = &levels.last().unwrap().graph;
        let bytes = resident_bytes(cur);
        if bytes <= stop {
            break;
        }
        let n = cur.n();
        let assign = cluster_level(cur, cfg, bound)?;
        let map = renumber(&assign)?;
        drop(assign);
        log::info!("level {}: {} -> {} nodes", levels.len() - 1, n, map.n_coarse);
        if map.n_coarse as f64 > cfg.shrink_factor * n as f64 || map.n_coarse < cfg.k {
            return Err(Error::Stalled {
                nodes: n,
                bytes,
                threshold: stop,
            });
        }
        let coarse = contract(cur, &map)?;
        levels.last_mut().unwrap().map = Some(map);
        levels.push(LevelGraph {
            graph: coarse,
            map: None,
        });
    }
    Ok(Hierarchy {
        levels,
        stop_threshold: stop,
    })
}

/// Size-constrained LP from a feasible partition, blocks as clusters and
/// L_max as bound. Sequential semi-external rounds for an in-memory
/// partition, constrained bucket rounds for an external one.
pub fn refine_level(g: &DiskGraph, p: ClusterAssignment, cfg: &PartitionConfig) -> Result<ClusterAssignment> {
    let bal = compute_balance(g, &Partition::new(cfg.k, cfg.epsilon, p.clone()))?;
    if !bal.feasible {
        return Err(Error::Infeasible(format!(
            "refinement needs a feasible partition (heaviest block {} > L_max {})",
            bal.max_block, bal.l_max
        )));
    }
    if cfg.refine_rounds == 0 {
        return Ok(p);
    }
    match p {
        ClusterAssignment::InMemory(v) => {
            let lp = LpConfig {
                rounds: cfg.refine_rounds,
                constraint: Some(bal.l_max),
                model: Model::SemiExternal,
                workers: 1,
                tie: cfg.tie_breaker(),
                active_nodes: false,
            };
            Ok(ClusterAssignment::InMemory(lp_semi_external(g, v, &lp)?.0))
        }
        ClusterAssignment::External(a) => {
            let bc = BucketConfig {
                rounds: cfg.refine_rounds,
                constraint: Some(bal.l_max),
                variant: SizeVariant::Map,
                tie: cfg.tie_breaker(),
                class_bound: None,
            };
            Ok(bucket_cluster(g, &bc, Some(a))?.0)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelInfo {
    pub n: u64,
    pub m: u64,
}

/// Outcome of a job.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub algorithm: String,
    pub seed: u64,
    pub k: u64,
    pub epsilon: f64,
    pub cut: u64,
    pub max_block: u64,
    pub l_max: u64,
    pub feasible: bool,
    pub block_weights: Vec<u64>,
    /// Wall time per phase in seconds.
    pub phases: BTreeMap<String, f64>,
    pub io: IoSnapshot,
    pub peak_memory_bytes: u64,
    pub levels: Vec<LevelInfo>,
}

/// Full multilevel run. The result is always feasible; otherwise an
/// [`Error::Infeasible`] is returned.
pub fn partition(g: &DiskGraph, cfg: &PartitionConfig) -> Result<(ClusterAssignment, MetricsReport)> {
    cfg.validate()?;
    if cfg.k > g.n() {
        return Err(Error::Parameter(format!("k = {} exceeds the node count {}", cfg.k, g.n())));
    }
    let em = g.em();
    let io0 = em.io_report();
    let mut phases = BTreeMap::new();

    let t = Instant::now();
    let h = coarsen(g, cfg)?;
    phases.insert("coarsen".to_string(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    let coarse = h.coarsest();
    let p = {
        let _res = em.reserve(resident_bytes(coarse))?;
        let csr = CsrGraph::load(coarse)?;
        partition_coarsest(&csr, cfg.k, cfg.epsilon, cfg.seed, cfg.attempts)?
    };
    let mut p = match cfg.model {
        Model::SemiExternal => ClusterAssignment::InMemory(p),
        Model::External => {
            ClusterAssignment::External(ExternalArray::from_iter(em, p.into_iter().enumerate().map(|(v, b)| (v as u64, b)))?)
        }
    };
    phases.insert("initial".to_string(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    for level in h.levels.iter().rev().skip(1) {
        let map = level.map.as_ref().expect("non-coarsest level has a map");
        p = project(&p, map)?;
        p = refine_level(&level.graph, p, cfg)?;
    }
    phases.insert("uncoarsen".to_string(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    let cut = compute_cut(g, &p)?;
    let bal = compute_balance(g, &Partition::new(cfg.k, cfg.epsilon, p.clone()))?;
    phases.insert("evaluate".to_string(), t.elapsed().as_secs_f64());
    if !bal.feasible {
        return Err(Error::Infeasible(format!(
            "heaviest block {} exceeds L_max {}",
            bal.max_block, bal.l_max
        )));
    }
    let report = MetricsReport {
        algorithm: match cfg.model {
            Model::SemiExternal => "multilevel-se".into(),
            Model::External => "multilevel-ext".into(),
        },
        seed: cfg.seed,
        k: cfg.k,
        epsilon: cfg.epsilon,
        cut,
        max_block: bal.max_block,
        l_max: bal.l_max,
        feasible: bal.feasible,
        block_weights: bal.block_weights,
        phases,
        io: em.io_report().since(&io0),
        peak_memory_bytes: em.budget().peak(),
        levels: h
            .levels
            .iter()
            .map(|l| LevelInfo {
                n: l.graph.n(),
                m: l.graph.m(),
            })
            .collect(),
    };
    Ok((p, report))
}
