//! Clustering through color classes.
//!
//! A greedy coloring splits the nodes into independent sets. Label
//! propagation then processes one color class at a time: every node of the
//! class finds the clusters of all its neighbours in the bucket of that
//! color, decides, and answers each neighbour through the neighbour's
//! bucket. Every undirected edge therefore owns exactly one tuple at any
//! time, and one round costs a scan plus a sort of the edges.
//!
//! Size-constrained rounds keep the cluster sizes in a [`ClusterSizeArray`]
//! and need either an in-memory map per bucket (`SizeVariant::Map`) or
//! forwarding chains through a priority queue (`SizeVariant::Pq`).

mod buckets;
mod sizes;

use serde::{Deserialize, Serialize};

pub use buckets::{
    build_forward_structures, init_buckets, process_bucket, process_bucket_sized_map,
    process_bucket_sized_pq, BucketTuple, Buckets, Member,
};
pub use sizes::{ClusterSizeArray, SortedIds};

use crate::em::{Em, ExternalArray, ExternalPriorityQueue, IoSnapshot, IoTag};
use crate::error::{Error, Result};
use crate::graph::{annotate_targets, ClusterAssignment, DiskGraph};
use crate::lp::TieBreaker;

/// Node colors with at most `class_bound` nodes per color.
#[derive(Debug, Clone)]
pub struct Coloring {
    colors: ExternalArray<(u64, u64)>,
    class_sizes: Vec<u64>,
    class_bound: u64,
}

impl Coloring {
    /// Node-sorted `(node, color)` pairs.
    pub fn colors(&self) -> &ExternalArray<(u64, u64)> {
        &self.colors
    }

    pub fn num_colors(&self) -> u64 {
        self.class_sizes.len() as u64
    }

    pub fn class_sizes(&self) -> &[u64] {
        &self.class_sizes
    }

    pub fn class_bound(&self) -> u64 {
        self.class_bound
    }

    pub fn to_vec(&self) -> Result<Vec<u64>> {
        Ok(self.colors.to_vec()?.into_iter().map(|p| p.1).collect())
    }

    /// Wraps an explicit coloring. Properness is not checked here;
    /// [`init_buckets`] rejects an edge between equal colors.
    pub fn from_vec(em: &Em, colors: &[u64], class_bound: u64) -> Result<Self> {
        let k = colors.iter().max().map_or(0, |&c| c + 1) as usize;
        let mut class_sizes = vec![0u64; k];
        for &c in colors {
            class_sizes[c as usize] += 1;
        }
        if let Some(&big) = class_sizes.iter().find(|&&s| s > class_bound) {
            return Err(Error::Parameter(format!(
                "color class of size {big} exceeds the class bound {class_bound}"
            )));
        }
        Ok(Self {
            colors: ExternalArray::from_iter(em, colors.iter().enumerate().map(|(v, &c)| (v as u64, c)))?,
            class_sizes,
            class_bound,
        })
    }
}

/// Default class bound: `n` over a quarter of the blocks that fit in
/// memory, so the capped classes alone need at most a quarter of the
/// memory for bucket buffers.
pub fn default_class_bound(n: u64, em: &Em) -> u64 {
    let slots = (em.memory_budget() / em.block_size() / 4).max(1);
    n.div_ceil(slots).max(1)
}

/// Greedy coloring in increasing node order, time-forward.
///
/// Node `u` receives the colors of its smaller neighbours through a
/// priority queue and takes the smallest color that none of them uses and
/// whose class still has room below `class_bound`. It then sends its color
/// to every larger neighbour.
pub fn tfp_greedy_coloring(g: &DiskGraph, class_bound: u64) -> Result<Coloring> {
    if class_bound == 0 {
        return Err(Error::Parameter("class bound must be at least 1".into()));
    }
    let em = g.em();
    let share = em.available().saturating_sub(4 * em.block_size());
    let mut pq = ExternalPriorityQueue::<u64>::new(em, share)?;
    let mut out = ExternalArray::writer(em, IoTag::Scan)?;
    let mut class_sizes: Vec<u64> = Vec::new();
    let mut used: Vec<u64> = Vec::new();
    g.for_each_adjacency(|u, list| {
        used.clear();
        while let Some(k) = pq.min_key()? {
            if k > u {
                break;
            }
            let (_, c) = pq.pop_min()?;
            used.push(c);
        }
        used.sort_unstable();
        let mut c = 0u64;
        loop {
            let taken = used.binary_search(&c).is_ok();
            let full = class_sizes.get(c as usize).is_some_and(|&s| s >= class_bound);
            if !taken && !full {
                break;
            }
            c += 1;
        }
        if c as usize == class_sizes.len() {
            class_sizes.push(0);
        }
        class_sizes[c as usize] += 1;
        for e in list {
            if e.target > u {
                pq.push(e.target, c)?;
            }
        }
        out.push((u, c))
    })?;
    Ok(Coloring {
        colors: out.finish()?,
        class_sizes,
        class_bound,
    })
}

/// Edge array annotated with the target's color: `(target, weight, color)`.
pub fn annotate_edges_with_colors(g: &DiskGraph, coloring: &Coloring) -> Result<ExternalArray<(u64, u64, u64)>> {
    annotate_targets(g, coloring.colors())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SizeVariant {
    /// Sizes of the clusters seen by a bucket are fetched into a map;
    /// oversized buckets are split into node-ID ranges.
    #[default]
    Map,
    /// Sizes travel along forwarding chains through a priority queue.
    Pq,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BucketConfig {
    pub rounds: u64,
    pub constraint: Option<u64>,
    pub variant: SizeVariant,
    pub tie: TieBreaker,
    /// Maximum color class size; `None` selects [`default_class_bound`].
    pub class_bound: Option<u64>,
}

impl Default for BucketConfig {
    fn default() -> Self {
        Self {
            rounds: 3,
            constraint: None,
            variant: SizeVariant::Map,
            tie: TieBreaker::lowest_id(),
            class_bound: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct BucketStats {
    pub colors: u64,
    pub class_bound: u64,
    pub rounds: u64,
    pub moves: Vec<u64>,
    pub evaluations: u64,
    /// I/O of each round.
    pub round_io: Vec<IoSnapshot>,
}

/// Blocks needed beside the bucket buffers.
fn working_blocks(constrained: bool, variant: SizeVariant) -> u64 {
    match (constrained, variant) {
        (false, _) => 4,
        (true, SizeVariant::Map) => 8,
        (true, SizeVariant::Pq) => 12,
    }
}

/// Runs bucket label propagation from `initial` (identity if `None`).
pub fn bucket_cluster(
    g: &DiskGraph,
    config: &BucketConfig,
    initial: Option<ExternalArray<(u64, u64)>>,
) -> Result<(ClusterAssignment, BucketStats)> {
    let em = g.em();
    let bound = config.class_bound.unwrap_or_else(|| default_class_bound(g.n(), em));
    let coloring = tfp_greedy_coloring(g, bound)?;
    let need = coloring.num_colors() + working_blocks(config.constraint.is_some(), config.variant);
    let slots = em.memory_budget() / em.block_size();
    if need > slots {
        return Err(Error::Config(format!(
            "{} colors need {need} blocks of memory but only {slots} fit; raise the class bound or the memory budget",
            coloring.num_colors()
        )));
    }
    let assign = match initial {
        Some(a) => {
            if a.len() != g.n() {
                return Err(Error::Dimension {
                    expected: g.n(),
                    got: a.len(),
                });
            }
            a
        }
        None => match ClusterAssignment::identity_external(em, g.n())? {
            ClusterAssignment::External(a) => a,
            ClusterAssignment::InMemory(_) => unreachable!(),
        },
    };
    let mut sizes = match config.constraint {
        Some(_) => Some(ClusterSizeArray::from_assignment(g, &assign)?),
        None => None,
    };
    let annotated = annotate_edges_with_colors(g, &coloring)?;
    let mut buckets = init_buckets(g, &annotated, &coloring, &assign)?;
    drop(annotated);
    drop(assign);
    let mut stats = BucketStats {
        colors: coloring.num_colors(),
        class_bound: bound,
        ..Default::default()
    };
    for _ in 0..config.rounds {
        let before = em.io_report();
        let mut moves = 0u64;
        for i in 0..buckets.num_colors() {
            moves += match (&mut sizes, config.constraint) {
                (Some(s), Some(u)) => match config.variant {
                    SizeVariant::Map => process_bucket_sized_map(&mut buckets, i, s, u, &config.tie, &mut stats)?,
                    SizeVariant::Pq => process_bucket_sized_pq(&mut buckets, i, s, u, &config.tie, &mut stats)?,
                },
                _ => process_bucket(&mut buckets, i, &config.tie, &mut stats)?,
            };
        }
        stats.rounds += 1;
        stats.moves.push(moves);
        stats.round_io.push(em.io_report().since(&before));
        if moves == 0 {
            break;
        }
    }
    drop(sizes);
    Ok((ClusterAssignment::External(buckets.into_assignment()?), stats))
}
