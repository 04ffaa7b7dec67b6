//! Size-constrained label propagation.
//!
//! Every variant processes nodes in increasing ID order and uses the same
//! move rule ([`best_move`]): a node moves to the feasible cluster with the
//! strongest connection, but only if that connection is strictly stronger
//! than the one to its current cluster. With the same tie-breaking the
//! variants therefore compute identical clusterings wherever the model
//! allows it.

mod active;
mod external;
mod parallel;

use serde::{Deserialize, Serialize};

pub use active::{active_lp_round, ActiveSet, ExtActiveState};
pub use external::{ext_lp_round, seed_queues, LpQueue};
pub use parallel::{par_se_lp_round, split_block_ranges};

use crate::graph::{ClusterAssignment, DiskGraph, EdgeRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TieMode {
    Random,
    #[default]
    LowestId,
}

/// Deterministic tie-breaking among equally good candidates.
///
/// In random mode the choice is a hash of the seed, the node and the sorted
/// candidate set, so every variant that sees the same candidates for a node
/// picks the same one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TieBreaker {
    pub seed: u64,
    pub mode: TieMode,
}

impl TieBreaker {
    pub fn lowest_id() -> Self {
        Self {
            seed: 0,
            mode: TieMode::LowestId,
        }
    }

    pub fn random(seed: u64) -> Self {
        Self {
            seed,
            mode: TieMode::Random,
        }
    }

    /// Picks one of `sorted` (non-empty, ascending).
    pub fn choose(&self, v: u64, sorted: &[u64]) -> u64 {
        debug_assert!(!sorted.is_empty());
        match self.mode {
            TieMode::LowestId => sorted[0],
            TieMode::Random => {
                if sorted.len() == 1 {
                    return sorted[0];
                }
                let mut h = mix(self.seed ^ 0x9e37_79b9_7f4a_7c15);
                h = mix(h ^ v);
                for &c in sorted {
                    h = mix(h ^ c);
                }
                sorted[(h % sorted.len() as u64) as usize]
            }
        }
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MoveRecord {
    pub node: u64,
    pub from: u64,
    pub to: u64,
    pub gain: u64,
}

/// Per-cluster size (node weight) with an optional upper bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterSizeTable {
    pub sizes: Vec<u64>,
    pub bound: Option<u64>,
}

impl ClusterSizeTable {
    /// Recounts sizes from an in-memory assignment and the node weights.
    pub fn recount(g: &DiskGraph, assign: &[u64], bound: Option<u64>) -> Result<Self> {
        if assign.len() as u64 != g.n() {
            return Err(Error::Dimension {
                expected: g.n(),
                got: assign.len() as u64,
            });
        }
        let mut sizes = vec![0u64; g.n() as usize];
        let mut v = 0usize;
        g.node_weights().scan(|w| {
            let c = assign[v] as usize;
            if c >= sizes.len() {
                return Err(Error::Integrity {
                    node: v as u64,
                    msg: format!("cluster id {c} outside [0, n)"),
                });
            }
            sizes[c] += w;
            v += 1;
            Ok(())
        })?;
        Ok(Self { sizes, bound })
    }

    pub fn feasible(&self, c: u64, w: u64) -> bool {
        match self.bound {
            Some(u) => self.sizes[c as usize] + w <= u,
            None => true,
        }
    }

    pub fn max_size(&self) -> u64 {
        self.sizes.iter().copied().max().unwrap_or(0)
    }
}

/// Counters accumulated over rounds.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LpStats {
    pub rounds: u64,
    pub moves: Vec<u64>,
    pub evaluations: u64,
}

/// Reusable buffer for [`best_move_with`].
#[derive(Default)]
pub(crate) struct Scratch {
    conn: Vec<(u64, u64)>,
    ties: Vec<u64>,
}

/// Chooses the new cluster of `v`.
///
/// `neighborhood` lists `(cluster of neighbour, edge weight)`. The current
/// cluster `own` is always a candidate (possibly with weight 0) and always
/// feasible; another cluster `c` is feasible iff `size_of(c) + weight <= bound`.
/// The node only leaves `own` for a strictly stronger feasible connection.
pub fn best_move(
    v: u64,
    own: u64,
    weight: u64,
    neighborhood: &[(u64, u64)],
    size_of: impl Fn(u64) -> u64,
    bound: Option<u64>,
    tb: &TieBreaker,
) -> u64 {
    let mut s = Scratch::default();
    best_move_with(&mut s, v, own, weight, neighborhood.iter().copied(), size_of, bound, tb).0
}

/// Returns `(new cluster, gain over staying)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn best_move_with(
    s: &mut Scratch,
    v: u64,
    own: u64,
    weight: u64,
    neighborhood: impl IntoIterator<Item = (u64, u64)>,
    size_of: impl Fn(u64) -> u64,
    bound: Option<u64>,
    tb: &TieBreaker,
) -> (u64, u64) {
    s.conn.clear();
    s.conn.extend(neighborhood);
    if s.conn.is_empty() {
        return (own, 0);
    }
    s.conn.sort_unstable_by_key(|p| p.0);
    let mut own_w = 0u64;
    let mut best_w = 0u64;
    s.ties.clear();
    let mut i = 0;
    while i < s.conn.len() {
        let c = s.conn[i].0;
        let mut w = 0u64;
        while i < s.conn.len() && s.conn[i].0 == c {
            w += s.conn[i].1;
            i += 1;
        }
        if c == own {
            own_w = w;
            continue;
        }
        if let Some(u) = bound {
            if size_of(c) + weight > u {
                continue;
            }
        }
        if w > best_w {
            best_w = w;
            s.ties.clear();
            s.ties.push(c);
        } else if w == best_w && w > 0 {
            s.ties.push(c);
        }
    }
    if best_w <= own_w || s.ties.is_empty() {
        return (own, 0);
    }
    (tb.choose(v, &s.ties), best_w - own_w)
}

/// One sequential semi-external round. Moves are applied immediately.
/// Reads the edge array and the node-weight array once each.
pub fn se_lp_round(
    g: &DiskGraph,
    assign: &mut [u64],
    sizes: &mut ClusterSizeTable,
    tb: &TieBreaker,
    stats: &mut LpStats,
) -> Result<u64> {
    check_dims(g, assign, sizes)?;
    let mut s = Scratch::default();
    let mut moves = 0u64;
    g.for_each_node(|v, w, list| {
        stats.evaluations += 1;
        if apply_best(&mut s, v, w, list, assign, sizes, tb) {
            moves += 1;
        }
        Ok(())
    })?;
    stats.rounds += 1;
    stats.moves.push(moves);
    Ok(moves)
}

fn apply_best(
    s: &mut Scratch,
    v: u64,
    w: u64,
    list: &[EdgeRecord],
    assign: &mut [u64],
    sizes: &mut ClusterSizeTable,
    tb: &TieBreaker,
) -> bool {
    let own = assign[v as usize];
    let (to, _) = {
        let a: &[u64] = assign;
        let sz = &sizes.sizes;
        best_move_with(
            s,
            v,
            own,
            w,
            list.iter().map(|e| (a[e.target as usize], e.weight)),
            |c| sz[c as usize],
            sizes.bound,
            tb,
        )
    };
    if to == own {
        return false;
    }
    sizes.sizes[own as usize] -= w;
    sizes.sizes[to as usize] += w;
    assign[v as usize] = to;
    if let Some(u) = sizes.bound {
        assert!(sizes.sizes[to as usize] <= u, "size bound violated by move of {v}");
    }
    true
}

fn check_dims(g: &DiskGraph, assign: &[u64], sizes: &ClusterSizeTable) -> Result<()> {
    if assign.len() as u64 != g.n() || sizes.sizes.len() as u64 != g.n() {
        return Err(Error::Dimension {
            expected: g.n(),
            got: assign.len().min(sizes.sizes.len()) as u64,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    #[default]
    SemiExternal,
    External,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpConfig {
    pub rounds: u64,
    /// Upper bound on cluster weight; `None` for unconstrained.
    pub constraint: Option<u64>,
    pub model: Model,
    /// Worker threads; 1 selects the sequential round.
    pub workers: usize,
    pub tie: TieBreaker,
    pub active_nodes: bool,
}

impl Default for LpConfig {
    fn default() -> Self {
        Self {
            rounds: 3,
            constraint: None,
            model: Model::SemiExternal,
            workers: 1,
            tie: TieBreaker::lowest_id(),
            active_nodes: false,
        }
    }
}

impl LpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::Parameter("workers must be at least 1".into()));
        }
        if self.model == Model::External && self.constraint.is_some() {
            return Err(Error::Unsupported(
                "external label propagation has no size constraint; use bucket clustering \
                 (bucket-sc-map or bucket-sc-pq) for constrained external clustering"
                    .into(),
            ));
        }
        if self.model == Model::External && self.workers > 1 {
            return Err(Error::Unsupported(
                "parallel rounds exist only in the semi-external model".into(),
            ));
        }
        if self.active_nodes && self.workers > 1 {
            return Err(Error::Unsupported(
                "the active-nodes strategy is sequential".into(),
            ));
        }
        Ok(())
    }
}

/// Runs `config.rounds` rounds from the identity clustering, stopping early
/// after a round without moves.
pub fn lp_cluster(g: &DiskGraph, config: &LpConfig) -> Result<(ClusterAssignment, LpStats)> {
    config.validate()?;
    match config.model {
        Model::SemiExternal => {
            let (a, st) = lp_semi_external(g, (0..g.n()).collect(), config)?;
            Ok((ClusterAssignment::InMemory(a), st))
        }
        Model::External => {
            let a = ClusterAssignment::identity_external(g.em(), g.n())?;
            let ClusterAssignment::External(arr) = a else {
                unreachable!()
            };
            let (a, st) = lp_external(g, arr, config)?;
            Ok((ClusterAssignment::External(a), st))
        }
    }
}

/// Semi-external LP from a given assignment (cluster IDs must lie in `[0, n)`).
pub fn lp_semi_external(
    g: &DiskGraph,
    mut assign: Vec<u64>,
    config: &LpConfig,
) -> Result<(Vec<u64>, LpStats)> {
    config.validate()?;
    let mut sizes = ClusterSizeTable::recount(g, &assign, config.constraint)?;
    if let Some(u) = config.constraint {
        if sizes.max_size() > u {
            log::debug!("initial clustering already exceeds bound {u}; moves into full clusters are refused");
        }
    }
    let _res = g.em().reserve(16 * g.n())?;
    let mut stats = LpStats::default();
    let mut act = if config.active_nodes {
        Some(ActiveSet::all(g.n()))
    } else {
        None
    };
    for _ in 0..config.rounds {
        let moves = if let Some(act) = act.as_mut() {
            active_lp_round(g, &mut assign, &mut sizes, &config.tie, act, &mut stats)?
        } else if config.workers > 1 {
            par_se_lp_round(g, &mut assign, &mut sizes, &config.tie, config.workers, &mut stats)?
        } else {
            se_lp_round(g, &mut assign, &mut sizes, &config.tie, &mut stats)?
        };
        log::debug!("lp round {}: {moves} moves", stats.rounds);
        if moves == 0 {
            break;
        }
    }
    Ok((assign, stats))
}

/// External LP from a node-sorted `(node, cluster)` array. Unconstrained.
pub fn lp_external(
    g: &DiskGraph,
    assign: crate::em::ExternalArray<(u64, u64)>,
    config: &LpConfig,
) -> Result<(crate::em::ExternalArray<(u64, u64)>, LpStats)> {
    config.validate()?;
    let mut stats = LpStats::default();
    if config.rounds == 0 {
        return Ok((assign, stats));
    }
    let em = g.em();
    if config.active_nodes {
        let mut st = ExtActiveState::new(g, &assign)?;
        let mut assign = assign;
        for _ in 0..config.rounds {
            let (next, moves) = st.round(g, &assign, &config.tie, &mut stats)?;
            assign = next;
            if moves == 0 {
                break;
            }
        }
        return Ok((assign, stats));
    }
    // Edge, assignment-in and assignment-out streams keep one block each.
    let share = em.available().saturating_sub(4 * em.block_size()) / 2;
    let mut cur = LpQueue::new(em, share)?;
    seed_queues(g, &assign, &mut cur)?;
    let mut nxt = LpQueue::new(em, share)?;
    let mut assign = assign;
    for _ in 0..config.rounds {
        let (next, moves) = ext_lp_round(g, &assign, &mut cur, &mut nxt, &config.tie, &mut stats)?;
        assign = next;
        std::mem::swap(&mut cur, &mut nxt);
        if moves == 0 {
            break;
        }
    }
    Ok((assign, stats))
}
