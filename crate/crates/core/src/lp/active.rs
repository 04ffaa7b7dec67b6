use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{apply_best, check_dims, best_move_with, ClusterSizeTable, LpStats, Scratch, TieBreaker};
use crate::em::{ExternalArray, ExternalPriorityQueue, IoTag};
use crate::graph::{DiskGraph, SENTINEL};
use crate::error::{Error, Result};

/// Nodes to re-evaluate: `current` for this round, `next` for the following one.
/// Duplicates are allowed and collapsed when drained.
#[derive(Debug, Clone, Default)]
pub struct ActiveSet {
    all: bool,
    current: BinaryHeap<Reverse<u64>>,
    next: BinaryHeap<Reverse<u64>>,
}

impl ActiveSet {
    /// Every node active, as in the first round.
    pub fn all(_n: u64) -> Self {
        Self {
            all: true,
            ..Default::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        !self.all && self.current.is_empty()
    }

    /// Pops every copy of `v` from `current`; true if `v` is active.
    fn take(&mut self, v: u64) -> bool {
        let mut hit = self.all;
        while let Some(&Reverse(x)) = self.current.peek() {
            if x > v {
                break;
            }
            self.current.pop();
            hit |= x == v;
        }
        hit
    }
}

/// One semi-external round that only re-evaluates active nodes.
///
/// When `v` moves, neighbours with larger IDs are queued for this round
/// and neighbours with smaller IDs for the next. Without a size
/// constraint this reproduces [`se_lp_round`](super::se_lp_round) exactly:
/// a skipped node's neighbourhood is unchanged, so its decision would be
/// to stay. With a constraint, skipped nodes may miss moves enabled by
/// size changes elsewhere.
pub fn active_lp_round(
    g: &DiskGraph,
    assign: &mut [u64],
    sizes: &mut ClusterSizeTable,
    tb: &TieBreaker,
    act: &mut ActiveSet,
    stats: &mut LpStats,
) -> Result<u64> {
    check_dims(g, assign, sizes)?;
    let mut moves = 0u64;
    if !act.is_empty() {
        let mut s = Scratch::default();
        g.for_each_node(|v, w, list| {
            if !act.take(v) {
                return Ok(());
            }
            stats.evaluations += 1;
            if apply_best(&mut s, v, w, list, assign, sizes, tb) {
                moves += 1;
                for e in list {
                    if e.target > v {
                        act.current.push(Reverse(e.target));
                    } else {
                        act.next.push(Reverse(e.target));
                    }
                }
            }
            Ok(())
        })?;
    }
    act.all = false;
    debug_assert!(act.current.is_empty());
    std::mem::swap(&mut act.current, &mut act.next);
    stats.rounds += 1;
    stats.moves.push(moves);
    Ok(moves)
}

/// State of external active-nodes LP.
///
/// Each edge record carries the cluster of its target. Cluster changes
/// travel as `(receiver, (sender, new cluster))` messages through two
/// priority queues, exactly like time-forward LP, and patch the
/// annotations when the receiver's list is rewritten. A node is active iff
/// it received a message (or in the first round).
pub struct ExtActiveState {
    annotated: ExternalArray<(u64, u64, u64)>,
    cur: ExternalPriorityQueue<(u64, u64)>,
    nxt: ExternalPriorityQueue<(u64, u64)>,
    first: bool,
}

impl ExtActiveState {
    pub fn new(g: &DiskGraph, assign: &ExternalArray<(u64, u64)>) -> Result<Self> {
        let em = g.em();
        let annotated = crate::graph::annotate_targets(g, assign)?;
        let share = em.available().saturating_sub(6 * em.block_size()) / 2;
        Ok(Self {
            annotated,
            cur: ExternalPriorityQueue::new(em, share)?,
            nxt: ExternalPriorityQueue::new(em, share)?,
            first: true,
        })
    }

    pub fn round(
        &mut self,
        g: &DiskGraph,
        assign: &ExternalArray<(u64, u64)>,
        tb: &TieBreaker,
        stats: &mut LpStats,
    ) -> Result<(ExternalArray<(u64, u64)>, u64)> {
        stats.rounds += 1;
        if !self.first && self.cur.is_empty() {
            stats.moves.push(0);
            return Ok((assign.clone(), 0));
        }
        let em = g.em();
        let n = g.n();
        let mut ard = assign.reader(IoTag::Scan)?;
        let mut out_assign = ExternalArray::writer(em, IoTag::Scan)?;
        let mut out_ann = ExternalArray::writer(em, IoTag::Scan)?;
        let mut list: Vec<(u64, u64, u64)> = Vec::new();
        let mut msgs: Vec<(u64, u64)> = Vec::new();
        let mut s = Scratch::default();
        let mut u = 0u64;
        let mut moves = 0u64;
        let first = self.first;
        let (cur, nxt) = (&mut self.cur, &mut self.nxt);
        self.annotated.scan(|rec| {
            if rec.0 != SENTINEL {
                list.push(rec);
                return Ok(());
            }
            let own = match ard.next()? {
                Some((node, c)) if node == u => c,
                _ => {
                    return Err(Error::Integrity {
                        node: u,
                        msg: "assignment does not match the annotated edge array".into(),
                    })
                }
            };
            msgs.clear();
            while let Some(k) = cur.min_key()? {
                if k > u {
                    break;
                }
                let (k, m) = cur.pop_min()?;
                if k < u {
                    return Err(Error::MessageIntegrity {
                        node: k,
                        expected: 0,
                        got: 1,
                    });
                }
                msgs.push(m);
            }
            let active = first || !msgs.is_empty();
            if !msgs.is_empty() {
                msgs.sort_unstable();
                for e in list.iter_mut() {
                    if let Ok(i) = msgs.binary_search_by_key(&e.0, |m| m.0) {
                        e.2 = msgs[i].1;
                    }
                }
            }
            let mut new = own;
            if active {
                stats.evaluations += 1;
                new = best_move_with(&mut s, u, own, 1, list.iter().map(|e| (e.2, e.1)), |_| 0, None, tb).0;
                if new != own {
                    moves += 1;
                    for e in &list {
                        if e.0 > u {
                            cur.push(e.0, (u, new))?;
                        } else {
                            nxt.push(e.0, (u, new))?;
                        }
                    }
                }
            }
            for e in &list {
                out_ann.push(*e)?;
            }
            out_ann.push((SENTINEL, 0, 0))?;
            out_assign.push((u, new))?;
            list.clear();
            u += 1;
            Ok(())
        })?;
        if u != n || !self.cur.is_empty() {
            return Err(Error::Integrity {
                node: u,
                msg: "annotated edge array or message queue inconsistent at round end".into(),
            });
        }
        std::mem::swap(&mut self.cur, &mut self.nxt);
        self.first = false;
        self.annotated = out_ann.finish()?;
        stats.moves.push(moves);
        Ok((out_assign.finish()?, moves))
    }
}

