use super::{best_move_with, LpStats, Scratch, TieBreaker};
use crate::em::{Em, ExternalArray, ExternalPriorityQueue, IoTag};
use crate::graph::DiskGraph;
use crate::error::{Error, Result};

/// Message queue of time-forward LP: key = receiving node, payload =
/// (sender's cluster, edge weight).
pub struct LpQueue {
    pq: ExternalPriorityQueue<(u64, u64)>,
}

impl LpQueue {
    pub fn new(em: &Em, share_bytes: u64) -> Result<Self> {
        Ok(Self {
            pq: ExternalPriorityQueue::new(em, share_bytes)?,
        })
    }

    pub fn len(&self) -> u64 {
        self.pq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pq.is_empty()
    }

    pub fn push(&mut self, v: u64, cluster: u64, w: u64) -> Result<()> {
        self.pq.push(v, (cluster, w))
    }

    pub fn min_key(&mut self) -> Result<Option<u64>> {
        self.pq.min_key()
    }

    pub fn pop(&mut self) -> Result<(u64, u64, u64)> {
        let (k, (c, w)) = self.pq.pop_min()?;
        Ok((k, c, w))
    }
}

fn next_pair(
    rd: &mut crate::em::ArrayReader<(u64, u64)>,
    u: u64,
    n: u64,
) -> Result<u64> {
    match rd.next()? {
        Some((node, c)) if node == u => Ok(c),
        Some((node, _)) => Err(Error::Integrity {
            node,
            msg: format!("assignment out of order, expected node {u}"),
        }),
        None => Err(Error::Dimension { expected: n, got: u }),
    }
}

/// Pushes `(v, cluster[u], w(u, v))` for every edge with `v < u`.
pub fn seed_queues(g: &DiskGraph, assign: &ExternalArray<(u64, u64)>, cur: &mut LpQueue) -> Result<()> {
    let mut rd = assign.reader(IoTag::Scan)?;
    g.for_each_adjacency(|u, list| {
        let c = next_pair(&mut rd, u, g.n())?;
        for e in list {
            if e.target < u {
                cur.push(e.target, c, e.weight)?;
            }
        }
        Ok(())
    })
}

/// One time-forward external LP round; returns the new node-sorted
/// assignment and the number of moves. Unconstrained.
///
/// At node `u` exactly `deg(u)` messages keyed `u` must be at the top of
/// `cur`. After deciding, `u` sends its cluster to larger neighbours through
/// `cur` and to smaller ones through `nxt`. The caller swaps the queues.
pub fn ext_lp_round(
    g: &DiskGraph,
    assign: &ExternalArray<(u64, u64)>,
    cur: &mut LpQueue,
    nxt: &mut LpQueue,
    tb: &TieBreaker,
    stats: &mut LpStats,
) -> Result<(ExternalArray<(u64, u64)>, u64)> {
    let em = g.em();
    let mut rd = assign.reader(IoTag::Scan)?;
    let mut out = ExternalArray::writer(em, IoTag::Scan)?;
    let mut s = Scratch::default();
    let mut msgs: Vec<(u64, u64)> = Vec::new();
    let mut moves = 0u64;
    g.for_each_adjacency(|u, list| {
        let own = next_pair(&mut rd, u, g.n())?;
        msgs.clear();
        while let Some(k) = cur.min_key()? {
            if k > u {
                break;
            }
            let (k, c, w) = cur.pop()?;
            if k < u {
                return Err(Error::MessageIntegrity {
                    node: k,
                    expected: 0,
                    got: 1,
                });
            }
            msgs.push((c, w));
        }
        if msgs.len() != list.len() {
            return Err(Error::MessageIntegrity {
                node: u,
                expected: list.len() as u64,
                got: msgs.len() as u64,
            });
        }
        let (to, _) = best_move_with(&mut s, u, own, 1, msgs.iter().copied(), |_| 0, None, tb);
        stats.evaluations += 1;
        if to != own {
            moves += 1;
        }
        for e in list {
            if e.target > u {
                cur.push(e.target, to, e.weight)?;
            } else {
                nxt.push(e.target, to, e.weight)?;
            }
        }
        out.push((u, to))?;
        Ok(())
    })?;
    if !cur.is_empty() {
        let k = cur.min_key()?.unwrap();
        return Err(Error::MessageIntegrity {
            node: k,
            expected: 0,
            got: cur.len(),
        });
    }
    stats.rounds += 1;
    stats.moves.push(moves);
    Ok((out.finish()?, moves))
}
