use std::collections::HashMap;
use std::ops::Range;

use rayon::prelude::*;

use super::{best_move_with, check_dims, ClusterSizeTable, LpStats, MoveRecord, Scratch, TieBreaker};
use crate::em::IoTag;
use crate::graph::{DiskGraph, EdgeRecord};
use crate::error::{Error, Result};

/// Splits a resident span of edge records into `t` ranges so that each
/// complete adjacency list belongs to exactly one range.
///
/// The span must start at the beginning of a list. Records after the last
/// sentinel form an incomplete list and are not covered. Range `i` starts at
/// the first list beginning at or after `i * len / t`; the last range ends
/// after the last sentinel. Surplus workers receive empty ranges.
pub fn split_block_ranges(block: &[EdgeRecord], t: usize) -> Vec<Range<usize>> {
    let t = t.max(1);
    let complete = block
        .iter()
        .rposition(EdgeRecord::is_sentinel)
        .map_or(0, |i| i + 1);
    let mut starts = Vec::with_capacity(t + 1);
    starts.push(0);
    for i in 1..t {
        let begin = i * complete / t;
        // A list begins at `begin` iff the record before it is a sentinel.
        let from = begin.saturating_sub(1);
        let start = block[from..complete]
            .iter()
            .position(EdgeRecord::is_sentinel)
            .map_or(complete, |p| from + p + 1);
        let prev = *starts.last().unwrap();
        starts.push(start.max(prev));
    }
    starts.push(complete);
    starts.windows(2).map(|w| w[0]..w[1]).collect()
}

/// One parallel semi-external round.
///
/// The edge array is processed one resident block at a time. Within a
/// block, `t` workers evaluate their ranges against the assignment and sizes
/// as of block start, each seeing its own earlier moves. The collected moves
/// are then applied in ascending node order; a move whose target cluster
/// no longer has room is dropped.
pub fn par_se_lp_round(
    g: &DiskGraph,
    assign: &mut [u64],
    sizes: &mut ClusterSizeTable,
    tb: &TieBreaker,
    t: usize,
    stats: &mut LpStats,
) -> Result<u64> {
    check_dims(g, assign, sizes)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(t.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {t} workers: {e}")))?;
    let mut weights = g.node_weights().reader(IoTag::Scan)?;
    let mut carry: Vec<EdgeRecord> = Vec::new();
    let mut next_node = 0u64;
    let mut moves = 0u64;
    let mut node_w: Vec<u64> = Vec::new();
    g.edges().scan_blocks(|blk| {
        carry.extend_from_slice(blk);
        let ranges = split_block_ranges(&carry, t);
        let complete = ranges.last().map_or(0, |r| r.end);
        let lists = carry[..complete].iter().filter(|e| e.is_sentinel()).count();
        node_w.clear();
        for _ in 0..lists {
            node_w.push(weights.next()?.ok_or(Error::Integrity {
                node: next_node + node_w.len() as u64,
                msg: "node-weight array too short".into(),
            })?);
        }
        // First node of each range.
        let mut first = Vec::with_capacity(ranges.len());
        let mut node = next_node;
        let mut pos = 0;
        for r in &ranges {
            node += carry[pos..r.start].iter().filter(|e| e.is_sentinel()).count() as u64;
            pos = r.start;
            first.push(node);
        }
        let snapshot: &[u64] = assign;
        let size_snap = &*sizes;
        let span = &carry;
        let nw = &node_w;
        let base = next_node;
        let per_worker: Vec<(Vec<MoveRecord>, u64)> = pool.install(|| {
            ranges
                .par_iter()
                .zip(first.par_iter())
                .map(|(r, &v0)| {
                    evaluate_range(&span[r.clone()], v0, |v| nw[(v - base) as usize], snapshot, size_snap, tb)
                })
                .collect()
        });
        for (list, evals) in per_worker {
            stats.evaluations += evals;
            for mv in list {
                let w = node_w[(mv.node - base) as usize];
                if !sizes.feasible(mv.to, w) {
                    continue;
                }
                debug_assert_eq!(assign[mv.node as usize], mv.from);
                sizes.sizes[mv.from as usize] -= w;
                sizes.sizes[mv.to as usize] += w;
                assign[mv.node as usize] = mv.to;
                moves += 1;
            }
        }
        next_node += lists as u64;
        carry.drain(..complete);
        Ok(())
    })?;
    if next_node != g.n() || !carry.is_empty() {
        return Err(Error::Integrity {
            node: next_node,
            msg: "edge array does not end with a complete adjacency list".into(),
        });
    }
    stats.rounds += 1;
    stats.moves.push(moves);
    Ok(moves)
}

fn evaluate_range(
    span: &[EdgeRecord],
    mut v: u64,
    weight_of: impl Fn(u64) -> u64,
    assign: &[u64],
    sizes: &ClusterSizeTable,
    tb: &TieBreaker,
) -> (Vec<MoveRecord>, u64) {
    let mut s = Scratch::default();
    let mut own_cluster: HashMap<u64, u64> = HashMap::new();
    let mut size_delta: HashMap<u64, i64> = HashMap::new();
    let mut out = Vec::new();
    let mut evals = 0u64;
    let mut start = 0;
    for (i, e) in span.iter().enumerate() {
        if !e.is_sentinel() {
            continue;
        }
        let list = &span[start..i];
        start = i + 1;
        let w = weight_of(v);
        let own = *own_cluster.get(&v).unwrap_or(&assign[v as usize]);
        let cluster_of = |x: u64| *own_cluster.get(&x).unwrap_or(&assign[x as usize]);
        let size_of =
            |c: u64| (sizes.sizes[c as usize] as i64 + size_delta.get(&c).copied().unwrap_or(0)) as u64;
        let (to, gain) = best_move_with(
            &mut s,
            v,
            own,
            w,
            list.iter().map(|e| (cluster_of(e.target), e.weight)),
            size_of,
            sizes.bound,
            tb,
        );
        evals += 1;
        if to != own {
            own_cluster.insert(v, to);
            *size_delta.entry(own).or_insert(0) -= w as i64;
            *size_delta.entry(to).or_insert(0) += w as i64;
            out.push(MoveRecord {
                node: v,
                from: own,
                to,
                gain,
            });
        }
        v += 1;
    }
    (out, evals)
}
