use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{l_max, CsrGraph};
use crate::lp::{best_move, TieBreaker};

const UNASSIGNED: u64 = u64::MAX;

/// In-memory k-way partition of a small graph.
///
/// Each attempt grows `k - 1` blocks greedily from random seeds up to their
/// share of the remaining weight (the last block takes the rest), refines
/// with size-constrained LP, moves nodes out of overloaded blocks, and
/// refines again. The feasible attempt with the smallest cut wins; if no
/// attempt is feasible, a largest-first packing is tried before giving up.
pub fn partition_coarsest(g: &CsrGraph, k: u64, epsilon: f64, seed: u64, attempts: u32) -> Result<Vec<u64>> {
    let n = g.n() as u64;
    if k == 0 || k > n.max(1) {
        return Err(Error::Parameter(format!("k = {k} must lie in [1, {}]", n.max(1))));
    }
    if k == 1 {
        return Ok(vec![0; g.n()]);
    }
    let bound = l_max(g.total_node_weight(), k, epsilon);
    let mut best: Option<(u64, Vec<u64>)> = None;
    let try_one = |best: &mut Option<(u64, Vec<u64>)>, mut p: Vec<u64>| {
        lp_refine(g, &mut p, k, bound, 8);
        rebalance(g, &mut p, k, bound);
        lp_refine(g, &mut p, k, bound, 8);
        if max_block(g, &p, k) <= bound {
            let cut = g.cut(&p);
            if best.as_ref().is_none_or(|(c, _)| cut < *c) {
                *best = Some((cut, p));
            }
        }
    };
    for a in 0..attempts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(a as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        try_one(&mut best, grow(g, k, &mut rng));
    }
    if best.is_none() {
        try_one(&mut best, pack(g, k));
    }
    best.map(|(_, p)| p).ok_or_else(|| {
        Error::Infeasible(format!(
            "no {k}-way partition with blocks of weight at most {bound} was found"
        ))
    })
}

fn block_weights(g: &CsrGraph, p: &[u64], k: u64) -> Vec<u64> {
    let mut w = vec![0u64; k as usize];
    for (v, &b) in p.iter().enumerate() {
        w[b as usize] += g.node_w[v];
    }
    w
}

fn max_block(g: &CsrGraph, p: &[u64], k: u64) -> u64 {
    block_weights(g, p, k).into_iter().max().unwrap_or(0)
}

/// Greedy graph growing: the unassigned node most strongly connected to the
/// current block joins next, smaller ID first on ties.
fn grow(g: &CsrGraph, k: u64, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let n = g.n();
    let mut p = vec![UNASSIGNED; n];
    let mut remaining = g.total_node_weight();
    let mut unassigned: Vec<usize> = (0..n).collect();
    let mut conn = vec![0u64; n];
    let mut rejected = vec![u64::MAX; n];
    for b in 0..k - 1 {
        let target = remaining.div_ceil(k - b);
        let mut weight = 0u64;
        let mut heap: BinaryHeap<(u64, std::cmp::Reverse<usize>)> = BinaryHeap::new();
        loop {
            if weight >= target {
                break;
            }
            let next = match heap.pop() {
                Some((c, std::cmp::Reverse(v))) => {
                    if p[v] != UNASSIGNED || c != conn[v] || rejected[v] == b {
                        continue;
                    }
                    v
                }
                None => {
                    unassigned.retain(|&v| p[v] == UNASSIGNED && rejected[v] != b);
                    if unassigned.is_empty() {
                        break;
                    }
                    unassigned[rng.gen_range(0..unassigned.len())]
                }
            };
            if weight > 0 && weight + g.node_w[next] > target {
                rejected[next] = b;
                continue;
            }
            p[next] = b;
            weight += g.node_w[next];
            for (u, w) in g.neighbors(next) {
                if p[u] == UNASSIGNED {
                    conn[u] += w;
                    heap.push((conn[u], std::cmp::Reverse(u)));
                }
            }
        }
        remaining -= weight;
        conn.iter_mut().for_each(|c| *c = 0);
        unassigned = (0..n).filter(|&v| p[v] == UNASSIGNED).collect();
    }
    for b in p.iter_mut() {
        if *b == UNASSIGNED {
            *b = k - 1;
        }
    }
    p
}

/// Largest node first into the lightest block.
fn pack(g: &CsrGraph, k: u64) -> Vec<u64> {
    let mut order: Vec<usize> = (0..g.n()).collect();
    order.sort_by_key(|&v| (std::cmp::Reverse(g.node_w[v]), v));
    let mut w = vec![0u64; k as usize];
    let mut p = vec![0u64; g.n()];
    for v in order {
        let b = (0..k as usize).min_by_key(|&b| (w[b], b)).unwrap();
        p[v] = b as u64;
        w[b] += g.node_w[v];
    }
    p
}

/// Sequential size-constrained LP with blocks as clusters.
pub(crate) fn lp_refine(g: &CsrGraph, p: &mut [u64], k: u64, bound: u64, rounds: u32) {
    let mut w = block_weights(g, p, k);
    let tb = TieBreaker::lowest_id();
    let mut nb: Vec<(u64, u64)> = Vec::new();
    for _ in 0..rounds {
        let mut moves = 0;
        for v in 0..g.n() {
            nb.clear();
            nb.extend(g.neighbors(v).map(|(u, ew)| (p[u], ew)));
            let own = p[v];
            let to = best_move(v as u64, own, g.node_w[v], &nb, |c| w[c as usize], Some(bound), &tb);
            if to != own {
                w[own as usize] -= g.node_w[v];
                w[to as usize] += g.node_w[v];
                p[v] = to;
                moves += 1;
            }
        }
        if moves == 0 {
            break;
        }
    }
}

/// Moves nodes out of blocks heavier than `bound`, each time choosing the
/// move into a block with room that loses the least cut.
fn rebalance(g: &CsrGraph, p: &mut [u64], k: u64, bound: u64) {
    let mut w = block_weights(g, p, k);
    let mut conn = vec![0i64; k as usize];
    for _ in 0..g.n() {
        let Some(over) = (0..k as usize).filter(|&b| w[b] > bound).max_by_key(|&b| w[b]) else {
            return;
        };
        let mut best: Option<(i64, usize, usize)> = None;
        for v in 0..g.n() {
            if p[v] as usize != over {
                continue;
            }
            conn.iter_mut().for_each(|c| *c = 0);
            for (u, ew) in g.neighbors(v) {
                conn[p[u] as usize] += ew as i64;
            }
            for t in 0..k as usize {
                if t == over || w[t] + g.node_w[v] > bound {
                    continue;
                }
                let gain = conn[t] - conn[over];
                if best.is_none_or(|(bg, _, _)| gain > bg) {
                    best = Some((gain, v, t));
                }
            }
        }
        let Some((_, v, t)) = best else {
            return;
        };
        w[over] -= g.node_w[v];
        w[t] += g.node_w[v];
        p[v] = t as u64;
    }
}
