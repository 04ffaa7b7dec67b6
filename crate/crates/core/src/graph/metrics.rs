use serde::Serialize;

use super::{ClusterAssignment, DiskGraph};
use crate::em::{external_sort, ExternalArray, IoTag};
use crate::error::{Error, Result};

/// A k-way partition: block IDs in `[0, k)` plus the imbalance parameter.
#[derive(Debug, Clone)]
pub struct Partition {
    pub k: u64,
    pub epsilon: f64,
    pub assignment: ClusterAssignment,
}

impl Partition {
    pub fn new(k: u64, epsilon: f64, assignment: ClusterAssignment) -> Self {
        Self {
            k,
            epsilon,
            assignment,
        }
    }

    pub fn l_max(&self, total_weight: u64) -> u64 {
        l_max(total_weight, self.k, self.epsilon)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Balance {
    pub max_block: u64,
    pub l_max: u64,
    pub feasible: bool,
    pub block_weights: Vec<u64>,
}

/// `floor((1 + eps) * ceil(total / k))`. A tiny tolerance absorbs
/// binary-float error so that e.g. `1.03 * 100` floors to 103.
pub fn l_max(total: u64, k: u64, epsilon: f64) -> u64 {
    let k = k.max(1);
    let base = total.div_ceil(k) as f64;
    ((1.0 + epsilon) * base + 1e-9).floor() as u64
}

fn check_len(g: &DiskGraph, a: &ClusterAssignment) -> Result<()> {
    if a.len() != g.n() {
        return Err(Error::Dimension {
            expected: g.n(),
            got: a.len(),
        });
    }
    Ok(())
}

/// Total weight of undirected edges whose endpoints lie in different blocks.
///
/// With an in-memory assignment this is one scan of the edge array. With an
/// external assignment the block of every edge's target is obtained by a
/// sort-based join.
pub fn compute_cut(g: &DiskGraph, a: &ClusterAssignment) -> Result<u64> {
    check_len(g, a)?;
    match a {
        ClusterAssignment::InMemory(blocks) => {
            let mut cut = 0u64;
            g.for_each_adjacency(|u, list| {
                let bu = blocks[u as usize];
                for e in list {
                    if e.target > u && blocks[e.target as usize] != bu {
                        cut += e.weight;
                    }
                }
                Ok(())
            })?;
            Ok(cut)
        }
        ClusterAssignment::External(arr) => {
            let em = g.em();
            // (target, block of source, weight) for each edge with source < target.
            let mut msgs = ExternalArray::<(u64, u64, u64)>::writer(em, IoTag::Scan)?;
            let mut rd = arr.reader(IoTag::Scan)?;
            g.for_each_adjacency(|u, list| {
                let (node, bu) = rd.next()?.ok_or(Error::Dimension {
                    expected: g.n(),
                    got: u,
                })?;
                if node != u {
                    return Err(Error::Integrity {
                        node,
                        msg: format!("assignment out of order, expected node {u}"),
                    });
                }
                for e in list {
                    if e.target > u {
                        msgs.push((e.target, bu, e.weight))?;
                    }
                }
                Ok(())
            })?;
            drop(rd);
            let msgs = external_sort(&msgs.finish()?, |x, y| x.0.cmp(&y.0))?;
            let mut mr = msgs.reader(IoTag::Scan)?;
            let mut cut = 0u64;
            arr.scan(|(v, bv)| {
                while let Some(&(t, bu, w)) = mr.peek()? {
                    if t != v {
                        break;
                    }
                    if bu != bv {
                        cut += w;
                    }
                    mr.next()?;
                }
                Ok(())
            })?;
            Ok(cut)
        }
    }
}

/// Sum of node weights per block. Fails if some block ID is `>= k`.
pub fn compute_block_weights(g: &DiskGraph, a: &ClusterAssignment, k: u64) -> Result<Vec<u64>> {
    check_len(g, a)?;
    let mut weights = vec![0u64; k as usize];
    let mut nw = g.node_weights().reader(IoTag::Scan)?;
    a.scan(|v, b| {
        let w = nw.next()?.unwrap();
        if b >= k {
            return Err(Error::Integrity {
                node: v,
                msg: format!("block {b} outside [0, {k})"),
            });
        }
        weights[b as usize] += w;
        Ok(())
    })?;
    Ok(weights)
}

/// Maximum block weight, `L_max` and the feasibility verdict. Block
/// weight is node weight, which on input graphs is the node count.
pub fn compute_balance(g: &DiskGraph, p: &Partition) -> Result<Balance> {
    if p.k < 2 {
        return Err(Error::Parameter(format!("k must be at least 2, got {}", p.k)));
    }
    if p.epsilon.is_nan() || p.epsilon < 0.0 {
        return Err(Error::Parameter(format!("epsilon must be >= 0, got {}", p.epsilon)));
    }
    let block_weights = compute_block_weights(g, &p.assignment, p.k)?;
    let max_block = block_weights.iter().copied().max().unwrap_or(0);
    let l_max = p.l_max(g.total_node_weight());
    Ok(Balance {
        max_block,
        l_max,
        feasible: max_block <= l_max,
        block_weights,
    })
}
