use std::collections::HashMap;

use crate::em::{external_sort, ExternalArray, IoTag};
use crate::error::{Error, Result};
use crate::graph::{annotate_targets, assemble, ClusterAssignment, DiskGraph, EdgeRecord, GraphWriter};

/// Fine-to-coarse mapping with dense coarse IDs `0..n_coarse`.
#[derive(Debug, Clone)]
pub struct ContractionMap {
    pub map: ClusterAssignment,
    pub n_coarse: u64,
}

impl ContractionMap {
    pub fn is_external(&self) -> bool {
        self.map.is_external()
    }
}

/// Renumbers cluster IDs densely in ascending order of the original ID.
///
/// An in-memory assignment is renumbered in memory without I/O; an external
/// one with two sorts.
pub fn renumber(assignment: &ClusterAssignment) -> Result<ContractionMap> {
    match assignment {
        ClusterAssignment::InMemory(a) => {
            let mut ids = a.clone();
            ids.sort_unstable();
            ids.dedup();
            let map = a.iter().map(|c| ids.binary_search(c).unwrap() as u64).collect();
            Ok(ContractionMap {
                map: ClusterAssignment::InMemory(map),
                n_coarse: ids.len() as u64,
            })
        }
        ClusterAssignment::External(a) => {
            let em = a.em();
            let mut by_cluster = ExternalArray::<(u64, u64)>::writer(em, IoTag::Scan)?;
            a.scan(|(v, c)| by_cluster.push((c, v)))?;
            let by_cluster = external_sort(&by_cluster.finish()?, |x, y| x.cmp(y))?;
            let mut dense = ExternalArray::<(u64, u64)>::writer(em, IoTag::Scan)?;
            let mut last: Option<u64> = None;
            let mut next = 0u64;
            by_cluster.scan(|(c, v)| {
                if last.is_some_and(|l| l != c) {
                    next += 1;
                }
                last = Some(c);
                dense.push((v, next))
            })?;
            let n_coarse = if last.is_some() { next + 1 } else { 0 };
            drop(by_cluster);
            let map = external_sort(&dense.finish()?, |x, y| x.0.cmp(&y.0))?;
            Ok(ContractionMap {
                map: ClusterAssignment::External(map),
                n_coarse,
            })
        }
    }
}

/// Quotient graph by sorting: triples `(cluster[u], cluster[v], w)` of all
/// crossing half-edges are sorted and merged, node weights aggregated by a
/// second sort.
pub fn contract_external(g: &DiskGraph, map: &ContractionMap) -> Result<DiskGraph> {
    let em = g.em();
    let owned;
    let pairs = match &map.map {
        ClusterAssignment::External(a) => a,
        ClusterAssignment::InMemory(_) => {
            owned = map.map.to_external(em)?;
            &owned
        }
    };
    if pairs.len() != g.n() {
        return Err(Error::Dimension {
            expected: g.n(),
            got: pairs.len(),
        });
    }
    let annotated = annotate_targets(g, pairs)?;
    let mut triples = ExternalArray::<(u64, u64, u64)>::writer(em, IoTag::Scan)?;
    let mut weights = ExternalArray::<(u64, u64)>::writer(em, IoTag::Scan)?;
    {
        let mut mr = pairs.reader(IoTag::Scan)?;
        let mut wr = g.node_weights().reader(IoTag::Scan)?;
        let mut cu: Option<u64> = None;
        let mut u = 0u64;
        annotated.scan(|(t, w, ct)| {
            let c = match cu {
                Some(c) => c,
                None => {
                    let (_, c) = mr.next()?.ok_or(Error::Dimension { expected: g.n(), got: u })?;
                    let nw = wr.next()?.ok_or(Error::Dimension { expected: g.n(), got: u })?;
                    check_coarse(u, c, map.n_coarse)?;
                    weights.push((c, nw))?;
                    cu = Some(c);
                    c
                }
            };
            if t == crate::graph::SENTINEL {
                cu = None;
                u += 1;
            } else if c != ct {
                triples.push((c, ct, w))?;
            }
            Ok(())
        })?;
    }
    drop(annotated);
    let weights = external_sort(&weights.finish()?, |a, b| a.0.cmp(&b.0))?;
    let mut agg = ExternalArray::<u64>::writer(em, IoTag::Scan)?;
    {
        let mut rd = weights.reader(IoTag::Scan)?;
        for c in 0..map.n_coarse {
            let mut s = 0u64;
            while let Some(&(x, w)) = rd.peek()? {
                if x != c {
                    break;
                }
                s += w;
                rd.next()?;
            }
            if s == 0 {
                return Err(Error::Integrity {
                    node: c,
                    msg: "contraction map is not surjective".into(),
                });
            }
            agg.push(s)?;
        }
    }
    drop(weights);
    assemble(em, map.n_coarse, &triples.finish()?, &agg.finish()?)
}

fn check_coarse(v: u64, c: u64, n_coarse: u64) -> Result<()> {
    if c >= n_coarse {
        return Err(Error::Integrity {
            node: v,
            msg: format!("coarse id {c} outside [0, {n_coarse})"),
        });
    }
    Ok(())
}

/// Bytes charged per distinct coarse edge in the in-memory accumulator.
const ENTRY_BYTES: u64 = 48;

/// Quotient graph with one scan and an in-memory accumulation of coarse
/// edges. Fails with [`Error::OverBudget`] when the coarse edge set does not
/// fit; the output is identical to [`contract_external`].
pub fn contract_semi_external(g: &DiskGraph, map: &[u64], n_coarse: u64) -> Result<DiskGraph> {
    if map.len() as u64 != g.n() {
        return Err(Error::Dimension {
            expected: g.n(),
            got: map.len() as u64,
        });
    }
    let em = g.em();
    let over = |requested: u64| Error::OverBudget {
        requested,
        in_use: em.memory_budget() - em.available(),
        limit: em.memory_budget(),
    };
    if 8 * n_coarse > em.available() {
        return Err(over(8 * n_coarse));
    }
    let mut res = em.reserve(8 * n_coarse)?;
    let mut node_w = vec![0u64; n_coarse as usize];
    let mut acc: HashMap<(u64, u64), u64> = HashMap::new();
    let mut charged = 0u64;
    g.for_each_node(|v, w, list| {
        let c = map[v as usize];
        check_coarse(v, c, n_coarse)?;
        node_w[c as usize] += w;
        for e in list {
            let ct = map[e.target as usize];
            if ct != c {
                *acc.entry((c, ct)).or_insert(0) += e.weight;
            }
        }
        if acc.len() as u64 > charged {
            charged = (acc.len() as u64 * 2).max(64);
            let want = 8 * n_coarse + charged * ENTRY_BYTES;
            if want - res.bytes() > em.available() {
                return Err(over(want - res.bytes()));
            }
            res.resize(want)?;
        }
        Ok(())
    })?;
    if let Some(c) = node_w.iter().position(|&w| w == 0) {
        return Err(Error::Integrity {
            node: c as u64,
            msg: "contraction map is not surjective".into(),
        });
    }
    let mut edges: Vec<((u64, u64), u64)> = acc.into_iter().collect();
    edges.sort_unstable();
    let mut out = GraphWriter::new(em, IoTag::Scan)?;
    let mut i = 0;
    for c in 0..n_coarse {
        let start = i;
        while i < edges.len() && edges[i].0 .0 == c {
            i += 1;
        }
        out.push_node(
            node_w[c as usize],
            edges[start..i].iter().map(|&((_, t), w)| EdgeRecord { target: t, weight: w }),
        )?;
    }
    out.finish()
}

/// Contracts with the in-memory accumulator when the map is in memory and
/// the coarse edges fit; otherwise by sorting.
pub fn contract(g: &DiskGraph, map: &ContractionMap) -> Result<DiskGraph> {
    if let ClusterAssignment::InMemory(m) = &map.map {
        match contract_semi_external(g, m, map.n_coarse) {
            Err(Error::OverBudget { .. }) => {
                log::info!("coarse edges exceed the budget; contracting by sorting");
            }
            other => return other,
        }
    }
    contract_external(g, map)
}
