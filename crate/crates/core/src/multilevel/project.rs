use super::ContractionMap;
use crate::em::{external_sort, ExternalArray, IoTag};
use crate::error::{Error, Result};
use crate::graph::ClusterAssignment;

/// Fine partition `block[v] = p_coarse[map[v]]`.
///
/// With in-memory operands this is direct composition. Otherwise the pairs
/// `(map[v], v)` are sorted by coarse ID, joined with the coarse partition
/// in one co-scan and sorted back by node.
pub fn project(p_coarse: &ClusterAssignment, map: &ContractionMap) -> Result<ClusterAssignment> {
    if p_coarse.len() != map.n_coarse {
        return Err(Error::Dimension {
            expected: map.n_coarse,
            got: p_coarse.len(),
        });
    }
    match (&map.map, p_coarse) {
        (ClusterAssignment::InMemory(m), ClusterAssignment::InMemory(p)) => {
            let mut out = Vec::with_capacity(m.len());
            for (v, &c) in m.iter().enumerate() {
                out.push(*p.get(c as usize).ok_or_else(|| dangling(v as u64, c))?);
            }
            Ok(ClusterAssignment::InMemory(out))
        }
        (ClusterAssignment::External(m), _) => {
            let em = m.em();
            let owned;
            let coarse = match p_coarse {
                ClusterAssignment::External(a) => a,
                ClusterAssignment::InMemory(_) => {
                    owned = p_coarse.to_external(em)?;
                    &owned
                }
            };
            let mut by_coarse = ExternalArray::<(u64, u64)>::writer(em, IoTag::Scan)?;
            m.scan(|(v, c)| by_coarse.push((c, v)))?;
            let by_coarse = external_sort(&by_coarse.finish()?, |a, b| a.cmp(b))?;
            let mut joined = ExternalArray::<(u64, u64)>::writer(em, IoTag::Scan)?;
            {
                let mut cr = coarse.reader(IoTag::Scan)?;
                let mut cur: Option<(u64, u64)> = None;
                by_coarse.scan(|(c, v)| {
                    while cur.is_none_or(|(x, _)| x < c) {
                        cur = cr.next()?;
                        if cur.is_none() {
                            return Err(dangling(v, c));
                        }
                    }
                    match cur {
                        Some((x, b)) if x == c => joined.push((v, b)),
                        _ => Err(dangling(v, c)),
                    }
                })?;
            }
            drop(by_coarse);
            let out = external_sort(&joined.finish()?, |a, b| a.0.cmp(&b.0))?;
            Ok(ClusterAssignment::External(out))
        }
        (ClusterAssignment::InMemory(_), ClusterAssignment::External(a)) => {
            let p = ClusterAssignment::InMemory(ClusterAssignment::External(a.clone()).into_vec()?);
            project(&p, map)
        }
    }
}

fn dangling(v: u64, c: u64) -> Error {
    Error::Integrity {
        node: v,
        msg: format!("coarse id {c} has no block"),
    }
}
