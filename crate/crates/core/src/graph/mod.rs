//! On-disk graph representation.
//!
//! A [`DiskGraph`] is three external arrays: the edge array holding every
//! adjacency list in increasing node order, each terminated by a sentinel
//! record; the offset array (index of each node's first edge record); and the
//! node-weight array. Undirected edges are stored in both endpoints' lists.

mod assignment;
mod build;
mod csr;
pub mod gen;
mod metrics;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use assignment::{read_assignment_file, write_assignment_file, ClusterAssignment};
pub use build::{
    build_from_edge_iter, build_from_edge_list, build_from_edges, build_from_metis,
    build_from_path, GraphWriter, InputFormat,
};
pub(crate) use build::assemble;
pub use csr::CsrGraph;
pub use metrics::{compute_balance, compute_block_weights, compute_cut, l_max, Balance, Partition};

use crate::em::{get_u64, put_u64, Em, ExternalArray, IoTag, Record};
use crate::error::{Error, Result};

/// Reserved target ID marking the end of an adjacency list.
pub const SENTINEL: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EdgeRecord {
    pub target: u64,
    pub weight: u64,
}

impl EdgeRecord {
    pub const SENTINEL: EdgeRecord = EdgeRecord {
        target: SENTINEL,
        weight: 0,
    };

    pub fn is_sentinel(&self) -> bool {
        self.target == SENTINEL
    }
}

impl Record for EdgeRecord {
    const SIZE: usize = 16;

    fn write_le(&self, out: &mut [u8]) {
        put_u64(out, 0, self.target);
        put_u64(out, 8, self.weight);
    }

    fn read_le(buf: &[u8]) -> Self {
        EdgeRecord {
            target: get_u64(buf, 0),
            weight: get_u64(buf, 8),
        }
    }
}

pub const HEADER_FILE: &str = "graph.json";
pub const EDGES_FILE: &str = "edges.bin";
pub const OFFSETS_FILE: &str = "offsets.bin";
pub const NODE_WEIGHTS_FILE: &str = "node_weights.bin";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphHeader {
    pub format: String,
    pub version: u32,
    pub n: u64,
    pub m: u64,
    pub total_node_weight: u64,
    pub edge_record_size: u64,
    pub offset_record_size: u64,
    pub node_weight_record_size: u64,
    pub endianness: String,
}

#[derive(Clone, Debug)]
pub struct DiskGraph {
    n: u64,
    m: u64,
    total_node_weight: u64,
    edges: ExternalArray<EdgeRecord>,
    offsets: ExternalArray<u64>,
    node_weights: ExternalArray<u64>,
}

impl DiskGraph {
    pub(crate) fn from_parts(
        n: u64,
        m: u64,
        total_node_weight: u64,
        edges: ExternalArray<EdgeRecord>,
        offsets: ExternalArray<u64>,
        node_weights: ExternalArray<u64>,
    ) -> Self {
        debug_assert_eq!(edges.len(), 2 * m + n);
        debug_assert_eq!(offsets.len(), n);
        debug_assert_eq!(node_weights.len(), n);
        Self {
            n,
            m,
            total_node_weight,
            edges,
            offsets,
            node_weights,
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Undirected edge count.
    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn total_node_weight(&self) -> u64 {
        self.total_node_weight
    }

    pub fn edges(&self) -> &ExternalArray<EdgeRecord> {
        &self.edges
    }

    pub fn offsets(&self) -> &ExternalArray<u64> {
        &self.offsets
    }

    pub fn node_weights(&self) -> &ExternalArray<u64> {
        &self.node_weights
    }

    pub fn em(&self) -> &Em {
        self.edges.em()
    }

    /// Bytes of all three arrays; used as the resident-size estimate.
    pub fn size_bytes(&self) -> u64 {
        self.edges.size_bytes() + self.offsets.size_bytes() + self.node_weights.size_bytes()
    }

    pub fn header(&self) -> GraphHeader {
        GraphHeader {
            format: "extpart-graph".into(),
            version: 1,
            n: self.n,
            m: self.m,
            total_node_weight: self.total_node_weight,
            edge_record_size: EdgeRecord::SIZE as u64,
            offset_record_size: 8,
            node_weight_record_size: 8,
            endianness: "little".into(),
        }
    }

    /// Calls `visit(node, list)` for every node in increasing ID order with its
    /// full adjacency list (sentinel stripped). Costs one scan of the edge array.
    pub fn for_each_adjacency(
        &self,
        mut visit: impl FnMut(u64, &[EdgeRecord]) -> Result<()>,
    ) -> Result<()> {
        self.walk(None, |u, _, list| visit(u, list))
    }

    /// Like [`for_each_adjacency`](Self::for_each_adjacency) but also passes
    /// the node weight, co-scanning the node-weight array.
    pub fn for_each_node(
        &self,
        visit: impl FnMut(u64, u64, &[EdgeRecord]) -> Result<()>,
    ) -> Result<()> {
        let weights = self.node_weights.reader(IoTag::Scan)?;
        self.walk(Some(weights), visit)
    }

    fn walk(
        &self,
        mut weights: Option<crate::em::ArrayReader<u64>>,
        mut visit: impl FnMut(u64, u64, &[EdgeRecord]) -> Result<()>,
    ) -> Result<()> {
        let n = self.n;
        let mut node = 0u64;
        let mut list: Vec<EdgeRecord> = Vec::new();
        self.edges.scan(|e| {
            if node >= n {
                return Err(Error::Integrity {
                    node,
                    msg: "edge records after the last adjacency list".into(),
                });
            }
            if e.is_sentinel() {
                let w = match weights.as_mut() {
                    Some(r) => r.next()?.ok_or(Error::Integrity {
                        node,
                        msg: "node-weight array too short".into(),
                    })?,
                    None => 1,
                };
                visit(node, w, &list)?;
                list.clear();
                node += 1;
            } else {
                if e.target >= n {
                    return Err(Error::Integrity {
                        node,
                        msg: format!("target {} out of range", e.target),
                    });
                }
                list.push(e);
            }
            Ok(())
        })?;
        if node != n {
            return Err(Error::Integrity {
                node,
                msg: "edge array ends before this node's sentinel".into(),
            });
        }
        Ok(())
    }

    /// Writes the three arrays and the header into `dir`. Scratch-backed
    /// arrays are moved, so the graph is consumed.
    pub fn save(self, dir: impl AsRef<Path>) -> Result<DiskGraph> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let edges = self.edges.persist(dir.join(EDGES_FILE))?;
        let offsets = self.offsets.persist(dir.join(OFFSETS_FILE))?;
        let node_weights = self.node_weights.persist(dir.join(NODE_WEIGHTS_FILE))?;
        let hp = dir.join(HEADER_FILE);
        let text = serde_json::to_string_pretty(&self.header()).unwrap();
        std::fs::write(&hp, text + "\n").map_err(|e| Error::io(&hp, e))?;
        Ok(DiskGraph {
            edges,
            offsets,
            node_weights,
            ..self
        })
    }

    pub fn open(em: &Em, dir: impl AsRef<Path>) -> Result<DiskGraph> {
        let dir = dir.as_ref();
        let hp = dir.join(HEADER_FILE);
        let text = std::fs::read_to_string(&hp).map_err(|e| Error::io(&hp, e))?;
        let h: GraphHeader = serde_json::from_str(&text)
            .map_err(|e| Error::Storage(format!("bad graph header {}: {e}", hp.display())))?;
        if h.endianness != "little" || h.edge_record_size != EdgeRecord::SIZE as u64 {
            return Err(Error::Storage(format!(
                "unsupported graph layout in {}",
                hp.display()
            )));
        }
        let edges = ExternalArray::open(em, dir.join(EDGES_FILE))?;
        let offsets = ExternalArray::open(em, dir.join(OFFSETS_FILE))?;
        let node_weights = ExternalArray::open(em, dir.join(NODE_WEIGHTS_FILE))?;
        if edges.len() != 2 * h.m + h.n || offsets.len() != h.n || node_weights.len() != h.n {
            return Err(Error::Storage(format!(
                "array lengths in {} disagree with header",
                dir.display()
            )));
        }
        Ok(DiskGraph {
            n: h.n,
            m: h.m,
            total_node_weight: h.total_node_weight,
            edges,
            offsets,
            node_weights,
        })
    }

    /// Full structural check: sentinels, offsets, ranges, loops, positive
    /// weights, degree sum and symmetry (the latter via a sorted reverse copy).
    pub fn validate(&self) -> Result<()> {
        let mut offsets = self.offsets.reader(IoTag::Scan)?;
        let mut pos = 0u64;
        let mut degree_sum = 0u64;
        self.for_each_adjacency(|u, list| {
            let off = offsets.next()?.ok_or(Error::Integrity {
                node: u,
                msg: "missing offset".into(),
            })?;
            if off != pos {
                return Err(Error::Integrity {
                    node: u,
                    msg: format!("offset {off} but list starts at {pos}"),
                });
            }
            pos += list.len() as u64 + 1;
            degree_sum += list.len() as u64;
            for e in list {
                if e.target == u {
                    return Err(Error::Integrity {
                        node: u,
                        msg: "self-loop".into(),
                    });
                }
                if e.weight == 0 {
                    return Err(Error::Integrity {
                        node: u,
                        msg: format!("zero weight on edge to {}", e.target),
                    });
                }
            }
            Ok(())
        })?;
        if degree_sum != 2 * self.m {
            return Err(Error::Integrity {
                node: self.n,
                msg: format!("degree sum {degree_sum} != 2m = {}", 2 * self.m),
            });
        }
        build::check_symmetric(self, 0)?;
        let mut total = 0u64;
        self.node_weights.scan(|w| {
            total += w;
            Ok(())
        })?;
        if total != self.total_node_weight {
            return Err(Error::Integrity {
                node: self.n,
                msg: "total node weight disagrees with header".into(),
            });
        }
        Ok(())
    }
}

/// Edge array with a per-node value of the target attached to every
/// record: `(target, weight, value[target])`, sentinels kept as
/// `(SENTINEL, 0, 0)`. `values` holds node-sorted `(node, value)` pairs.
/// Costs two sorts (join on target, then restore storage order).
pub fn annotate_targets(
    g: &DiskGraph,
    values: &ExternalArray<(u64, u64)>,
) -> Result<ExternalArray<(u64, u64, u64)>> {
    if values.len() != g.n() {
        return Err(Error::Dimension {
            expected: g.n(),
            got: values.len(),
        });
    }
    let em = g.em();
    let mut by_target = ExternalArray::<(u64, u64)>::writer(em, IoTag::Scan)?;
    let mut idx = 0u64;
    g.edges().scan(|e| {
        if !e.is_sentinel() {
            by_target.push((e.target, idx))?;
        }
        idx += 1;
        Ok(())
    })?;
    let by_target = crate::em::external_sort(&by_target.finish()?, |a, b| a.0.cmp(&b.0))?;
    let mut joined = ExternalArray::<(u64, u64)>::writer(em, IoTag::Scan)?;
    let mut rd = by_target.reader(IoTag::Scan)?;
    values.scan(|(v, x)| {
        while let Some(&(t, i)) = rd.peek()? {
            if t != v {
                break;
            }
            joined.push((i, x))?;
            rd.next()?;
        }
        Ok(())
    })?;
    if rd.remaining() > 0 {
        return Err(Error::Integrity {
            node: rd.peek()?.map_or(0, |p| p.0),
            msg: "value array does not cover every edge target".into(),
        });
    }
    drop(rd);
    drop(by_target);
    let joined = crate::em::external_sort(&joined.finish()?, |a, b| a.0.cmp(&b.0))?;
    let mut jr = joined.reader(IoTag::Scan)?;
    let mut out = ExternalArray::writer(em, IoTag::Scan)?;
    g.edges().scan(|e| {
        if e.is_sentinel() {
            out.push((SENTINEL, 0, 0))
        } else {
            let (_, x) = jr.next()?.ok_or(Error::Integrity {
                node: e.target,
                msg: "missing value for edge target".into(),
            })?;
            out.push((e.target, e.weight, x))
        }
    })?;
    out.finish()
}
