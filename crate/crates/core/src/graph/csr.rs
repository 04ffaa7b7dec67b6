use super::{build::GraphWriter, DiskGraph, EdgeRecord};
use crate::em::{Em, IoTag};
use crate::error::Result;

/// Fully resident compressed-sparse-row graph. Used for the coarsest level
/// and as a reference structure in tests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsrGraph {
    pub xadj: Vec<usize>,
    pub adj: Vec<u64>,
    pub adj_w: Vec<u64>,
    pub node_w: Vec<u64>,
}

impl CsrGraph {
    /// Undirected edges `(u, v, w)`; parallel edges are summed, lists sorted.
    pub fn from_edges(n: usize, edges: &[(u64, u64, u64)]) -> Self {
        let mut directed: Vec<(u64, u64, u64)> = Vec::with_capacity(edges.len() * 2);
        for &(u, v, w) in edges {
            directed.push((u, v, w));
            directed.push((v, u, w));
        }
        directed.sort_by_key(|&(u, v, _)| (u, v));
        let mut xadj = vec![0usize; n + 1];
        let mut adj = Vec::new();
        let mut adj_w: Vec<u64> = Vec::new();
        let mut i = 0;
        for u in 0..n {
            while i < directed.len() && directed[i].0 == u as u64 {
                let (_, v, w) = directed[i];
                if adj.len() > xadj[u] && *adj.last().unwrap() == v {
                    *adj_w.last_mut().unwrap() += w;
                } else {
                    adj.push(v);
                    adj_w.push(w);
                }
                i += 1;
            }
            xadj[u + 1] = adj.len();
        }
        Self {
            xadj,
            adj,
            adj_w,
            node_w: vec![1; n],
        }
    }

    pub fn load(g: &DiskGraph) -> Result<Self> {
        let n = g.n() as usize;
        let mut xadj = Vec::with_capacity(n + 1);
        xadj.push(0);
        let mut adj = Vec::with_capacity(2 * g.m() as usize);
        let mut adj_w = Vec::with_capacity(2 * g.m() as usize);
        let mut node_w = Vec::with_capacity(n);
        g.for_each_node(|_, w, list| {
            for e in list {
                adj.push(e.target);
                adj_w.push(e.weight);
            }
            xadj.push(adj.len());
            node_w.push(w);
            Ok(())
        })?;
        Ok(Self {
            xadj,
            adj,
            adj_w,
            node_w,
        })
    }

    pub fn to_disk(&self, em: &Em) -> Result<DiskGraph> {
        let mut w = GraphWriter::new(em, IoTag::Scan)?;
        for u in 0..self.n() {
            let r = self.xadj[u]..self.xadj[u + 1];
            w.push_node(
                self.node_w[u],
                self.adj[r.clone()]
                    .iter()
                    .zip(&self.adj_w[r])
                    .map(|(&target, &weight)| EdgeRecord { target, weight }),
            )?;
        }
        w.finish()
    }

    pub fn n(&self) -> usize {
        self.node_w.len()
    }

    pub fn m(&self) -> usize {
        self.adj.len() / 2
    }

    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = (usize, u64)> + '_ {
        let r = self.xadj[u]..self.xadj[u + 1];
        self.adj[r.clone()]
            .iter()
            .zip(&self.adj_w[r])
            .map(|(&v, &w)| (v as usize, w))
    }

    pub fn degree(&self, u: usize) -> usize {
        self.xadj[u + 1] - self.xadj[u]
    }

    pub fn total_node_weight(&self) -> u64 {
        self.node_w.iter().sum()
    }

    pub fn cut(&self, blocks: &[u64]) -> u64 {
        let mut cut = 0;
        for u in 0..self.n() {
            for (v, w) in self.neighbors(u) {
                if v > u && blocks[u] != blocks[v] {
                    cut += w;
                }
            }
        }
        cut
    }
}
