//! Builders: text parsers and the sort-based assembler shared with contraction.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DiskGraph, EdgeRecord};
use crate::em::{external_sort, ArrayWriter, Em, ExternalArray, IoTag};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    Metis,
    EdgeList,
}

impl FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "metis" => Ok(InputFormat::Metis),
            "edge-list" | "edgelist" | "edges" => Ok(InputFormat::EdgeList),
            other => Err(Error::Parameter(format!("unknown input format '{other}'"))),
        }
    }
}

/// Appends adjacency lists in node order and produces a [`DiskGraph`].
pub struct GraphWriter {
    nodes: u64,
    half_edges: u64,
    total_weight: u64,
    pos: u64,
    edges: ArrayWriter<EdgeRecord>,
    offsets: ArrayWriter<u64>,
    weights: ArrayWriter<u64>,
}

impl GraphWriter {
    pub fn new(em: &Em, tag: IoTag) -> Result<Self> {
        Ok(Self {
            nodes: 0,
            half_edges: 0,
            total_weight: 0,
            pos: 0,
            edges: ExternalArray::writer(em, tag)?,
            offsets: ExternalArray::writer(em, tag)?,
            weights: ExternalArray::writer(em, tag)?,
        })
    }

    /// Appends the next node's weight and adjacency list.
    pub fn push_node(&mut self, weight: u64, list: impl IntoIterator<Item = EdgeRecord>) -> Result<()> {
        self.offsets.push(self.pos)?;
        self.weights.push(weight)?;
        self.total_weight += weight;
        for e in list {
            self.edges.push(e)?;
            self.pos += 1;
            self.half_edges += 1;
        }
        self.edges.push(EdgeRecord::SENTINEL)?;
        self.pos += 1;
        self.nodes += 1;
        Ok(())
    }

    pub fn nodes(&self) -> u64 {
        self.nodes
    }

    pub fn finish(self) -> Result<DiskGraph> {
        if self.half_edges % 2 != 0 {
            return Err(Error::Integrity {
                node: self.nodes,
                msg: format!("odd number of adjacency entries ({})", self.half_edges),
            });
        }
        Ok(DiskGraph::from_parts(
            self.nodes,
            self.half_edges / 2,
            self.total_weight,
            self.edges.finish()?,
            self.offsets.finish()?,
            self.weights.finish()?,
        ))
    }
}

/// Builds a graph from directed triples `(u, v, w)` in any order. Triples
/// with equal `(u, v)` are merged by summing weights. `node_weights` must
/// hold exactly `n` entries. Costs one sort of the triples plus scans.
pub(crate) fn assemble(
    em: &Em,
    n: u64,
    triples: &ExternalArray<(u64, u64, u64)>,
    node_weights: &ExternalArray<u64>,
) -> Result<DiskGraph> {
    if node_weights.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: node_weights.len(),
        });
    }
    let sorted = external_sort(triples, |a, b| (a.0, a.1).cmp(&(b.0, b.1)))?;
    let mut rd = sorted.reader(IoTag::Scan)?;
    let mut wr = node_weights.reader(IoTag::Scan)?;
    let mut out = GraphWriter::new(em, IoTag::Scan)?;
    let mut list: Vec<EdgeRecord> = Vec::new();
    let mut pending = rd.next()?;
    for u in 0..n {
        list.clear();
        while let Some((s, t, w)) = pending {
            if s != u {
                break;
            }
            match list.last_mut() {
                Some(last) if last.target == t => last.weight += w,
                _ => list.push(EdgeRecord { target: t, weight: w }),
            }
            pending = rd.next()?;
        }
        let weight = wr.next()?.unwrap();
        out.push_node(weight, list.iter().copied())?;
    }
    if let Some((s, _, _)) = pending {
        return Err(Error::Integrity {
            node: s,
            msg: format!("edge source outside [0, {n})"),
        });
    }
    out.finish()
}

/// Builds from an in-memory undirected edge list; each pair is stored in both lists.
pub fn build_from_edges(em: &Em, n: u64, edges: &[(u64, u64, u64)]) -> Result<DiskGraph> {
    build_from_edge_iter(em, n, edges.iter().copied())
}

/// Streaming variant of [`build_from_edges`]; edges are spilled to disk as they arrive.
pub fn build_from_edge_iter(
    em: &Em,
    n: u64,
    edges: impl IntoIterator<Item = (u64, u64, u64)>,
) -> Result<DiskGraph> {
    let mut w = ExternalArray::writer(em, IoTag::Scan)?;
    for (line, (u, v, wt)) in edges.into_iter().enumerate() {
        let line = line as u64 + 1;
        check_edge(u, v, wt, n, line)?;
        w.push((u, v, wt))?;
        w.push((v, u, wt))?;
    }
    let triples = w.finish()?;
    let weights = ExternalArray::from_iter(em, (0..n).map(|_| 1u64))?;
    assemble(em, n, &triples, &weights)
}

fn check_edge(u: u64, v: u64, w: u64, n: u64, line: u64) -> Result<()> {
    if u == v {
        return Err(Error::SelfLoop { node: u, line });
    }
    if u >= n || v >= n {
        return Err(Error::Format {
            line,
            msg: format!("node id {} not below n={n}", u.max(v)),
        });
    }
    if w == 0 {
        return Err(Error::Format {
            line,
            msg: "edge weight must be positive".into(),
        });
    }
    Ok(())
}

fn parse_num(tok: &str, line: u64, what: &str) -> Result<u64> {
    let v: i128 = tok.parse().map_err(|_| Error::Format {
        line,
        msg: format!("cannot parse {what} '{tok}'"),
    })?;
    if v < 0 || v > u64::MAX as i128 {
        return Err(Error::Format {
            line,
            msg: format!("{what} {v} out of range"),
        });
    }
    Ok(v as u64)
}

fn parse_weight(tok: &str, line: u64, what: &str) -> Result<u64> {
    let w = parse_num(tok, line, what)?;
    if w == 0 {
        return Err(Error::Format {
            line,
            msg: format!("{what} must be positive"),
        });
    }
    Ok(w)
}

/// Parses whitespace-separated `u v [w]` lines (0-indexed). Lines starting
/// with `#` or `%` are comments. `n` defaults to the largest ID plus one.
pub fn build_from_edge_list(em: &Em, input: impl BufRead, declared_n: Option<u64>) -> Result<DiskGraph> {
    let mut w = ExternalArray::writer(em, IoTag::Scan)?;
    let mut max_id: Option<u64> = None;
    for (i, text) in input.lines().enumerate() {
        let line = i as u64 + 1;
        let text = text.map_err(|e| Error::Format {
            line,
            msg: e.to_string(),
        })?;
        let t = text.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with('%') {
            continue;
        }
        let toks: Vec<&str> = t.split_whitespace().collect();
        if toks.len() < 2 || toks.len() > 3 {
            return Err(Error::Format {
                line,
                msg: format!("expected 'u v [w]', found {} fields", toks.len()),
            });
        }
        let u = parse_num(toks[0], line, "node id")?;
        let v = parse_num(toks[1], line, "node id")?;
        let wt = match toks.get(2) {
            Some(s) => parse_weight(s, line, "edge weight")?,
            None => 1,
        };
        let bound = declared_n.unwrap_or(u64::MAX);
        check_edge(u, v, wt, bound, line)?;
        max_id = Some(max_id.unwrap_or(0).max(u).max(v));
        w.push((u, v, wt))?;
        w.push((v, u, wt))?;
    }
    let n = declared_n.unwrap_or(max_id.map_or(0, |m| m + 1));
    let triples = w.finish()?;
    let weights = ExternalArray::from_iter(em, (0..n).map(|_| 1u64))?;
    assemble(em, n, &triples, &weights)
}

/// Parses METIS graph text: header `n m [fmt [ncon]]`, then one line per
/// node listing 1-indexed neighbours. Diagnostics name nodes 1-indexed.
pub fn build_from_metis(em: &Em, input: impl BufRead) -> Result<DiskGraph> {
    let mut lines = input.lines().enumerate().filter_map(|(i, l)| match l {
        Ok(s) if s.trim_start().starts_with('%') => None,
        Ok(s) => Some(Ok((i as u64 + 1, s))),
        Err(e) => Some(Err(Error::Format {
            line: i as u64 + 1,
            msg: e.to_string(),
        })),
    });
    let (hline, header) = loop {
        match lines.next() {
            Some(r) => {
                let (l, s) = r?;
                if !s.trim().is_empty() {
                    break (l, s);
                }
            }
            None => {
                return Err(Error::Format {
                    line: 0,
                    msg: "missing METIS header".into(),
                })
            }
        }
    };
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() < 2 || h.len() > 4 {
        return Err(Error::Format {
            line: hline,
            msg: "header must be 'n m [fmt [ncon]]'".into(),
        });
    }
    let n = parse_num(h[0], hline, "node count")?;
    let m = parse_num(h[1], hline, "edge count")?;
    let fmt = h.get(2).copied().unwrap_or("0");
    if fmt.len() > 3 || !fmt.chars().all(|c| c == '0' || c == '1') {
        return Err(Error::Format {
            line: hline,
            msg: format!("unsupported fmt field '{fmt}'"),
        });
    }
    let fmt = format!("{fmt:0>3}");
    if &fmt[0..1] == "1" {
        return Err(Error::Format {
            line: hline,
            msg: "node sizes (fmt 1xx) are not supported".into(),
        });
    }
    let has_vw = &fmt[1..2] == "1";
    let has_ew = &fmt[2..3] == "1";
    let ncon = match h.get(3) {
        Some(s) => parse_num(s, hline, "ncon")?,
        None => 1,
    };
    if ncon != 1 && has_vw {
        return Err(Error::Format {
            line: hline,
            msg: "multi-constraint node weights are not supported".into(),
        });
    }

    let mut triples = ExternalArray::writer(em, IoTag::Scan)?;
    let mut weights = ExternalArray::writer(em, IoTag::Scan)?;
    let mut entries = 0u64;
    for u in 0..n {
        let (line, text) = match lines.next() {
            Some(r) => r?,
            None => {
                return Err(Error::Format {
                    line: 0,
                    msg: format!("expected {n} node lines, found {u}"),
                })
            }
        };
        let mut toks = text.split_whitespace();
        let vw = if has_vw {
            match toks.next() {
                Some(t) => parse_weight(t, line, "node weight")?,
                None => {
                    return Err(Error::Format {
                        line,
                        msg: format!("node {} is missing its weight", u + 1),
                    })
                }
            }
        } else {
            1
        };
        weights.push(vw)?;
        while let Some(t) = toks.next() {
            let v1 = parse_num(t, line, "neighbour id")?;
            if v1 == 0 || v1 > n {
                return Err(Error::Format {
                    line,
                    msg: format!("neighbour {v1} of node {} outside [1, {n}]", u + 1),
                });
            }
            let v = v1 - 1;
            if v == u {
                return Err(Error::SelfLoop { node: u + 1, line });
            }
            let wt = if has_ew {
                match toks.next() {
                    Some(t) => parse_weight(t, line, "edge weight")?,
                    None => {
                        return Err(Error::Format {
                            line,
                            msg: format!("missing weight after neighbour {v1}"),
                        })
                    }
                }
            } else {
                1
            };
            triples.push((u, v, wt))?;
            entries += 1;
        }
    }
    for r in lines {
        let (line, text) = r?;
        if !text.trim().is_empty() {
            return Err(Error::Format {
                line,
                msg: format!("trailing content after {n} node lines"),
            });
        }
    }
    if entries != 2 * m {
        return Err(Error::Format {
            line: hline,
            msg: format!("header declares m={m} but {entries} adjacency entries were listed"),
        });
    }
    let g = assemble(em, n, &triples.finish()?, &weights.finish()?)?;
    check_symmetric(&g, 1)?;
    Ok(g)
}

/// Rejects graphs where some `(u, v, w)` lacks its `(v, u, w)` twin.
/// Node IDs in the diagnostic are offset by `base`.
pub(crate) fn check_symmetric(g: &DiskGraph, base: u64) -> Result<()> {
    let em = g.em();
    let mut fwd = ExternalArray::<(u64, u64, u64)>::writer(em, IoTag::Scan)?;
    let mut rev = ExternalArray::<(u64, u64, u64)>::writer(em, IoTag::Scan)?;
    g.for_each_adjacency(|u, list| {
        for e in list {
            fwd.push((u, e.target, e.weight))?;
            rev.push((e.target, u, e.weight))?;
        }
        Ok(())
    })?;
    let fwd = fwd.finish()?;
    let rev = external_sort(&rev.finish()?, |a, b| (a.0, a.1).cmp(&(b.0, b.1)))?;
    let mut fr = fwd.reader(IoTag::Scan)?;
    let mut rr = rev.reader(IoTag::Scan)?;
    while let Some(f) = fr.next()? {
        let r = rr.next()?.unwrap();
        if f != r {
            let a = if (f.0, f.1) <= (r.0, r.1) { f } else { r };
            return Err(Error::Integrity {
                node: a.0 + base,
                msg: format!(
                    "edge {}-{} (weight {}) has no matching reverse entry",
                    a.0 + base,
                    a.1 + base,
                    a.2
                ),
            });
        }
    }
    Ok(())
}

/// Opens `path` and builds with the given format.
pub fn build_from_path(em: &Em, path: impl AsRef<Path>, format: InputFormat) -> Result<DiskGraph> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let rd = BufReader::new(f);
    match format {
        InputFormat::Metis => build_from_metis(em, rd),
        InputFormat::EdgeList => build_from_edge_list(em, rd, None),
    }
}
