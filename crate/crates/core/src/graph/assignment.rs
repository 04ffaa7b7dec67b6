use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::em::{Em, ExternalArray, IoTag};
use crate::error::{Error, Result};

/// Per-node cluster (or block) IDs.
///
/// `InMemory` is the semi-external representation: a node-indexed vector.
/// `External` holds node-sorted `(node, cluster)` pairs on disk and is only
/// ever scanned or sorted.
#[derive(Debug, Clone)]
pub enum ClusterAssignment {
    InMemory(Vec<u64>),
    External(ExternalArray<(u64, u64)>),
}

impl ClusterAssignment {
    /// `cluster[v] = v`.
    pub fn identity(n: u64) -> Self {
        ClusterAssignment::InMemory((0..n).collect())
    }

    pub fn identity_external(em: &Em, n: u64) -> Result<Self> {
        Ok(ClusterAssignment::External(ExternalArray::from_iter(
            em,
            (0..n).map(|v| (v, v)),
        )?))
    }

    pub fn len(&self) -> u64 {
        match self {
            ClusterAssignment::InMemory(v) => v.len() as u64,
            ClusterAssignment::External(a) => a.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_external(&self) -> bool {
        matches!(self, ClusterAssignment::External(_))
    }

    /// Loads into a node-indexed vector (a scan in the external case).
    pub fn to_vec(&self) -> Result<Vec<u64>> {
        match self {
            ClusterAssignment::InMemory(v) => Ok(v.clone()),
            ClusterAssignment::External(a) => {
                let mut out = Vec::with_capacity(a.len() as usize);
                a.scan(|(node, c)| {
                    if node != out.len() as u64 {
                        return Err(Error::Integrity {
                            node,
                            msg: format!("assignment out of order at position {}", out.len()),
                        });
                    }
                    out.push(c);
                    Ok(())
                })?;
                Ok(out)
            }
        }
    }

    pub fn into_vec(self) -> Result<Vec<u64>> {
        match self {
            ClusterAssignment::InMemory(v) => Ok(v),
            other => other.to_vec(),
        }
    }

    /// Node-sorted pairs on disk.
    pub fn to_external(&self, em: &Em) -> Result<ExternalArray<(u64, u64)>> {
        match self {
            ClusterAssignment::InMemory(v) => {
                ExternalArray::from_iter(em, v.iter().enumerate().map(|(i, &c)| (i as u64, c)))
            }
            ClusterAssignment::External(a) => Ok(a.clone()),
        }
    }

    /// Streams `(node, cluster)` in node order.
    pub fn scan(&self, mut visit: impl FnMut(u64, u64) -> Result<()>) -> Result<()> {
        match self {
            ClusterAssignment::InMemory(v) => {
                for (i, &c) in v.iter().enumerate() {
                    visit(i as u64, c)?;
                }
                Ok(())
            }
            ClusterAssignment::External(a) => a.scan(|(node, c)| visit(node, c)),
        }
    }

    /// Number of distinct IDs.
    pub fn count_distinct(&self) -> Result<u64> {
        match self {
            ClusterAssignment::InMemory(v) => {
                let mut s = v.clone();
                s.sort_unstable();
                s.dedup();
                Ok(s.len() as u64)
            }
            ClusterAssignment::External(a) => {
                let sorted = crate::em::external_sort(a, |x, y| x.1.cmp(&y.1))?;
                let mut count = 0u64;
                let mut last = None;
                sorted.scan(|(_, c)| {
                    if last != Some(c) {
                        count += 1;
                        last = Some(c);
                    }
                    Ok(())
                })?;
                Ok(count)
            }
        }
    }
}

const MAGIC: &str = "extpart-assignment v1";

/// Writes a text header line followed by node-sorted 16-byte
/// `(node, block)` little-endian records.
pub fn write_assignment_file(path: impl AsRef<Path>, a: &ClusterAssignment, k: Option<u64>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let header = match k {
        Some(k) => format!("{MAGIC} n={} k={k}\n", a.len()),
        None => format!("{MAGIC} n={}\n", a.len()),
    };
    w.write_all(header.as_bytes()).map_err(|e| Error::io(path, e))?;
    let mut buf = [0u8; 16];
    a.scan(|node, c| {
        buf[..8].copy_from_slice(&node.to_le_bytes());
        buf[8..].copy_from_slice(&c.to_le_bytes());
        w.write_all(&buf).map_err(|e| Error::io(path, e))
    })?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads an assignment file into an external array, checking node order.
/// Returns the array and the `k` recorded in the header, if any.
pub fn read_assignment_file(em: &Em, path: impl AsRef<Path>) -> Result<(ClusterAssignment, Option<u64>)> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rd = BufReader::new(f);
    let mut header = String::new();
    rd.read_line(&mut header).map_err(|e| Error::io(path, e))?;
    let header = header.trim_end();
    let rest = header.strip_prefix(MAGIC).ok_or_else(|| Error::Format {
        line: 1,
        msg: format!("{} is not an assignment file", path.display()),
    })?;
    let mut n = None;
    let mut k = None;
    for tok in rest.split_whitespace() {
        let (key, val) = tok.split_once('=').ok_or_else(|| Error::Format {
            line: 1,
            msg: format!("bad header field '{tok}'"),
        })?;
        let val: u64 = val.parse().map_err(|_| Error::Format {
            line: 1,
            msg: format!("bad header value '{tok}'"),
        })?;
        match key {
            "n" => n = Some(val),
            "k" => k = Some(val),
            _ => {}
        }
    }
    let n = n.ok_or_else(|| Error::Format {
        line: 1,
        msg: "header lacks n".into(),
    })?;
    let mut out = ExternalArray::writer(em, IoTag::Scan)?;
    let mut buf = [0u8; 16];
    for i in 0..n {
        rd.read_exact(&mut buf).map_err(|_| Error::Dimension {
            expected: n,
            got: i,
        })?;
        let node = u64::from_le_bytes(buf[..8].try_into().unwrap());
        let c = u64::from_le_bytes(buf[8..].try_into().unwrap());
        if node != i {
            return Err(Error::Integrity {
                node,
                msg: format!("record {i} out of node order"),
            });
        }
        out.push((node, c))?;
    }
    let mut extra = [0u8; 1];
    if rd.read(&mut extra).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::Format {
            line: 1,
            msg: format!("more than the {n} records declared in the header"),
        });
    }
    Ok((ClusterAssignment::External(out.finish()?), k))
}
