use crate::em::{external_sort, ArrayReader, ExternalArray, IoTag};
use crate::error::{Error, Result};
use crate::graph::DiskGraph;

/// Ascending, duplicate-free cluster IDs to look up.
pub enum SortedIds<'a> {
    Mem(&'a [u64]),
    Ext(&'a ExternalArray<u64>),
}

enum Pending {
    None,
    Mem(Vec<(u64, u64)>),
    Ext(ExternalArray<(u64, u64)>),
}

enum Cursor<'a, T: crate::em::Record> {
    Mem(std::iter::Peekable<std::iter::Copied<std::slice::Iter<'a, T>>>),
    Ext(ArrayReader<T>),
    Empty,
}

impl<T: crate::em::Record> Cursor<'_, T> {
    fn peek(&mut self) -> Result<Option<T>> {
        Ok(match self {
            Cursor::Mem(it) => it.peek().copied(),
            Cursor::Ext(r) => r.peek()?.copied(),
            Cursor::Empty => None,
        })
    }

    fn next(&mut self) -> Result<Option<T>> {
        Ok(match self {
            Cursor::Mem(it) => it.next(),
            Cursor::Ext(r) => r.next()?,
            Cursor::Empty => None,
        })
    }
}

/// Cluster sizes on disk, indexed by cluster ID.
///
/// Lookups and write-backs share one pass: [`exchange`](Self::exchange)
/// rewrites the array with the staged updates of the previous step while
/// reporting the sizes requested by the current one. Each exchange costs
/// one scan of the array for reading and one for writing.
pub struct ClusterSizeArray {
    array: ExternalArray<u64>,
    pending: Pending,
}

impl ClusterSizeArray {
    /// Sizes from node weights; cluster IDs must lie in `[0, n)`.
    pub fn from_assignment(g: &DiskGraph, assign: &ExternalArray<(u64, u64)>) -> Result<Self> {
        let em = g.em();
        let n = g.n();
        let mut pairs = ExternalArray::<(u64, u64)>::writer(em, IoTag::Scan)?;
        let mut wr = g.node_weights().reader(IoTag::Scan)?;
        assign.scan(|(v, c)| {
            if c >= n {
                return Err(Error::Integrity {
                    node: v,
                    msg: format!("cluster id {c} outside [0, {n})"),
                });
            }
            let w = wr.next()?.ok_or(Error::Dimension { expected: n, got: v })?;
            pairs.push((c, w))
        })?;
        drop(wr);
        let sorted = external_sort(&pairs.finish()?, |a, b| a.0.cmp(&b.0))?;
        let mut rd = sorted.reader(IoTag::Scan)?;
        let mut out = ExternalArray::writer(em, IoTag::Scan)?;
        for c in 0..n {
            let mut s = 0u64;
            while let Some(&(x, w)) = rd.peek()? {
                if x != c {
                    break;
                }
                s += w;
                rd.next()?;
            }
            out.push(s)?;
        }
        Ok(Self {
            array: out.finish()?,
            pending: Pending::None,
        })
    }

    pub fn from_vec(em: &crate::em::Em, sizes: &[u64]) -> Result<Self> {
        Ok(Self {
            array: ExternalArray::from_slice(em, sizes)?,
            pending: Pending::None,
        })
    }

    pub fn len(&self) -> u64 {
        self.array.len()
    }

    pub fn is_empty(&self) -> bool {
        self.array.is_empty()
    }

    /// Stages ascending, duplicate-free `(cluster, new size)` updates for
    /// the next exchange. At most one update set may be staged.
    pub fn stage(&mut self, updates: Vec<(u64, u64)>) {
        debug_assert!(matches!(self.pending, Pending::None));
        self.pending = Pending::Mem(updates);
    }

    /// External form of [`stage`](Self::stage).
    pub fn stage_external(&mut self, updates: ExternalArray<(u64, u64)>) {
        debug_assert!(matches!(self.pending, Pending::None));
        self.pending = Pending::Ext(updates);
    }

    /// Applies staged updates and calls `found(c, size)` for every wanted
    /// ID, in ascending order, with the updated sizes.
    pub fn exchange(&mut self, wanted: SortedIds<'_>, mut found: impl FnMut(u64, u64) -> Result<()>) -> Result<()> {
        let em = self.array.em().clone();
        let pending = std::mem::replace(&mut self.pending, Pending::None);
        let mut upd: Cursor<'_, (u64, u64)> = match &pending {
            Pending::None => Cursor::Empty,
            Pending::Mem(v) => Cursor::Mem(v.iter().copied().peekable()),
            Pending::Ext(a) => Cursor::Ext(a.reader(IoTag::Scan)?),
        };
        let mut want: Cursor<'_, u64> = match wanted {
            SortedIds::Mem(v) => Cursor::Mem(v.iter().copied().peekable()),
            SortedIds::Ext(a) => Cursor::Ext(a.reader(IoTag::Scan)?),
        };
        let rewrite = !matches!(pending, Pending::None);
        let mut out = if rewrite {
            Some(ExternalArray::<u64>::writer(&em, IoTag::Scan)?)
        } else {
            None
        };
        let mut c = 0u64;
        self.array.scan(|mut s| {
            if let Some((x, new)) = upd.peek()? {
                if x == c {
                    s = new;
                    upd.next()?;
                }
            }
            if want.peek()? == Some(c) {
                found(c, s)?;
                want.next()?;
            }
            if let Some(o) = out.as_mut() {
                o.push(s)?;
            }
            c += 1;
            Ok(())
        })?;
        if let Some(x) = want.peek()? {
            return Err(Error::Integrity {
                node: x,
                msg: "requested cluster id is not ascending or out of range".into(),
            });
        }
        if let Some((x, _)) = upd.peek()? {
            return Err(Error::Integrity {
                node: x,
                msg: "staged size update is not ascending or out of range".into(),
            });
        }
        drop(upd);
        drop(want);
        if let Some(o) = out {
            self.array = o.finish()?;
        }
        Ok(())
    }

    /// Applies staged updates.
    pub fn flush(&mut self) -> Result<()> {
        if matches!(self.pending, Pending::None) {
            return Ok(());
        }
        self.exchange(SortedIds::Mem(&[]), |_, _| Ok(()))
    }

    /// Current sizes, including staged updates.
    pub fn to_vec(&mut self) -> Result<Vec<u64>> {
        self.flush()?;
        self.array.to_vec()
    }
}
