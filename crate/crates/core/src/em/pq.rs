//! External priority queue: an in-memory insertion heap that spills sorted
//! runs to disk, with bounded run count maintained by merging the smallest
//! runs.
//!
//! Records with equal keys leave the queue in insertion order.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use super::{get_u64, put_u64, ArrayReader, Em, ExternalArray, IoTag, Record, Reservation};
use crate::error::{Error, Result};

#[derive(Clone, Copy)]
struct Entry<P> {
    key: u64,
    seq: u64,
    payload: P,
}

impl<P> PartialEq for Entry<P> {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key && self.seq == other.seq
    }
}

impl<P> Eq for Entry<P> {}

impl<P> PartialOrd for Entry<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Entry<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.key, self.seq).cmp(&(other.key, other.seq))
    }
}

impl<P: Record> Record for Entry<P> {
    const SIZE: usize = 16 + P::SIZE;

    fn write_le(&self, out: &mut [u8]) {
        put_u64(out, 0, self.key);
        put_u64(out, 8, self.seq);
        self.payload.write_le(&mut out[16..]);
    }

    fn read_le(buf: &[u8]) -> Self {
        Entry {
            key: get_u64(buf, 0),
            seq: get_u64(buf, 8),
            payload: P::read_le(&buf[16..]),
        }
    }
}

struct Run<P: Record> {
    array: ExternalArray<Entry<P>>,
    /// Number of merges the run's oldest entries have been through.
    level: u32,
    consumed: u64,
    reader: Option<ArrayReader<Entry<P>>>,
    head: Option<Entry<P>>,
}

impl<P: Record> Run<P> {
    fn remaining(&self) -> u64 {
        self.array.len() - self.consumed
    }

    fn close(&mut self) {
        self.reader = None;
        self.head = None;
    }
}

pub struct ExternalPriorityQueue<P: Record> {
    em: Em,
    heap: BinaryHeap<Reverse<Entry<P>>>,
    heap_cap: usize,
    _heap_res: Reservation,
    runs: Vec<Run<P>>,
    /// (key, seq, run index) of every open run head; valid when `readable`.
    run_heads: BinaryHeap<Reverse<(u64, u64, usize)>>,
    readable: bool,
    max_runs: usize,
    seq: u64,
    len: u64,
}

impl<P: Record> ExternalPriorityQueue<P> {
    /// Queue that never holds more than `share_bytes` of budget.
    pub fn new(em: &Em, share_bytes: u64) -> Result<Self> {
        let b = em.block_size();
        let entry = Entry::<P>::SIZE as u64;
        let blocks = share_bytes / b;
        let heap_blocks = (blocks / 4).max(1);
        let max_runs = blocks.saturating_sub(heap_blocks + 1);
        if max_runs < 2 {
            return Err(Error::Config(format!(
                "priority queue share of {share_bytes} bytes is below the 4-block minimum"
            )));
        }
        let heap_bytes = heap_blocks * b;
        let res = em.reserve(heap_bytes)?;
        let heap_cap = (heap_bytes / entry).max(1) as usize;
        Ok(Self {
            em: em.clone(),
            heap: BinaryHeap::with_capacity(heap_cap),
            heap_cap,
            _heap_res: res,
            runs: Vec::new(),
            run_heads: BinaryHeap::new(),
            readable: true,
            max_runs: max_runs as usize,
            seq: 0,
            len: 0,
        })
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push(&mut self, key: u64, payload: P) -> Result<()> {
        self.heap.push(Reverse(Entry {
            key,
            seq: self.seq,
            payload,
        }));
        self.seq += 1;
        self.len += 1;
        if self.heap.len() >= self.heap_cap {
            self.spill()?;
        }
        Ok(())
    }

    pub fn top(&mut self) -> Result<(u64, P)> {
        let e = self.peek_entry()?.0;
        Ok((e.key, e.payload))
    }

    pub fn pop_min(&mut self) -> Result<(u64, P)> {
        let (e, from_run) = self.peek_entry()?;
        match from_run {
            None => {
                self.heap.pop();
            }
            Some(i) => {
                self.run_heads.pop();
                let run = &mut self.runs[i];
                run.consumed += 1;
                run.head = run.reader.as_mut().unwrap().next()?;
                match run.head {
                    Some(h) => self.run_heads.push(Reverse((h.key, h.seq, i))),
                    None => run.close(),
                }
            }
        }
        self.len -= 1;
        Ok((e.key, e.payload))
    }

    /// Key of the minimum, if any.
    pub fn min_key(&mut self) -> Result<Option<u64>> {
        if self.len == 0 {
            return Ok(None);
        }
        Ok(Some(self.peek_entry()?.0.key))
    }

    fn peek_entry(&mut self) -> Result<(Entry<P>, Option<usize>)> {
        if self.len == 0 {
            return Err(Error::EmptyQueue);
        }
        self.ensure_readable()?;
        let from_heap = self.heap.peek().map(|r| r.0);
        let from_run = self.run_heads.peek().map(|r| r.0);
        Ok(match (from_heap, from_run) {
            (Some(h), Some((k, s, i))) if (k, s) < (h.key, h.seq) => {
                (self.runs[i].head.unwrap(), Some(i))
            }
            (Some(h), _) => (h, None),
            (None, Some((_, _, i))) => (self.runs[i].head.unwrap(), Some(i)),
            (None, None) => unreachable!("non-empty queue without entries"),
        })
    }

    fn spill(&mut self) -> Result<()> {
        let mut w = ExternalArray::writer(&self.em, IoTag::Pq)?;
        let sorted = std::mem::take(&mut self.heap).into_sorted_vec();
        // into_sorted_vec on Reverse yields descending entries.
        for Reverse(e) in sorted.into_iter().rev() {
            w.push(e)?;
        }
        self.heap = BinaryHeap::with_capacity(self.heap_cap);
        self.runs.push(Run {
            array: w.finish()?,
            level: 0,
            consumed: 0,
            reader: None,
            head: None,
        });
        self.readable = false;
        Ok(())
    }

    fn ensure_readable(&mut self) -> Result<()> {
        if self.readable {
            return Ok(());
        }
        self.runs.retain(|r| r.remaining() > 0);
        if self.runs.len() > self.max_runs {
            for r in &mut self.runs {
                r.close();
            }
            if self.runs.len() == self.max_runs + 1 {
                self.merge_tiered()?;
            }
            while self.runs.len() > self.max_runs {
                self.merge_smallest()?;
            }
        }
        self.run_heads.clear();
        for (i, r) in self.runs.iter_mut().enumerate() {
            if r.reader.is_none() {
                let mut rd = r.array.reader_from(r.consumed, IoTag::Pq)?;
                r.head = rd.next()?;
                r.reader = Some(rd);
            }
            if let Some(h) = r.head {
                self.run_heads.push(Reverse((h.key, h.seq, i)));
            }
        }
        self.readable = true;
        Ok(())
    }

    /// One run too many, typically a fresh spill while the queue is being
    /// drained. Merges the runs from the newest lowest-level slot onwards, so
    /// that run sizes grow in tiers and an entry takes part in few merges.
    /// If the oldest run holds the lowest level, the old runs are merged
    /// instead, which keeps the fan-in within `max_runs`.
    fn merge_tiered(&mut self) -> Result<()> {
        let slots = self.max_runs;
        let low = self.runs[..slots].iter().map(|r| r.level).min().unwrap_or(0);
        let p = (0..slots).rev().find(|&i| self.runs[i].level == low).unwrap_or(0);
        let range = if p == 0 { 0..slots } else { p..slots + 1 };
        let at = range.start;
        let group: Vec<Run<P>> = self.runs.drain(range).collect();
        let merged = self.merge_runs(group)?;
        self.runs.insert(at, merged);
        Ok(())
    }

    fn merge_smallest(&mut self) -> Result<()> {
        let excess = self.runs.len() - self.max_runs;
        let fanin = (excess + 1)
            .max(self.max_runs / 2)
            .max(2)
            .min(self.max_runs)
            .min(self.runs.len());
        let mut order: Vec<usize> = (0..self.runs.len()).collect();
        order.sort_by_key(|&i| (self.runs[i].remaining(), i));
        let mut chosen: Vec<usize> = order[..fanin].to_vec();
        chosen.sort_unstable();
        let mut group: Vec<Run<P>> = Vec::with_capacity(fanin);
        for &i in chosen.iter().rev() {
            group.push(self.runs.remove(i));
        }
        let merged = self.merge_runs(group)?;
        self.runs.push(merged);
        Ok(())
    }

    fn merge_runs(&self, group: Vec<Run<P>>) -> Result<Run<P>> {
        let level = group.iter().map(|r| r.level).max().unwrap_or(0) + 1;
        let mut readers = group
            .iter()
            .map(|r| r.array.reader_from(r.consumed, IoTag::Pq))
            .collect::<Result<Vec<_>>>()?;
        let mut heads = BinaryHeap::new();
        for (i, rd) in readers.iter_mut().enumerate() {
            if let Some(e) = rd.next()? {
                heads.push(Reverse((e, i)));
            }
        }
        let mut w = ExternalArray::writer(&self.em, IoTag::Pq)?;
        while let Some(Reverse((e, i))) = heads.pop() {
            w.push(e)?;
            if let Some(n) = readers[i].next()? {
                heads.push(Reverse((n, i)));
            }
        }
        drop(readers);
        Ok(Run {
            array: w.finish()?,
            level,
            consumed: 0,
            reader: None,
            head: None,
        })
    }
}
