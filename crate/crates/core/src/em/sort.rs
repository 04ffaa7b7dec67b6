//! Stable multiway merge sort over external arrays.

use std::cmp::Ordering;

use super::{ArrayReader, Em, ExternalArray, IoTag, Record};
use crate::error::{Error, Result};

/// Binary heap over `k` sequence heads ordered by a caller-supplied
/// comparator, ties broken by sequence index (lower index first).
pub struct MergeHeap<T, F> {
    heads: Vec<Option<T>>,
    heap: Vec<usize>,
    cmp: F,
}

impl<T, F: Fn(&T, &T) -> Ordering> MergeHeap<T, F> {
    pub fn new(heads: Vec<Option<T>>, cmp: F) -> Self {
        let mut h = Self {
            heap: Vec::with_capacity(heads.len()),
            heads,
            cmp,
        };
        for i in 0..h.heads.len() {
            if h.heads[i].is_some() {
                h.heap.push(i);
                let at = h.heap.len() - 1;
                h.sift_up(at);
            }
        }
        h
    }

    fn less(&self, a: usize, b: usize) -> bool {
        let (x, y) = (self.heads[a].as_ref().unwrap(), self.heads[b].as_ref().unwrap());
        match (self.cmp)(x, y) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => a < b,
        }
    }

    fn sift_up(&mut self, mut at: usize) {
        while at > 0 {
            let parent = (at - 1) / 2;
            if self.less(self.heap[at], self.heap[parent]) {
                self.heap.swap(at, parent);
                at = parent;
            } else {
                break;
            }
        }
    }

    fn sift_down(&mut self, mut at: usize) {
        let n = self.heap.len();
        loop {
            let l = 2 * at + 1;
            if l >= n {
                break;
            }
            let r = l + 1;
            let c = if r < n && self.less(self.heap[r], self.heap[l]) {
                r
            } else {
                l
            };
            if self.less(self.heap[c], self.heap[at]) {
                self.heap.swap(c, at);
                at = c;
            } else {
                break;
            }
        }
    }

    /// Index of the sequence holding the minimum head.
    pub fn peek(&self) -> Option<(usize, &T)> {
        self.heap
            .first()
            .map(|&i| (i, self.heads[i].as_ref().unwrap()))
    }

    /// Removes the minimum head and installs `next` as that sequence's new head.
    pub fn replace_top(&mut self, next: Option<T>) -> Option<(usize, T)> {
        let &i = self.heap.first()?;
        let out = std::mem::replace(&mut self.heads[i], next);
        if self.heads[i].is_none() {
            let last = self.heap.pop().unwrap();
            if !self.heap.is_empty() {
                self.heap[0] = last;
                self.sift_down(0);
            }
        } else {
            self.sift_down(0);
        }
        out.map(|t| (i, t))
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

/// Sorts `input` under `cmp` with a stable multiway merge sort.
///
/// Run formation uses all memory the budget has left after one input and one
/// output block; merging uses the widest fan-in the budget admits. The first
/// merge pass only combines as many leading runs as needed to make the
/// remaining passes full, so cost grows smoothly with input size.
pub fn external_sort<R, F>(input: &ExternalArray<R>, cmp: F) -> Result<ExternalArray<R>>
where
    R: Record,
    F: Fn(&R, &R) -> Ordering,
{
    let em = input.em().clone();
    let b = em.block_size();
    let min_needed = 3 * b;
    if em.available() < min_needed {
        return Err(Error::Config(format!(
            "external sort needs at least {min_needed} bytes of budget for a 2-way merge, {} available",
            em.available()
        )));
    }
    let mut runs = form_runs(&em, input, &cmp)?;
    if runs.is_empty() {
        return ExternalArray::writer(&em, IoTag::Sort)?.finish();
    }
    while runs.len() > 1 {
        let fanin = ((em.available() / b).saturating_sub(1)).max(2) as usize;
        runs = merge_pass(&em, runs, fanin, &cmp)?;
    }
    Ok(runs.pop().unwrap())
}

fn form_runs<R, F>(em: &Em, input: &ExternalArray<R>, cmp: &F) -> Result<Vec<ExternalArray<R>>>
where
    R: Record,
    F: Fn(&R, &R) -> Ordering,
{
    let b = em.block_size();
    let chunk_bytes = em.available().saturating_sub(2 * b).max(R::SIZE as u64);
    let chunk_records = ((chunk_bytes / R::SIZE as u64).max(1)).min(input.len().max(1)) as usize;
    let _res = em.reserve((chunk_records * R::SIZE) as u64)?;
    let mut reader = input.reader(IoTag::Sort)?;
    let mut chunk: Vec<R> = Vec::with_capacity(chunk_records);
    let mut runs = Vec::new();
    loop {
        chunk.clear();
        while chunk.len() < chunk_records {
            match reader.next()? {
                Some(r) => chunk.push(r),
                None => break,
            }
        }
        if chunk.is_empty() {
            break;
        }
        chunk.sort_by(cmp);
        let mut w = ExternalArray::writer(em, IoTag::Sort)?;
        for r in &chunk {
            w.push(*r)?;
        }
        runs.push(w.finish()?);
        if chunk.len() < chunk_records {
            break;
        }
    }
    Ok(runs)
}

fn merge_pass<R, F>(
    em: &Em,
    runs: Vec<ExternalArray<R>>,
    fanin: usize,
    cmp: &F,
) -> Result<Vec<ExternalArray<R>>>
where
    R: Record,
    F: Fn(&R, &R) -> Ordering,
{
    let count = runs.len();
    // passes = ceil(log_fanin(count)); shrink to fanin^(passes-1) runs now.
    let mut target = 1usize;
    while target.saturating_mul(fanin) < count {
        target *= fanin;
    }
    let mut reduce = count - target;
    let mut out = Vec::with_capacity(target);
    let mut iter = runs.into_iter();
    while reduce > 0 {
        let g = fanin.min(reduce + 1);
        let group: Vec<_> = iter.by_ref().take(g).collect();
        out.push(merge_runs(em, &group, cmp)?);
        reduce -= g - 1;
    }
    out.extend(iter);
    Ok(out)
}

pub(crate) fn merge_runs<R, F>(em: &Em, group: &[ExternalArray<R>], cmp: &F) -> Result<ExternalArray<R>>
where
    R: Record,
    F: Fn(&R, &R) -> Ordering,
{
    let mut readers: Vec<ArrayReader<R>> = group
        .iter()
        .map(|a| a.reader(IoTag::Sort))
        .collect::<Result<_>>()?;
    let heads = readers
        .iter_mut()
        .map(|r| r.next())
        .collect::<Result<Vec<_>>>()?;
    let mut heap = MergeHeap::new(heads, |a: &R, b: &R| cmp(a, b));
    let mut w = ExternalArray::writer(em, IoTag::Sort)?;
    while let Some((i, _)) = heap.peek() {
        let next = readers[i].next()?;
        let (_, r) = heap.replace_top(next).unwrap();
        w.push(r)?;
    }
    drop(readers);
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::BlockConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn em(b: u64, m: u64) -> (tempfile::TempDir, Em) {
        let dir = tempfile::tempdir().unwrap();
        let em = Em::new(BlockConfig::new(b, m).unwrap(), dir.path()).unwrap();
        (dir, em)
    }

    #[test]
    fn small_permutation() {
        let (_d, em) = em(4096, 64 * 1024);
        let a = ExternalArray::<u64>::from_slice(&em, &[3, 1, 2]).unwrap();
        let s = external_sort(&a, |x, y| x.cmp(y)).unwrap();
        assert_eq!(s.to_vec().unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn sorted_input_is_preserved() {
        let (_d, em) = em(4096, 64 * 1024);
        let v: Vec<(u64, u64)> = (0..20_000).map(|i| (i / 3, i)).collect();
        let a = ExternalArray::from_slice(&em, &v).unwrap();
        let s = external_sort(&a, |x, y| x.0.cmp(&y.0)).unwrap();
        assert_eq!(s.to_vec().unwrap(), v);
    }

    #[test]
    fn stable_with_many_runs() {
        let (_d, em) = em(512, 4 * 1024);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v: Vec<(u64, u64)> = (0..30_000).map(|i| (rng.gen_range(0..50), i)).collect();
        let a = ExternalArray::from_slice(&em, &v).unwrap();
        let s = external_sort(&a, |x, y| x.0.cmp(&y.0)).unwrap();
        let mut expected = v.clone();
        expected.sort_by_key(|r| r.0);
        assert_eq!(s.to_vec().unwrap(), expected);
    }

    #[test]
    fn empty_input() {
        let (_d, em) = em(4096, 64 * 1024);
        let a = ExternalArray::<u64>::from_slice(&em, &[]).unwrap();
        assert!(external_sort(&a, |x, y| x.cmp(y)).unwrap().is_empty());
    }

    #[test]
    fn budget_too_small() {
        let (_d, em) = em(4096, 4 * 4096);
        let a = ExternalArray::<u64>::from_slice(&em, &[1, 2]).unwrap();
        let _hog = em.reserve(2 * 4096).unwrap();
        assert!(matches!(
            external_sort(&a, |x, y| x.cmp(y)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn sort_stays_within_budget() {
        let (_d, em) = em(1024, 16 * 1024);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<u64> = (0..50_000).map(|_| rng.gen()).collect();
        let a = ExternalArray::from_slice(&em, &v).unwrap();
        let s = external_sort(&a, |x, y| x.cmp(y)).unwrap();
        assert!(em.budget().peak() <= 16 * 1024);
        assert_eq!(em.budget().violations(), 0);
        let mut e = v;
        e.sort();
        assert_eq!(s.to_vec().unwrap(), e);
    }

    #[test]
    fn merge_heap_orders_and_breaks_ties_by_index() {
        let mut h = MergeHeap::new(vec![Some(3), Some(1), None, Some(1)], |a: &i32, b: &i32| {
            a.cmp(b)
        });
        assert_eq!(h.replace_top(None), Some((1, 1)));
        assert_eq!(h.replace_top(Some(5)), Some((3, 1)));
        assert_eq!(h.replace_top(None), Some((0, 3)));
        assert_eq!(h.replace_top(None), Some((3, 5)));
        assert!(h.is_empty());
    }
}
