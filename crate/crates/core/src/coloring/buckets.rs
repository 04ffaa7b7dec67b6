use std::collections::HashMap;

use super::sizes::{ClusterSizeArray, SortedIds};
use super::{BucketStats, Coloring};
use crate::em::{external_sort, ArrayReader, ArrayWriter, Em, ExternalArray, ExternalPriorityQueue, IoTag};
use crate::error::{Error, Result};
use crate::graph::{DiskGraph, SENTINEL};
use crate::lp::{best_move_with, Scratch, TieBreaker};

/// `(v, cluster of u, u, w(u, v), color of u)`: node `u` tells `v` its
/// cluster. Stored in the bucket of `v`'s color.
pub type BucketTuple = (u64, u64, u64, u64, u64);

/// `(node, cluster, node weight)` of one color class member.
pub type Member = (u64, u64, u64);

/// Per-color tuple buckets and member lists.
pub struct Buckets {
    em: Em,
    writers: Vec<Option<ArrayWriter<BucketTuple>>>,
    members: Vec<ExternalArray<Member>>,
}

impl Buckets {
    /// Buckets from explicit contents; `members[i]` must be node-sorted.
    pub fn from_parts(em: &Em, members: Vec<Vec<Member>>, tuples: Vec<Vec<BucketTuple>>) -> Result<Self> {
        if members.len() != tuples.len() {
            return Err(Error::Dimension {
                expected: members.len() as u64,
                got: tuples.len() as u64,
            });
        }
        let mut b = Self {
            em: em.clone(),
            writers: Vec::new(),
            members: Vec::new(),
        };
        for (m, ts) in members.into_iter().zip(tuples) {
            b.members.push(ExternalArray::from_slice(em, &m)?);
            let mut w = ExternalArray::writer(em, IoTag::Scan)?;
            for t in ts {
                w.push(t)?;
            }
            b.writers.push(Some(w));
        }
        Ok(b)
    }

    pub fn num_colors(&self) -> u64 {
        self.members.len() as u64
    }

    pub fn members(&self, color: u64) -> &ExternalArray<Member> {
        &self.members[color as usize]
    }

    /// Tuples waiting in all buckets.
    pub fn pending_tuples(&self) -> u64 {
        self.writers.iter().flatten().map(|w| w.len()).sum()
    }

    /// Seals bucket `color` and opens an empty one in its place.
    fn take(&mut self, color: u64) -> Result<ExternalArray<BucketTuple>> {
        let slot = &mut self.writers[color as usize];
        let full = slot.take().expect("bucket writer present");
        let sealed = full.finish()?;
        *slot = Some(ExternalArray::writer(&self.em, IoTag::Scan)?);
        Ok(sealed)
    }

    fn send(&mut self, color: u64, t: BucketTuple) -> Result<()> {
        match self.writers.get_mut(color as usize) {
            Some(Some(w)) => w.push(t),
            _ => Err(Error::Routing {
                node: t.0,
                bucket: color,
                found: t.4,
            }),
        }
    }

    /// Node-sorted `(node, cluster)` pairs of all members. One sort.
    pub fn into_assignment(self) -> Result<ExternalArray<(u64, u64)>> {
        drop(self.writers);
        let mut all = ExternalArray::<(u64, u64)>::writer(&self.em, IoTag::Scan)?;
        for m in &self.members {
            m.scan(|(v, c, _)| all.push((v, c)))?;
        }
        external_sort(&all.finish()?, |a, b| a.0.cmp(&b.0))
    }
}

/// Sets up members and initial tuples: for every edge `{u, v}` with
/// `color(v) < color(u)` the bucket of `v` gets `(v, cluster[u], u, w, color(u))`.
///
/// `annotated` is the edge array with target colors. Fails when the color
/// count leaves too little memory beside one buffer block per bucket, or
/// when an edge joins two nodes of the same color.
pub fn init_buckets(
    g: &DiskGraph,
    annotated: &ExternalArray<(u64, u64, u64)>,
    coloring: &Coloring,
    assign: &ExternalArray<(u64, u64)>,
) -> Result<Buckets> {
    let em = g.em();
    let k = coloring.num_colors();
    let slots = em.memory_budget() / em.block_size();
    if k + 4 > slots {
        return Err(Error::Config(format!(
            "{k} color buckets do not fit into {slots} memory blocks"
        )));
    }
    if assign.len() != g.n() || coloring.colors().len() != g.n() {
        return Err(Error::Dimension {
            expected: g.n(),
            got: assign.len().min(coloring.colors().len()),
        });
    }

    let mut flat = ExternalArray::<(u64, u64, u64, u64)>::writer(em, IoTag::Scan)?;
    {
        let mut cr = coloring.colors().reader(IoTag::Scan)?;
        let mut wr = g.node_weights().reader(IoTag::Scan)?;
        assign.scan(|(v, c)| {
            let (x, col) = cr.next()?.ok_or(Error::Dimension { expected: g.n(), got: v })?;
            let w = wr.next()?.ok_or(Error::Dimension { expected: g.n(), got: v })?;
            if x != v {
                return Err(Error::Integrity {
                    node: v,
                    msg: "coloring and assignment are not aligned".into(),
                });
            }
            flat.push((col, v, c, w))
        })?;
    }
    let flat = external_sort(&flat.finish()?, |a, b| (a.0, a.1).cmp(&(b.0, b.1)))?;
    let mut members = Vec::with_capacity(k as usize);
    {
        let mut rd = flat.reader(IoTag::Scan)?;
        for col in 0..k {
            let mut w = ExternalArray::writer(em, IoTag::Scan)?;
            while let Some(&(c, v, cl, nw)) = rd.peek()? {
                if c != col {
                    break;
                }
                w.push((v, cl, nw))?;
                rd.next()?;
            }
            members.push(w.finish()?);
        }
    }
    drop(flat);

    let mut b = Buckets {
        em: em.clone(),
        writers: Vec::with_capacity(k as usize),
        members,
    };
    for _ in 0..k {
        b.writers.push(Some(ExternalArray::writer(em, IoTag::Scan)?));
    }
    let mut cr = coloring.colors().reader(IoTag::Scan)?;
    let mut ar = assign.reader(IoTag::Scan)?;
    let mut u = 0u64;
    let mut cur: Option<(u64, u64)> = None;
    annotated.scan(|(t, w, tcol)| {
        let (ucol, ucl) = match cur {
            Some(x) => x,
            None => {
                let col = cr.next()?.ok_or(Error::Dimension { expected: g.n(), got: u })?.1;
                let cl = ar.next()?.ok_or(Error::Dimension { expected: g.n(), got: u })?.1;
                cur = Some((col, cl));
                (col, cl)
            }
        };
        if t == SENTINEL {
            u += 1;
            cur = None;
            return Ok(());
        }
        if tcol == ucol {
            return Err(Error::Integrity {
                node: u,
                msg: format!("neighbour {t} has the same color {ucol}"),
            });
        }
        if tcol < ucol {
            b.send(tcol, (t, ucl, u, w, ucol))?;
        }
        Ok(())
    })?;
    Ok(b)
}

fn sort_bucket(raw: &ExternalArray<BucketTuple>) -> Result<ExternalArray<BucketTuple>> {
    external_sort(raw, |a, b| (a.0, a.1).cmp(&(b.0, b.1)))
}

/// Groups a sorted bucket by receiving member.
struct Walker {
    bucket: u64,
    tuples: ArrayReader<BucketTuple>,
    members: ArrayReader<Member>,
}

impl Walker {
    fn new(bucket: u64, sorted: &ExternalArray<BucketTuple>, members: &ExternalArray<Member>) -> Result<Self> {
        Ok(Self {
            bucket,
            tuples: sorted.reader(IoTag::Scan)?,
            members: members.reader(IoTag::Scan)?,
        })
    }

    /// Next member and its tuples in `buf`.
    fn next(&mut self, buf: &mut Vec<BucketTuple>) -> Result<Option<Member>> {
        buf.clear();
        let Some(m) = self.members.next()? else {
            if let Some(&t) = self.tuples.peek()? {
                return Err(self.misrouted(&t));
            }
            return Ok(None);
        };
        while let Some(&t) = self.tuples.peek()? {
            if t.0 > m.0 {
                break;
            }
            if t.0 < m.0 || t.4 == self.bucket {
                return Err(self.misrouted(&t));
            }
            buf.push(t);
            self.tuples.next()?;
        }
        Ok(Some(m))
    }

    fn misrouted(&self, t: &BucketTuple) -> Error {
        Error::Routing {
            node: t.0,
            bucket: self.bucket,
            found: t.4,
        }
    }
}

fn reply(b: &mut Buckets, color: u64, v: u64, to: u64, ts: &[BucketTuple]) -> Result<()> {
    for t in ts {
        b.send(t.4, (t.2, to, v, t.3, color))?;
    }
    Ok(())
}

/// Processes one color class without a size constraint. Returns the
/// number of moves.
pub fn process_bucket(b: &mut Buckets, color: u64, tb: &TieBreaker, stats: &mut BucketStats) -> Result<u64> {
    let sorted = sort_bucket(&b.take(color)?)?;
    let members = b.members[color as usize].clone();
    let mut walk = Walker::new(color, &sorted, &members)?;
    let mut out = ExternalArray::writer(&b.em, IoTag::Scan)?;
    let mut s = Scratch::default();
    let mut ts = Vec::new();
    let mut moves = 0u64;
    while let Some((v, own, w)) = walk.next(&mut ts)? {
        let (to, _) = best_move_with(&mut s, v, own, w, ts.iter().map(|t| (t.1, t.3)), |_| 0, None, tb);
        stats.evaluations += 1;
        moves += (to != own) as u64;
        reply(b, color, v, to, &ts)?;
        out.push((v, to, w))?;
    }
    drop(walk);
    b.members[color as usize] = out.finish()?;
    Ok(moves)
}

/// Size-constrained processing with an in-memory size map.
///
/// Members are taken in node-ID ranges whose tuples fit into half of the
/// free memory. For each range the sizes of all clusters it touches are
/// fetched in one exchange with the size array, and the updated sizes are
/// staged for the next exchange.
pub fn process_bucket_sized_map(
    b: &mut Buckets,
    color: u64,
    sizes: &mut ClusterSizeArray,
    bound: u64,
    tb: &TieBreaker,
    stats: &mut BucketStats,
) -> Result<u64> {
    let sorted = sort_bucket(&b.take(color)?)?;
    let members = b.members[color as usize].clone();
    let em = b.em.clone();
    let blk = em.block_size();
    let limit = em.available().saturating_sub(6 * blk) / 2;
    let _res = em.reserve(limit)?;
    let per_tuple = (std::mem::size_of::<BucketTuple>() + 3 * std::mem::size_of::<(u64, u64)>()) as u64;
    let cap = (limit / per_tuple).max(1) as usize;

    let mut walk = Walker::new(color, &sorted, &members)?;
    let mut out = ExternalArray::writer(&em, IoTag::Scan)?;
    let mut chunk = Chunk::default();
    let mut ts = Vec::new();
    let mut moves = 0u64;
    while let Some(m) = walk.next(&mut ts)? {
        if !chunk.members.is_empty() && chunk.tuples.len() + ts.len() > cap {
            moves += chunk.run(b, color, sizes, bound, tb, stats, &mut out)?;
        }
        let start = chunk.tuples.len();
        chunk.tuples.extend_from_slice(&ts);
        chunk.members.push((m, start, chunk.tuples.len()));
    }
    if !chunk.members.is_empty() {
        moves += chunk.run(b, color, sizes, bound, tb, stats, &mut out)?;
    }
    drop(walk);
    b.members[color as usize] = out.finish()?;
    Ok(moves)
}

#[derive(Default)]
struct Chunk {
    members: Vec<(Member, usize, usize)>,
    tuples: Vec<BucketTuple>,
}

impl Chunk {
    #[allow(clippy::too_many_arguments)]
    fn run(
        &mut self,
        b: &mut Buckets,
        color: u64,
        sizes: &mut ClusterSizeArray,
        bound: u64,
        tb: &TieBreaker,
        stats: &mut BucketStats,
        out: &mut ArrayWriter<Member>,
    ) -> Result<u64> {
        let mut wanted: Vec<u64> = self
            .members
            .iter()
            .map(|m| m.0 .1)
            .chain(self.tuples.iter().map(|t| t.1))
            .collect();
        wanted.sort_unstable();
        wanted.dedup();
        let mut map: HashMap<u64, u64> = HashMap::with_capacity(wanted.len());
        sizes.exchange(SortedIds::Mem(&wanted), |c, s| {
            map.insert(c, s);
            Ok(())
        })?;
        let mut s = Scratch::default();
        let mut moves = 0u64;
        for &((v, own, w), lo, hi) in &self.members {
            let ts = &self.tuples[lo..hi];
            let (to, _) = best_move_with(&mut s, v, own, w, ts.iter().map(|t| (t.1, t.3)), |c| map[&c], Some(bound), tb);
            stats.evaluations += 1;
            if to != own {
                moves += 1;
                *map.get_mut(&own).unwrap() -= w;
                *map.get_mut(&to).unwrap() += w;
            }
            reply(b, color, v, to, ts)?;
            out.push((v, to, w))?;
        }
        sizes.stage(wanted.iter().map(|c| (*c, map[c])).collect());
        self.members.clear();
        self.tuples.clear();
        Ok(moves)
    }
}

/// Forwarding structures of a sorted bucket.
///
/// `N` lists `(c, v)` for every member `v` and every cluster `c` in
/// `v`'s own cluster or among its neighbours' clusters, sorted and without
/// duplicates. `M` links consecutive members of each `N_c`: `(v, c, next)`,
/// sorted by `v`, then `c`.
pub fn build_forward_structures(
    sorted: &ExternalArray<BucketTuple>,
    members: &ExternalArray<Member>,
) -> Result<(ExternalArray<(u64, u64)>, ExternalArray<(u64, u64, u64)>)> {
    let em = sorted.em().clone();
    let mut pairs = ExternalArray::<(u64, u64)>::writer(&em, IoTag::Scan)?;
    {
        let mut walk = Walker::new(u64::MAX, sorted, members)?;
        let mut ts = Vec::new();
        while let Some((v, own, _)) = walk.next(&mut ts)? {
            pairs.push((own, v))?;
            for t in &ts {
                pairs.push((t.1, v))?;
            }
        }
    }
    let pairs = external_sort(&pairs.finish()?, |a, b| a.cmp(b))?;
    let mut nw = ExternalArray::writer(&em, IoTag::Scan)?;
    let mut mw = ExternalArray::<(u64, u64, u64)>::writer(&em, IoTag::Scan)?;
    let mut prev: Option<(u64, u64)> = None;
    pairs.scan(|p| {
        if prev == Some(p) {
            return Ok(());
        }
        if let Some((c, v)) = prev {
            if c == p.0 {
                mw.push((v, c, p.1))?;
            }
        }
        nw.push(p)?;
        prev = Some(p);
        Ok(())
    })?;
    drop(pairs);
    let n_arr = nw.finish()?;
    let m_arr = external_sort(&mw.finish()?, |a, b| (a.0, a.1).cmp(&(b.0, b.1)))?;
    Ok((n_arr, m_arr))
}

/// Size-constrained processing with forwarding chains.
///
/// The size of each cluster `c` is fetched once for the first member of
/// `N_c` and then handed from member to member along `M` through a
/// priority queue, so every member sees the sizes left by earlier members.
/// The last member of each chain stages the final size.
pub fn process_bucket_sized_pq(
    b: &mut Buckets,
    color: u64,
    sizes: &mut ClusterSizeArray,
    bound: u64,
    tb: &TieBreaker,
    stats: &mut BucketStats,
) -> Result<u64> {
    let em = b.em.clone();
    let blk = em.block_size();
    let sorted = sort_bucket(&b.take(color)?)?;
    let members = b.members[color as usize].clone();
    let (n_arr, m_arr) = build_forward_structures(&sorted, &members)?;

    let mut ww = ExternalArray::<u64>::writer(&em, IoTag::Scan)?;
    let mut sw = ExternalArray::<(u64, u64)>::writer(&em, IoTag::Scan)?;
    let mut last: Option<u64> = None;
    n_arr.scan(|(c, v)| {
        if last != Some(c) {
            ww.push(c)?;
            sw.push((c, v))?;
            last = Some(c);
        }
        Ok(())
    })?;
    drop(n_arr);
    let wanted = ww.finish()?;
    let seeds = sw.finish()?;

    let share = em.available().saturating_sub(8 * blk);
    let mut pq = ExternalPriorityQueue::<(u64, u64)>::new(&em, share)?;
    {
        let mut sr = seeds.reader(IoTag::Scan)?;
        sizes.exchange(SortedIds::Ext(&wanted), |c, s| {
            let (c2, v) = sr.next()?.ok_or(Error::ForwardingChain { node: 0, cluster: c })?;
            debug_assert_eq!(c, c2);
            pq.push(v, (c, s))
        })?;
    }
    drop(wanted);
    drop(seeds);

    let mut walk = Walker::new(color, &sorted, &members)?;
    let mut mr = m_arr.reader(IoTag::Scan)?;
    let mut out = ExternalArray::writer(&em, IoTag::Scan)?;
    let mut term = ExternalArray::<(u64, u64)>::writer(&em, IoTag::Scan)?;
    let mut s = Scratch::default();
    let mut ts = Vec::new();
    let mut local: Vec<(u64, u64, bool)> = Vec::new();
    let mut moves = 0u64;
    while let Some((v, own, w)) = walk.next(&mut ts)? {
        local.clear();
        while let Some(k) = pq.min_key()? {
            if k > v {
                break;
            }
            let (k, (c, sz)) = pq.pop_min()?;
            if k < v {
                return Err(Error::ForwardingChain { node: k, cluster: c });
            }
            local.push((c, sz, false));
        }
        local.sort_unstable();
        let find = |local: &[(u64, u64, bool)], c: u64| local.binary_search_by_key(&c, |e| e.0).ok();
        for c in std::iter::once(own).chain(ts.iter().map(|t| t.1)) {
            if find(&local, c).is_none() {
                return Err(Error::ForwardingChain { node: v, cluster: c });
            }
        }
        let (to, _) = best_move_with(
            &mut s,
            v,
            own,
            w,
            ts.iter().map(|t| (t.1, t.3)),
            |c| local[find(&local, c).unwrap()].1,
            Some(bound),
            tb,
        );
        stats.evaluations += 1;
        if to != own {
            moves += 1;
            let i = find(&local, own).unwrap();
            local[i].1 -= w;
            let j = find(&local, to).unwrap();
            local[j].1 += w;
        }
        while let Some(&(x, c, next)) = mr.peek()? {
            if x != v {
                break;
            }
            let i = find(&local, c).ok_or(Error::ForwardingChain { node: v, cluster: c })?;
            pq.push(next, (c, local[i].1))?;
            local[i].2 = true;
            mr.next()?;
        }
        for &(c, sz, fwd) in &local {
            if !fwd {
                term.push((c, sz))?;
            }
        }
        reply(b, color, v, to, &ts)?;
        out.push((v, to, w))?;
    }
    if let Some(k) = pq.min_key()? {
        return Err(Error::ForwardingChain { node: k, cluster: pq.pop_min()?.1 .0 });
    }
    drop(walk);
    drop(mr);
    drop(pq);
    b.members[color as usize] = out.finish()?;
    let term = external_sort(&term.finish()?, |a, b| a.0.cmp(&b.0))?;
    sizes.stage_external(term);
    Ok(moves)
}
