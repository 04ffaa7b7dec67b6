//! End-to-end acceptance suite. Each criterion prints one PASS/FAIL line;
//! run with `cargo test --test acceptance -- --nocapture` to see them.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use extpart::coloring::{bucket_cluster, build_forward_structures, BucketConfig, BucketTuple, Member, SizeVariant};
use extpart::em::{BlockConfig, Em, ExternalArray, IoSnapshot};
use extpart::graph::{
    build_from_edge_iter, build_from_edges, compute_block_weights, compute_cut, gen, l_max, ClusterAssignment,
    CsrGraph,
};
use extpart::lp::{
    ext_lp_round, lp_cluster, lp_semi_external, par_se_lp_round, se_lp_round, seed_queues, ClusterSizeTable,
    LpConfig, LpQueue, LpStats, Model, TieBreaker,
};
use extpart::multilevel::{contract_external, partition, project, refine_level, renumber, PartitionConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn em(b: u64, m: u64) -> (tempfile::TempDir, Em) {
    let d = tempfile::tempdir().unwrap();
    let em = Em::new(BlockConfig::new(b, m).unwrap(), d.path()).unwrap();
    (d, em)
}

fn random_csr(seed: u64, max_n: usize, max_node_w: u64) -> CsrGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_n);
    let m = rng.gen_range(0..=3 * n as u64);
    let mut g = CsrGraph::from_edges(n, &gen::random_graph(n as u64, m, 10, seed ^ 0xace));
    for w in g.node_w.iter_mut() {
        *w = rng.gen_range(1..=max_node_w);
    }
    g
}

/// In-memory LP round: `order` fixes the visit sequence, strict improvement,
/// feasibility `size + w <= bound`, lowest cluster ID on ties.
fn oracle_round(g: &CsrGraph, order: &[usize], a: &mut [u64], bound: Option<u64>) -> u64 {
    let mut size = vec![0u64; g.n()];
    for v in 0..g.n() {
        size[a[v] as usize] += g.node_w[v];
    }
    let mut moves = 0;
    for &v in order {
        let mut conn: BTreeMap<u64, u64> = BTreeMap::new();
        for (u, w) in g.neighbors(v) {
            *conn.entry(a[u]).or_default() += w;
        }
        let own = a[v];
        let own_w = conn.get(&own).copied().unwrap_or(0);
        let mut best: Option<(u64, u64)> = None;
        for (&c, &w) in &conn {
            if c == own || bound.is_some_and(|u| size[c as usize] + g.node_w[v] > u) {
                continue;
            }
            if best.is_none_or(|(_, bw)| w > bw) {
                best = Some((c, w));
            }
        }
        if let Some((c, w)) = best {
            if w > own_w {
                size[own as usize] -= g.node_w[v];
                size[c as usize] += g.node_w[v];
                a[v] = c;
                moves += 1;
            }
        }
    }
    moves
}

fn oracle_lp(g: &CsrGraph, order: &[usize], mut a: Vec<u64>, rounds: u64, bound: Option<u64>) -> Vec<u64> {
    for _ in 0..rounds {
        if oracle_round(g, order, &mut a, bound) == 0 {
            break;
        }
    }
    a
}

/// Greedy coloring in ID order with a cap on class sizes.
fn oracle_coloring(g: &CsrGraph, cap: u64) -> Vec<u64> {
    let mut color = vec![u64::MAX; g.n()];
    let mut class: Vec<u64> = Vec::new();
    for v in 0..g.n() {
        let used: Vec<u64> = g.neighbors(v).filter(|&(u, _)| u < v).map(|(u, _)| color[u]).collect();
        let c = (0..)
            .find(|c| !used.contains(c) && class.get(*c as usize).is_none_or(|&s| s < cap))
            .unwrap();
        if c as usize == class.len() {
            class.push(0);
        }
        class[c as usize] += 1;
        color[v] = c;
    }
    color
}

fn block_weights(g: &CsrGraph, p: &[u64], k: u64) -> Vec<u64> {
    let mut w = vec![0u64; k as usize];
    for v in 0..g.n() {
        w[p[v] as usize] += g.node_w[v];
    }
    w
}

fn lp_cfg(rounds: u64, model: Model, active: bool) -> LpConfig {
    LpConfig {
        rounds,
        model,
        active_nodes: active,
        ..Default::default()
    }
}

fn model_equivalence() -> Outcome {
    let mut compared = 0;
    for seed in 0..500u64 {
        let (_d, em) = em(256, 1 << 18);
        let g = random_csr(seed, 200, 5);
        let dg = g.to_disk(&em).unwrap();
        let rounds = 1 + seed % 5;
        let order: Vec<usize> = (0..g.n()).collect();
        let want = oracle_lp(&g, &order, (0..g.n() as u64).collect(), rounds, None);
        for (model, active) in [
            (Model::SemiExternal, false),
            (Model::External, false),
            (Model::SemiExternal, true),
            (Model::External, true),
        ] {
            let (a, _) = lp_cluster(&dg, &lp_cfg(rounds, model, active)).map_err(|e| e.to_string())?;
            ensure!(
                a.into_vec().unwrap() == want,
                "seed {seed}: {model:?} active={active} differs from the oracle"
            );
            compared += 1;
        }
    }
    Ok(format!("500 graphs, {compared} runs identical to the in-memory oracle"))
}

fn parallel_safety() -> Outcome {
    for seed in 0..100u64 {
        let (_d, em) = em(256, 1 << 20);
        let g = random_csr(seed + 7000, 200, 2);
        let dg = g.to_disk(&em).unwrap();
        let bound = Some(2 + seed % 6);
        let tb = TieBreaker::random(seed);
        let start: Vec<u64> = (0..g.n() as u64).collect();

        let mut a = start.clone();
        let mut s = ClusterSizeTable::recount(&dg, &a, bound).unwrap();
        let mut b = a.clone();
        let mut t = s.clone();
        for _ in 0..3 {
            se_lp_round(&dg, &mut a, &mut s, &tb, &mut LpStats::default()).unwrap();
            par_se_lp_round(&dg, &mut b, &mut t, &tb, 1, &mut LpStats::default()).unwrap();
            ensure!(a == b && s == t, "seed {seed}: one worker differs from the sequential round");
        }
        for workers in [2, 4, 8] {
            let mut a = start.clone();
            let mut s = ClusterSizeTable::recount(&dg, &a, bound).unwrap();
            for r in 0..3 {
                par_se_lp_round(&dg, &mut a, &mut s, &tb, workers, &mut LpStats::default()).unwrap();
                ensure!(
                    s.max_size() <= bound.unwrap(),
                    "seed {seed} t={workers} round {r}: bound violated"
                );
                ensure!(
                    s == ClusterSizeTable::recount(&dg, &a, bound).unwrap(),
                    "seed {seed} t={workers} round {r}: size table differs from recount"
                );
            }
        }
    }
    Ok("t=1 identical on 100 seeds; t in {2,4,8} feasible with exact sizes".into())
}

fn bucket_oracle() -> Outcome {
    for seed in 0..200u64 {
        let (_d, em) = em(128, 128 * 64);
        let g = random_csr(seed + 20_000, 150, 4);
        let dg = g.to_disk(&em).unwrap();
        let colors = oracle_coloring(&g, 20);
        let mut order: Vec<usize> = (0..g.n()).collect();
        order.sort_by_key(|&v| (colors[v], v));
        let cfg = BucketConfig {
            rounds: 3,
            class_bound: Some(20),
            ..Default::default()
        };
        let (a, _) = bucket_cluster(&dg, &cfg, None).map_err(|e| e.to_string())?;
        let want = oracle_lp(&g, &order, (0..g.n() as u64).collect(), 3, None);
        ensure!(a.into_vec().unwrap() == want, "seed {seed}: unconstrained bucket LP differs from oracle");

        let bound = 4 + seed % 6;
        let mut runs = Vec::new();
        for variant in [SizeVariant::Map, SizeVariant::Pq] {
            let cfg = BucketConfig {
                rounds: 3,
                constraint: Some(bound),
                variant,
                class_bound: Some(20),
                ..Default::default()
            };
            let (a, _) = bucket_cluster(&dg, &cfg, None).map_err(|e| e.to_string())?;
            let a = a.into_vec().unwrap();
            let mut size = vec![0u64; g.n()];
            for v in 0..g.n() {
                size[a[v] as usize] += g.node_w[v];
            }
            ensure!(
                size.iter().all(|&s| s <= bound),
                "seed {seed} {variant:?}: cluster above bound {bound}"
            );
            runs.push(a);
        }
        ensure!(runs[0] == runs[1], "seed {seed}: map and pq variants differ");
    }
    Ok("200 graphs: unconstrained = oracle, map = pq, all within bound".into())
}

fn forward_structures_fixture() -> Outcome {
    let (_d, em) = em(64, 64 * 64);
    const A: u64 = 100;
    const B: u64 = 200;
    let members: Vec<Member> = vec![
        (1, 11, 1),
        (2, 12, 1),
        (3, 13, 1),
        (4, 14, 1),
        (5, 15, 1),
        (6, A, 1),
        (7, 17, 1),
    ];
    let tuples: Vec<BucketTuple> = vec![
        (1, A, 20, 1, 1),
        (1, B, 21, 1, 1),
        (2, A, 20, 1, 1),
        (3, A, 22, 1, 1),
        (4, B, 21, 1, 1),
        (7, A, 23, 1, 1),
    ];
    let (n, m) = build_forward_structures(
        &ExternalArray::from_slice(&em, &tuples).unwrap(),
        &ExternalArray::from_slice(&em, &members).unwrap(),
    )
    .map_err(|e| e.to_string())?;
    let n = n.to_vec().unwrap();
    let m = m.to_vec().unwrap();
    let chain = |c: u64| n.iter().filter(|p| p.0 == c).map(|p| p.1).collect::<Vec<_>>();
    let from = |v: u64| m.iter().filter(|t| t.0 == v).map(|t| (t.2, t.1)).collect::<Vec<_>>();
    ensure!(chain(A) == vec![1, 2, 3, 6, 7], "N_A = {:?}", chain(A));
    ensure!(chain(B) == vec![1, 4], "N_B = {:?}", chain(B));
    ensure!(from(1) == vec![(2, A), (4, B)], "M_1 = {:?}", from(1));
    ensure!(from(2) == vec![(3, A)], "M_2 = {:?}", from(2));
    Ok("N_A={1,2,3,6,7} N_B={1,4} M_1={(2,A),(4,B)} M_2={(3,A)}".into())
}

fn projection_preserves() -> Outcome {
    let mut levels_checked = 0;
    for seed in 0..200u64 {
        let (_d, em) = em(64, 64 * 256);
        let g = random_csr(seed + 30_000, 150, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let external = seed % 2 == 0;
        let mut graphs = vec![g.to_disk(&em).unwrap()];
        let mut maps = Vec::new();
        for _ in 0..3 {
            let cur = graphs.last().unwrap();
            if cur.n() < 4 {
                break;
            }
            let n = cur.n();
            let clusters = rng.gen_range(1..=n);
            let a: Vec<u64> = (0..n).map(|_| rng.gen_range(0..clusters) * 3 + 1).collect();
            let a = if external {
                ClusterAssignment::External(ClusterAssignment::InMemory(a).to_external(&em).unwrap())
            } else {
                ClusterAssignment::InMemory(a)
            };
            let map = renumber(&a).unwrap();
            graphs.push(contract_external(cur, &map).unwrap());
            maps.push(map);
        }
        let k = rng.gen_range(2..=4u64);
        let coarsest = graphs.last().unwrap();
        let mut p = ClusterAssignment::InMemory((0..coarsest.n()).map(|_| rng.gen_range(0..k)).collect());
        let cut = compute_cut(coarsest, &p).unwrap();
        let weights = compute_block_weights(coarsest, &p, k).unwrap();
        for i in (0..maps.len()).rev() {
            p = project(&p, &maps[i]).map_err(|e| e.to_string())?;
            ensure!(compute_cut(&graphs[i], &p).unwrap() == cut, "seed {seed} level {i}: cut changed");
            ensure!(
                compute_block_weights(&graphs[i], &p, k).unwrap() == weights,
                "seed {seed} level {i}: block weights changed"
            );
            levels_checked += 1;
        }
    }
    Ok(format!("200 hierarchies, {levels_checked} projections exact"))
}

fn refinement_monotone() -> Outcome {
    let mut starts = 0;
    let mut seed = 0u64;
    while starts < 1000 {
        seed += 1;
        let (_d, em) = em(64, 64 * 256);
        let g = random_csr(seed + 40_000, 120, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if g.n() < 2 {
            continue;
        }
        let k = rng.gen_range(2..=4u64).min(g.n() as u64);
        let epsilon = rng.gen_range(0.0..0.5);
        let bound = l_max(g.total_node_weight(), k, epsilon);
        let mut w = vec![0u64; k as usize];
        let mut p = vec![0u64; g.n()];
        let mut ok = true;
        for v in 0..g.n() {
            let fits: Vec<u64> = (0..k).filter(|&b| w[b as usize] + g.node_w[v] <= bound).collect();
            let Some(&b) = fits.get(rng.gen_range(0..fits.len().max(1))) else {
                ok = false;
                break;
            };
            w[b as usize] += g.node_w[v];
            p[v] = b;
        }
        if !ok {
            continue;
        }
        let before = g.cut(&p);
        let dg = g.to_disk(&em).unwrap();
        let start = if seed % 2 == 0 {
            ClusterAssignment::InMemory(p)
        } else {
            ClusterAssignment::External(ClusterAssignment::InMemory(p).to_external(&em).unwrap())
        };
        let cfg = PartitionConfig {
            k,
            epsilon,
            ..Default::default()
        };
        let r = refine_level(&dg, start, &cfg).map_err(|e| e.to_string())?.into_vec().unwrap();
        ensure!(g.cut(&r) <= before, "seed {seed}: cut rose from {before} to {}", g.cut(&r));
        ensure!(
            block_weights(&g, &r, k).iter().all(|&x| x <= bound),
            "seed {seed}: refinement broke feasibility"
        );
        starts += 1;
    }
    Ok("1000 feasible starts: cut never rose, always feasible".into())
}

fn ext_round_io(n: u64, m: u64) -> IoSnapshot {
    let (_d, em) = em(4096, 256 * 1024);
    let g = build_from_edges(&em, n, &gen::random_graph(n, m, 1, 77)).unwrap();
    // Same split as the external clustering driver.
    let share = em.available().saturating_sub(4 * em.block_size()) / 2;
    let mut cur = LpQueue::new(&em, share).unwrap();
    let mut nxt = LpQueue::new(&em, share).unwrap();
    let a = ExternalArray::from_iter(&em, (0..n).map(|v| (v, v))).unwrap();
    seed_queues(&g, &a, &mut cur).unwrap();
    let before = em.io_report();
    ext_lp_round(&g, &a, &mut cur, &mut nxt, &TieBreaker::lowest_id(), &mut LpStats::default()).unwrap();
    em.io_report().since(&before)
}

fn bucket_round_io(n: u64, m: u64, b: u64, mem: u64, constraint: Option<u64>, class_bound: Option<u64>) -> (IoSnapshot, u64) {
    let (_d, em) = em(b, mem);
    let g = build_from_edges(&em, n, &gen::random_graph(n, m, 1, 78)).unwrap();
    let cfg = BucketConfig {
        rounds: 1,
        constraint,
        class_bound,
        ..Default::default()
    };
    let (_, st) = bucket_cluster(&g, &cfg, None).unwrap();
    (st.round_io[0], st.colors)
}

fn io_accounting() -> Outcome {
    // (a) one semi-external round reads the edge and node-weight arrays once.
    let (_d, em) = em(4096, 1 << 22);
    let g = build_from_edges(&em, 3000, &gen::random_graph(3000, 12000, 3, 1)).unwrap();
    let mut a: Vec<u64> = (0..g.n()).collect();
    let mut sizes = ClusterSizeTable::recount(&g, &a, Some(20)).unwrap();
    let before = em.io_report();
    se_lp_round(&g, &mut a, &mut sizes, &TieBreaker::lowest_id(), &mut LpStats::default()).unwrap();
    let d = em.io_report().since(&before);
    let scan = em.blocks_for(2 * g.m() + g.n(), 16) + em.blocks_for(g.n(), 8);
    ensure!(
        d.blocks_read() == scan && d.blocks_written() == 0,
        "(a) read {} written {}, expected {scan} and 0",
        d.blocks_read(),
        d.blocks_written()
    );

    // (b) doubling the input roughly doubles a round's I/O.
    let small = ext_round_io(25_000, 100_000).total() as f64;
    let large = ext_round_io(50_000, 200_000).total() as f64;
    let lp_ratio = large / small;
    ensure!((1.8..=2.8).contains(&lp_ratio), "(b) external LP ratio {lp_ratio:.3}");
    let bs = bucket_round_io(25_000, 100_000, 4096, 64 * 1024, None, None).0.total() as f64;
    let bl = bucket_round_io(50_000, 200_000, 4096, 64 * 1024, None, None).0.total() as f64;
    let bucket_ratio = bl / bs;
    ensure!((1.8..=2.8).contains(&bucket_ratio), "(b) bucket ratio {bucket_ratio:.3}");

    // (c) the constrained round adds one read and one write scan of the
    // size array per color.
    let (n, b) = (20_000u64, 4096u64);
    let (u, colors_u) = bucket_round_io(n, 80_000, b, 4 << 20, None, Some(n / 8));
    let (c, colors_c) = bucket_round_io(n, 80_000, b, 4 << 20, Some(40), Some(n / 8));
    ensure!(colors_u == colors_c, "(c) colorings differ");
    let expected = (colors_c * (n * 8).div_ceil(b)) as f64;
    let dr = c.blocks_read() as f64 - u.blocks_read() as f64;
    let dw = c.blocks_written() as f64 - u.blocks_written() as f64;
    ensure!(
        (dr - expected).abs() <= 0.2 * expected && (dw - expected).abs() <= 0.2 * expected,
        "(c) read delta {dr}, write delta {dw}, expected {expected} (|C|={colors_c})"
    );
    Ok(format!(
        "(a) {scan} blocks exact; (b) LP x{lp_ratio:.2}, bucket x{bucket_ratio:.2}; \
         (c) deltas {dr}/{dw} vs {expected} (|C|={colors_c})"
    ))
}

fn end_to_end_quality() -> Outcome {
    let n = 1u64 << 14;
    let edges = gen::rgg(n, 2024);
    let g = CsrGraph::from_edges(n as usize, &edges);
    let (k, eps) = (2u64, 0.03);
    let bound = l_max(n, k, eps);

    // Baseline: random balanced assignment, then constrained LP to convergence.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut start: Vec<u64> = (0..n).map(|v| v % k).collect();
    for i in (1..start.len()).rev() {
        start.swap(i, rng.gen_range(0..=i));
    }
    let order: Vec<usize> = (0..g.n()).collect();
    let baseline = oracle_lp(&g, &order, start, 100, Some(bound));
    let base_cut = g.cut(&baseline);

    let mut detail = format!("baseline cut {base_cut}");
    for model in [Model::SemiExternal, Model::External] {
        let (_d, em) = em(4096, 4 << 20);
        let dg = build_from_edges(&em, n, &edges).unwrap();
        let cfg = PartitionConfig {
            k,
            epsilon: eps,
            model,
            ..Default::default()
        };
        let (p, r) = partition(&dg, &cfg).map_err(|e| format!("{model:?}: {e}"))?;
        let p = p.into_vec().unwrap();
        let cut = g.cut(&p);
        ensure!(cut == r.cut, "{model:?}: reported cut {} but recount {cut}", r.cut);
        ensure!(
            block_weights(&g, &p, k).iter().all(|&w| w <= bound),
            "{model:?}: infeasible result"
        );
        ensure!(
            cut as f64 <= 1.5 * base_cut as f64,
            "{model:?}: cut {cut} > 1.5 x baseline {base_cut}"
        );
        detail += &format!(", {model:?} cut {cut} ({} levels)", r.levels.len());
    }

    let (_d, em) = em(64, 64 * 64);
    let tt = build_from_edges(&em, 6, &gen::two_triangles()).unwrap();
    let ttc = CsrGraph::from_edges(6, &gen::two_triangles());
    let opt = (0u64..64)
        .map(|mask| (0..6).map(|v| (mask >> v) & 1).collect::<Vec<u64>>())
        .filter(|p| p.iter().sum::<u64>() == 3)
        .map(|p| ttc.cut(&p))
        .min()
        .unwrap();
    let cfg = PartitionConfig {
        k: 2,
        epsilon: 0.0,
        ..Default::default()
    };
    let (_, r) = partition(&tt, &cfg).map_err(|e| e.to_string())?;
    ensure!(r.cut == opt && opt == 1, "two triangles: cut {} vs optimum {opt}", r.cut);
    Ok(detail + ", two triangles cut 1")
}

fn external_memory_honesty() -> Outcome {
    let (_d, em) = em(64 << 10, 8 << 20);
    let n = 1u64 << 18;
    let mut edges = Vec::new();
    gen::rgg_edges(n, 1.2, 99, |u, v| edges.push((u, v, 1)));
    let g = build_from_edge_iter(&em, n, edges.drain(..)).map_err(|e| e.to_string())?;
    drop(edges);
    let edge_bytes = g.edges().size_bytes();
    ensure!(edge_bytes >= 64 << 20, "edge array only {edge_bytes} bytes");
    let cfg = PartitionConfig {
        k: 2,
        model: Model::External,
        ..Default::default()
    };
    let (_, r) = partition(&g, &cfg).map_err(|e| e.to_string())?;
    let violations = em.budget().violations();
    ensure!(violations == 0, "{violations} over-budget allocations");
    ensure!(r.feasible, "infeasible result");
    ensure!(r.peak_memory_bytes <= 8 << 20, "peak {} bytes", r.peak_memory_bytes);
    Ok(format!(
        "edge array {} MiB, budget 8 MiB, peak {} KiB, {} levels, cut {}",
        edge_bytes >> 20,
        r.peak_memory_bytes >> 10,
        r.levels.len(),
        r.cut
    ))
}

fn active_nodes_trend() -> Outcome {
    let n = 1u64 << 16;
    let (_d, em) = em(1 << 16, 64 << 20);
    let g = build_from_edges(&em, n, &gen::rgg(n, 16)).unwrap();
    let rounds = 8;
    let full = LpConfig {
        rounds,
        ..Default::default()
    };
    let active = LpConfig {
        active_nodes: true,
        ..full.clone()
    };
    let (a_full, s_full) = lp_semi_external(&g, (0..n).collect(), &full).map_err(|e| e.to_string())?;
    let (a_act, s_act) = lp_semi_external(&g, (0..n).collect(), &active).map_err(|e| e.to_string())?;
    ensure!(a_full == a_act, "active result differs from plain LP");
    ensure!(s_act.rounds >= 7, "only {} rounds ran", s_act.rounds);
    let limit = n * s_act.rounds;
    ensure!(
        s_act.evaluations < limit,
        "{} evaluations, n * rounds = {limit}",
        s_act.evaluations
    );
    Ok(format!(
        "{} rounds: {} evaluations vs n*rounds = {limit} (plain LP {})",
        s_act.rounds, s_act.evaluations, s_full.evaluations
    ))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome, u64); 10] = [
        ("model equivalence", model_equivalence, 120),
        ("parallel determinism and safety", parallel_safety, 120),
        ("bucket algorithm oracle", bucket_oracle, 180),
        ("forward structures fixture", forward_structures_fixture, 60),
        ("cut and balance preservation", projection_preserves, 120),
        ("refinement monotonicity", refinement_monotone, 120),
        ("i/o accounting", io_accounting, 300),
        ("end-to-end quality", end_to_end_quality, 180),
        ("external-memory honesty", external_memory_honesty, 600),
        ("active-nodes trend", active_nodes_trend, 300),
    ];
    let mut failed = Vec::new();
    for (i, (name, f, limit)) in criteria.into_iter().enumerate() {
        let t = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let elapsed = t.elapsed();
        let res = match res {
            Ok(d) if elapsed > Duration::from_secs(limit) => Err(format!("{d}; took {elapsed:.1?} > {limit}s")),
            other => other,
        };
        match &res {
            Ok(d) => println!("criterion {:>2} PASS {name}: {d} [{elapsed:.1?}]", i + 1),
            Err(e) => {
                println!("criterion {:>2} FAIL {name}: {e} [{elapsed:.1?}]", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
