use std::collections::BTreeMap;

use extpart::em::{BlockConfig, Em, IoTag};
use extpart::graph::{
    build_from_edges, compute_block_weights, compute_cut, gen, ClusterAssignment, CsrGraph, DiskGraph,
};
use extpart::lp::Model;
use extpart::multilevel::{
    coarsen, contract_external, contract_semi_external, partition, partition_coarsest, project, refine_level,
    renumber, ContractionMap, PartitionConfig,
};
use extpart::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn em(b: u64, m: u64) -> (tempfile::TempDir, Em) {
    let d = tempfile::tempdir().unwrap();
    let em = Em::new(BlockConfig::new(b, m).unwrap(), d.path()).unwrap();
    (d, em)
}

fn two_triangles(em: &Em) -> DiskGraph {
    build_from_edges(em, 6, &gen::two_triangles()).unwrap()
}

/// Quotient graph built with ordered maps: per coarse node its weight and
/// sorted `(neighbour, weight)` list.
fn oracle_quotient(g: &CsrGraph, map: &[u64], n_coarse: usize) -> (Vec<u64>, Vec<Vec<(u64, u64)>>) {
    let mut w = vec![0u64; n_coarse];
    let mut adj: Vec<BTreeMap<u64, u64>> = vec![BTreeMap::new(); n_coarse];
    for v in 0..g.n() {
        w[map[v] as usize] += g.node_w[v];
        for (u, ew) in g.neighbors(v) {
            if map[u] != map[v] {
                *adj[map[v] as usize].entry(map[u]).or_default() += ew;
            }
        }
    }
    (w, adj.into_iter().map(|m| m.into_iter().collect()).collect())
}

fn lists(g: &CsrGraph) -> (Vec<u64>, Vec<Vec<(u64, u64)>>) {
    (
        g.node_w.clone(),
        (0..g.n()).map(|v| g.neighbors(v).map(|(u, w)| (u as u64, w)).collect()).collect(),
    )
}

fn random_graph(seed: u64, max_n: u64) -> CsrGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=max_n);
    let m = rng.gen_range(0..=3 * n);
    let mut g = CsrGraph::from_edges(n as usize, &gen::random_graph(n, m, 9, seed ^ 0x5a));
    for w in g.node_w.iter_mut() {
        *w = rng.gen_range(1..=3);
    }
    g
}

fn random_clustering(rng: &mut ChaCha8Rng, n: usize) -> Vec<u64> {
    let k = rng.gen_range(1..=n);
    (0..n).map(|_| rng.gen_range(0..k as u64) * 7 + 3).collect()
}

#[test]
fn renumber_examples() {
    let m = renumber(&ClusterAssignment::InMemory(vec![5, 5, 9, 2])).unwrap();
    assert_eq!(m.n_coarse, 3);
    assert_eq!(m.map.to_vec().unwrap(), vec![1, 1, 2, 0]);
    let m = renumber(&ClusterAssignment::InMemory((0..10).collect())).unwrap();
    assert_eq!(m.n_coarse, 10);
    assert_eq!(m.map.to_vec().unwrap(), (0..10).collect::<Vec<_>>());
}

#[test]
fn renumber_modes_agree() {
    let (_d, em) = em(64, 64 * 64);
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..300);
        let a = random_clustering(&mut rng, n);
        let mem = renumber(&ClusterAssignment::InMemory(a.clone())).unwrap();
        let ext = ClusterAssignment::External(ClusterAssignment::InMemory(a).to_external(&em).unwrap());
        let ext = renumber(&ext).unwrap();
        assert!(ext.is_external());
        assert_eq!(mem.n_coarse, ext.n_coarse);
        assert_eq!(mem.map.to_vec().unwrap(), ext.map.to_vec().unwrap());
    }
}

#[test]
fn contraction_examples() {
    let (_d, em) = em(64, 64 * 64);
    let g = two_triangles(&em);
    let map = ContractionMap {
        map: ClusterAssignment::InMemory(vec![0, 0, 0, 1, 1, 1]),
        n_coarse: 2,
    };
    let q = CsrGraph::load(&contract_external(&g, &map).unwrap()).unwrap();
    assert_eq!(lists(&q), (vec![3, 3], vec![vec![(1, 1)], vec![(0, 1)]]));
    let one = ContractionMap {
        map: ClusterAssignment::InMemory(vec![0; 6]),
        n_coarse: 1,
    };
    let q = contract_semi_external(&g, &[0; 6], 1).unwrap();
    assert_eq!((q.n(), q.m(), q.total_node_weight()), (1, 0, 6));
    let q = contract_external(&g, &one).unwrap();
    assert_eq!((q.n(), q.m(), q.total_node_weight()), (1, 0, 6));
}

#[test]
fn contraction_matches_quotient_oracle() {
    for seed in 0..60 {
        let (_d, em) = em(64, 64 * 4096);
        let g = random_graph(seed, 200);
        let dg = g.to_disk(&em).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 999);
        let cmap = renumber(&ClusterAssignment::InMemory(random_clustering(&mut rng, g.n()))).unwrap();
        let dense = cmap.map.to_vec().unwrap();
        let want = oracle_quotient(&g, &dense, cmap.n_coarse as usize);

        let se = contract_semi_external(&dg, &dense, cmap.n_coarse).unwrap();
        let ext = contract_external(&dg, &cmap).unwrap();
        assert_eq!(lists(&CsrGraph::load(&se).unwrap()), want, "seed {seed}");
        assert_eq!(se.edges().to_vec().unwrap(), ext.edges().to_vec().unwrap());
        assert_eq!(se.offsets().to_vec().unwrap(), ext.offsets().to_vec().unwrap());
        assert_eq!(se.node_weights().to_vec().unwrap(), ext.node_weights().to_vec().unwrap());
        assert_eq!(se.header(), ext.header());
        se.validate().unwrap();
    }
}

#[test]
fn semi_external_contraction_reads_once_without_sorting() {
    let (_d, em) = em(256, 256 * 4096);
    let dg = build_from_edges(&em, 500, &gen::random_graph(500, 2000, 5, 1)).unwrap();
    let map: Vec<u64> = (0..500).map(|v| v / 5).collect();
    let before = em.io_report();
    contract_semi_external(&dg, &map, 100).unwrap();
    let d = em.io_report().since(&before);
    assert_eq!(d.read(IoTag::Sort), 0);
    assert_eq!(d.written(IoTag::Sort), 0);
    assert_eq!(d.read(IoTag::Scan), dg.edges().blocks() + dg.node_weights().blocks());
}

#[test]
fn semi_external_contraction_reports_over_budget() {
    let (_d, em) = em(64, 64 * 16);
    let dg = build_from_edges(&em, 300, &gen::random_graph(300, 1200, 5, 2)).unwrap();
    let map: Vec<u64> = (0..300).collect();
    let violations = em.budget().violations();
    assert!(matches!(
        contract_semi_external(&dg, &map, 300),
        Err(Error::OverBudget { .. })
    ));
    assert_eq!(em.budget().violations(), violations);
    let cmap = ContractionMap {
        map: ClusterAssignment::InMemory(map),
        n_coarse: 300,
    };
    assert_eq!(extpart::multilevel::contract(&dg, &cmap).unwrap().m(), dg.m());
}

#[test]
fn coarsening_examples() {
    let (_d, em) = em(64, 64 * 64);
    let g = two_triangles(&em);
    let cfg = PartitionConfig {
        k: 2,
        epsilon: 0.0,
        stop_threshold: Some(100),
        ..Default::default()
    };
    let h = coarsen(&g, &cfg).unwrap();
    assert_eq!(h.levels.len(), 2);
    let q = CsrGraph::load(h.coarsest()).unwrap();
    assert_eq!(lists(&q), (vec![3, 3], vec![vec![(1, 1)], vec![(0, 1)]]));

    let h = coarsen(&g, &PartitionConfig::default()).unwrap();
    assert_eq!(h.levels.len(), 1);

    let p = build_from_edges(&em, 40, &gen::path(40)).unwrap();
    let cfg = PartitionConfig {
        coarsening_constraint: Some(1),
        stop_threshold: Some(0),
        ..Default::default()
    };
    assert!(matches!(coarsen(&p, &cfg), Err(Error::Stalled { nodes: 40, .. })));
}

#[test]
fn coarsening_modes_agree_on_level_sizes() {
    let (_d, em) = em(256, 256 * 256);
    let g = build_from_edges(&em, 2000, &gen::rgg(2000, 4)).unwrap();
    for model in [Model::SemiExternal, Model::External] {
        let cfg = PartitionConfig {
            model,
            stop_threshold: Some(20_000),
            ..Default::default()
        };
        let h = coarsen(&g, &cfg).unwrap();
        assert!(h.levels.len() >= 2, "{model:?}");
        for w in h.levels.windows(2) {
            assert_eq!(w[0].graph.total_node_weight(), w[1].graph.total_node_weight());
            assert!(w[1].graph.n() < w[0].graph.n());
            w[1].graph.validate().unwrap();
        }
    }
}

#[test]
fn projection_examples() {
    let (_d, em) = em(64, 64 * 64);
    let id = ContractionMap {
        map: ClusterAssignment::InMemory((0..6).collect()),
        n_coarse: 6,
    };
    let p = ClusterAssignment::InMemory(vec![0, 1, 0, 1, 1, 0]);
    assert_eq!(project(&p, &id).unwrap().to_vec().unwrap(), p.to_vec().unwrap());

    let g = two_triangles(&em);
    let map = ContractionMap {
        map: ClusterAssignment::InMemory(vec![0, 0, 0, 1, 1, 1]),
        n_coarse: 2,
    };
    let coarse = contract_external(&g, &map).unwrap();
    let pc = ClusterAssignment::InMemory(vec![0, 1]);
    let fine = project(&pc, &map).unwrap();
    assert_eq!(fine.to_vec().unwrap(), vec![0, 0, 0, 1, 1, 1]);
    assert_eq!(compute_cut(&coarse, &pc).unwrap(), 1);
    assert_eq!(compute_cut(&g, &fine).unwrap(), 1);

    let ext_map = ContractionMap {
        map: ClusterAssignment::External(map.map.to_external(&em).unwrap()),
        n_coarse: 2,
    };
    let fine = project(&pc, &ext_map).unwrap();
    assert!(fine.is_external());
    assert_eq!(fine.to_vec().unwrap(), vec![0, 0, 0, 1, 1, 1]);

    let bad = ClusterAssignment::InMemory(vec![0, 1, 1]);
    assert!(matches!(project(&bad, &map), Err(Error::Dimension { .. })));
}

#[test]
fn projection_preserves_cut_and_block_weights() {
    for seed in 0..40 {
        let (_d, em) = em(64, 64 * 256);
        let g = random_graph(seed, 150);
        let dg = g.to_disk(&em).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let external = seed % 2 == 0;
        let mut levels = vec![dg];
        let mut maps = Vec::new();
        for _ in 0..3 {
            let cur = levels.last().unwrap();
            if cur.n() < 4 {
                break;
            }
            let a = random_clustering(&mut rng, cur.n() as usize);
            let a = if external {
                ClusterAssignment::External(ClusterAssignment::InMemory(a).to_external(&em).unwrap())
            } else {
                ClusterAssignment::InMemory(a)
            };
            let m = renumber(&a).unwrap();
            let next = contract_external(cur, &m).unwrap();
            maps.push(m);
            levels.push(next);
        }
        let k = rng.gen_range(2..=4u64);
        let coarsest = levels.last().unwrap();
        let mut p = ClusterAssignment::InMemory((0..coarsest.n()).map(|_| rng.gen_range(0..k)).collect());
        let cut = compute_cut(coarsest, &p).unwrap();
        let bw = compute_block_weights(coarsest, &p, k).unwrap();
        for i in (0..maps.len()).rev() {
            p = project(&p, &maps[i]).unwrap();
            assert_eq!(compute_cut(&levels[i], &p).unwrap(), cut, "seed {seed} level {i}");
            assert_eq!(compute_block_weights(&levels[i], &p, k).unwrap(), bw);
        }
    }
}

#[test]
fn refinement_examples() {
    let (_d, em) = em(64, 64 * 64);
    let g = two_triangles(&em);
    let cfg = PartitionConfig {
        k: 2,
        epsilon: 0.0,
        ..Default::default()
    };
    // Every single move would exceed L_max = 3, so constrained LP keeps it.
    let start = ClusterAssignment::InMemory(vec![0, 0, 1, 0, 1, 1]);
    assert_eq!(compute_cut(&g, &start).unwrap(), 5);
    let r = refine_level(&g, start.clone(), &cfg).unwrap();
    assert_eq!(r.to_vec().unwrap(), vec![0, 0, 1, 0, 1, 1]);

    // With slack the misplaced nodes move home.
    let loose = PartitionConfig {
        epsilon: 0.34,
        ..cfg.clone()
    };
    let r = refine_level(&g, start, &loose).unwrap();
    assert_eq!(compute_cut(&g, &r).unwrap(), 1);

    let opt = ClusterAssignment::InMemory(vec![0, 0, 0, 1, 1, 1]);
    assert_eq!(refine_level(&g, opt.clone(), &cfg).unwrap().to_vec().unwrap(), opt.to_vec().unwrap());

    let heavy = ClusterAssignment::InMemory(vec![0, 0, 0, 0, 1, 1]);
    assert!(matches!(refine_level(&g, heavy, &cfg), Err(Error::Infeasible(_))));
}

#[test]
fn refinement_never_worsens() {
    for seed in 0..80 {
        let (_d, em) = em(64, 64 * 256);
        let g = random_graph(seed + 500, 120);
        let dg = g.to_disk(&em).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.gen_range(2..=4u64).min(g.n() as u64);
        let cfg = PartitionConfig {
            k,
            epsilon: rng.gen_range(0.0..0.5),
            ..Default::default()
        };
        let total = g.total_node_weight();
        let lmax = extpart::graph::l_max(total, k, cfg.epsilon);
        // Random feasible start: place nodes into random blocks with room.
        let mut w = vec![0u64; k as usize];
        let mut p = vec![0u64; g.n()];
        let mut ok = true;
        for v in 0..g.n() {
            let fits: Vec<u64> = (0..k).filter(|&b| w[b as usize] + g.node_w[v] <= lmax).collect();
            if fits.is_empty() {
                ok = false;
                break;
            }
            let b = fits[rng.gen_range(0..fits.len())];
            w[b as usize] += g.node_w[v];
            p[v] = b;
        }
        if !ok {
            continue;
        }
        let before = g.cut(&p);
        let start = if seed % 2 == 0 {
            ClusterAssignment::InMemory(p)
        } else {
            ClusterAssignment::External(ClusterAssignment::InMemory(p).to_external(&em).unwrap())
        };
        let r = refine_level(&dg, start, &cfg).unwrap();
        let r = r.to_vec().unwrap();
        assert!(g.cut(&r) <= before, "seed {seed}");
        let mut rw = vec![0u64; k as usize];
        for v in 0..g.n() {
            rw[r[v] as usize] += g.node_w[v];
        }
        assert!(rw.iter().all(|&x| x <= lmax), "seed {seed}");
    }
}

#[test]
fn coarsest_partition_examples() {
    let g = CsrGraph::from_edges(2, &[(0, 1, 5)]);
    let p = partition_coarsest(&g, 2, 0.0, 1, 4).unwrap();
    assert_ne!(p[0], p[1]);
    assert_eq!(g.cut(&p), 5);
    let g6 = CsrGraph::from_edges(6, &gen::two_triangles());
    assert_eq!(partition_coarsest(&g6, 1, 0.0, 1, 4).unwrap(), vec![0; 6]);
    assert!(matches!(partition_coarsest(&g6, 7, 0.0, 1, 4), Err(Error::Parameter(_))));
    let p = partition_coarsest(&g6, 2, 0.0, 3, 4).unwrap();
    assert_eq!(g6.cut(&p), 1);
}

#[test]
fn coarsest_partition_beats_random_baseline_on_grid() {
    let g = CsrGraph::from_edges(64, &gen::grid(8, 8));
    let p = partition_coarsest(&g, 4, 0.03, 7, 4).unwrap();
    let lmax = extpart::graph::l_max(64, 4, 0.03);
    let mut w = [0u64; 4];
    for &b in &p {
        w[b as usize] += 1;
    }
    assert!(w.iter().all(|&x| x <= lmax));
    // Best of 1000 random balanced partitions.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut best = u64::MAX;
    for _ in 0..1000 {
        let mut perm: Vec<u64> = (0..64).map(|i| i / 16).collect();
        for i in (1..64).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        best = best.min(g.cut(&perm));
    }
    assert!(g.cut(&p) <= 2 * best, "cut {} vs random best {best}", g.cut(&p));
}

#[test]
fn two_triangles_partition_is_optimal() {
    let (_d, em) = em(64, 64 * 64);
    let g = two_triangles(&em);
    let c = CsrGraph::load(&g).unwrap();
    let mut opt = u64::MAX;
    for mask in 0u64..64 {
        let p: Vec<u64> = (0..6).map(|v| (mask >> v) & 1).collect();
        if p.iter().filter(|&&b| b == 1).count() == 3 {
            opt = opt.min(c.cut(&p));
        }
    }
    for model in [Model::SemiExternal, Model::External] {
        let cfg = PartitionConfig {
            k: 2,
            epsilon: 0.0,
            model,
            ..Default::default()
        };
        let (p, r) = partition(&g, &cfg).unwrap();
        assert_eq!(r.cut, opt);
        assert_eq!(r.cut, 1);
        assert_eq!(r.block_weights, vec![3, 3]);
        assert_eq!(r.levels.len(), 1);
        assert_eq!(p.len(), 6);
    }
}

#[test]
fn multilevel_pipeline_is_feasible_and_consistent() {
    for model in [Model::SemiExternal, Model::External] {
        let (_d, em) = em(1024, 1024 * 256);
        let g = build_from_edges(&em, 4000, &gen::rgg(4000, 2)).unwrap();
        let cfg = PartitionConfig {
            k: 4,
            model,
            stop_threshold: Some(40_000),
            ..Default::default()
        };
        let (p, r) = partition(&g, &cfg).unwrap();
        assert!(r.feasible);
        assert!(r.levels.len() >= 2, "{model:?}");
        assert_eq!(compute_cut(&g, &p).unwrap(), r.cut);
        assert_eq!(p.is_external(), model == Model::External);
        assert_eq!(em.budget().violations(), 0);
    }
}
