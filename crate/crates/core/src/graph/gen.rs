//! Small synthetic graph generators. Edges are undirected `(u, v, w)` with `u != v`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two triangles `{0,1,2}` and `{3,4,5}` joined by the bridge `(2,3)`.
pub fn two_triangles() -> Vec<(u64, u64, u64)> {
    vec![
        (0, 1, 1),
        (0, 2, 1),
        (1, 2, 1),
        (3, 4, 1),
        (3, 5, 1),
        (4, 5, 1),
        (2, 3, 1),
    ]
}

pub fn path(n: u64) -> Vec<(u64, u64, u64)> {
    (1..n).map(|v| (v - 1, v, 1)).collect()
}

/// `w x h` grid, row-major IDs.
pub fn grid(w: u64, h: u64) -> Vec<(u64, u64, u64)> {
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let u = y * w + x;
            if x + 1 < w {
                out.push((u, u + 1, 1));
            }
            if y + 1 < h {
                out.push((u, u + w, 1));
            }
        }
    }
    out
}

/// Erdős–Rényi style graph with about `m` distinct edges and weights in
/// `[1, max_w]`. Duplicate draws are discarded.
pub fn random_graph(n: u64, m: u64, max_w: u64, seed: u64) -> Vec<(u64, u64, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    if n < 2 {
        return out;
    }
    let cap = n * (n - 1) / 2;
    let target = m.min(cap);
    let mut attempts = 0u64;
    while (out.len() as u64) < target && attempts < 20 * target + 100 {
        attempts += 1;
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u == v {
            continue;
        }
        let key = (u.min(v), u.max(v));
        if seen.insert(key) {
            out.push((u, v, rng.gen_range(1..=max_w.max(1))));
        }
    }
    out
}

/// Connection radius `scale * 0.55 * sqrt(ln n / n)` in the unit square.
pub fn rgg_radius(n: u64, scale: f64) -> f64 {
    let nf = n.max(2) as f64;
    scale * 0.55 * (nf.ln() / nf).sqrt()
}

/// Random geometric graph on `n` points in the unit square; nodes closer
/// than [`rgg_radius`] are joined by a unit edge. Node IDs follow a
/// row-major cell order so neighbours have nearby IDs. Each edge is passed
/// once to `emit(u, v)` with `u < v`.
pub fn rgg_edges(n: u64, scale: f64, seed: u64, mut emit: impl FnMut(u64, u64)) {
    let r = rgg_radius(n, scale);
    let cells = ((1.0 / r).floor() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cell_of = |x: f64| ((x * cells as f64) as usize).min(cells - 1);
    let mut pts: Vec<(usize, f64, f64)> = (0..n)
        .map(|_| {
            let x: f64 = rng.gen();
            let y: f64 = rng.gen();
            (cell_of(y) * cells + cell_of(x), x, y)
        })
        .collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut start = vec![0usize; cells * cells + 1];
    for p in &pts {
        start[p.0 + 1] += 1;
    }
    for i in 0..cells * cells {
        start[i + 1] += start[i];
    }
    let r2 = r * r;
    for (i, &(c, x, y)) in pts.iter().enumerate() {
        let (cy, cx) = (c / cells, c % cells);
        let mut visit = |cell: usize, from: usize| {
            for (j, q) in pts.iter().enumerate().take(start[cell + 1]).skip(from) {
                let (dx, dy) = (q.1 - x, q.2 - y);
                if dx * dx + dy * dy < r2 {
                    emit(i as u64, j as u64);
                }
            }
        };
        visit(c, i + 1);
        if cx + 1 < cells {
            visit(c + 1, start[c + 1]);
        }
        if cy + 1 < cells {
            for nx in cx.saturating_sub(1)..=(cx + 1).min(cells - 1) {
                let cell = (cy + 1) * cells + nx;
                visit(cell, start[cell]);
            }
        }
    }
}

pub fn rgg(n: u64, seed: u64) -> Vec<(u64, u64, u64)> {
    let mut out = Vec::new();
    rgg_edges(n, 1.0, seed, |u, v| out.push((u, v, 1)));
    out
}
