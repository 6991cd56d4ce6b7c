//! Independent reference implementations used by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use rand::Rng;

/// Degree-0 sublevel persistence of a graph by union-find and the elder rule.
/// Returns sorted `(birth, death)` pairs, with `f64::INFINITY` for survivors.
/// Zero-length pairs are dropped.
pub fn elder_rule_barcode(n: usize, edges: &[(usize, usize)], x: &[f64]) -> Vec<(f64, f64)> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut v: usize) -> usize {
        while p[v] != v {
            p[v] = p[p[v]];
            v = p[v];
        }
        v
    }
    // Each root remembers the birth value of its component.
    let birth = x.to_vec();
    let mut present = vec![false; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let mut out = Vec::new();
    for &v in &order {
        present[v] = true;
        for &(a, b) in edges {
            let u = if a == v {
                b
            } else if b == v {
                a
            } else {
                continue;
            };
            if !present[u] {
                continue;
            }
            let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
            if ru == rv {
                continue;
            }
            let (old, young) = if (birth[ru], ru) <= (birth[rv], rv) { (ru, rv) } else { (rv, ru) };
            if birth[young] < x[v] {
                out.push((birth[young], x[v]));
            }
            parent[young] = old;
        }
    }
    for v in 0..n {
        if find(&mut parent, v) == v {
            out.push((birth[v], f64::INFINITY));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    out
}

fn diag(p: (f64, f64)) -> f64 {
    (p.1 - p.0) / std::f64::consts::SQRT_2
}

/// `W_q` by enumerating every partial matching.
pub fn brute_wq(a: &[(f64, f64)], b: &[(f64, f64)], q: f64) -> f64 {
    fn rec(i: usize, a: &[(f64, f64)], b: &[(f64, f64)], used: &mut Vec<bool>, q: f64) -> f64 {
        if i == a.len() {
            return b
                .iter()
                .zip(used.iter())
                .filter(|(_, &u)| !u)
                .map(|(p, _)| diag(*p).powf(q))
                .sum();
        }
        let mut best = diag(a[i]).powf(q) + rec(i + 1, a, b, used, q);
        for j in 0..b.len() {
            if !used[j] {
                used[j] = true;
                let c = (a[i].0 - b[j].0).hypot(a[i].1 - b[j].1).powf(q);
                best = best.min(c + rec(i + 1, a, b, used, q));
                used[j] = false;
            }
        }
        best
    }
    rec(0, a, b, &mut vec![false; b.len()], q).powf(1.0 / q)
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        out.push(p.clone());
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| p[i] < p[i + 1]) else {
            return out;
        };
        let j = (i + 1..n).rev().find(|&j| p[j] > p[i]).unwrap();
        p.swap(i, j);
        p[i + 1..].reverse();
    }
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt()
}

fn combo(gens: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; gens[0].len()];
    for (g, &wi) in gens.iter().zip(w) {
        out.iter_mut().zip(g).for_each(|(o, v)| *o += wi * v);
    }
    out
}

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

/// `min ‖Σ w_i g_i‖²` over the grid `{w : w_i ∈ step·ℕ, Σ w_i = 1}`.
pub fn grid_min_norm_sq(gens: &[Vec<f64>], step: f64) -> f64 {
    let m = (1.0 / step).round() as usize;
    let k = gens.len();
    let mut best = f64::INFINITY;
    let mut counts = vec![0usize; k];
    fn rec(i: usize, left: usize, m: usize, counts: &mut Vec<usize>, gens: &[Vec<f64>], best: &mut f64) {
        if i + 1 == counts.len() {
            counts[i] = left;
            let w: Vec<f64> = counts.iter().map(|&c| c as f64 / m as f64).collect();
            *best = best.min(sq(&combo(gens, &w)));
            return;
        }
        for c in 0..=left {
            counts[i] = c;
            rec(i + 1, left - c, m, counts, gens, best);
        }
    }
    rec(0, m, m, &mut counts, gens, &mut best);
    best
}

/// Coarse-to-fine grid search: a full grid at `coarse`, then repeated local grids
/// around the incumbent with halving step until `fine` is reached.
pub fn refined_grid_min_norm_sq(gens: &[Vec<f64>], coarse: f64, fine: f64) -> f64 {
    let k = gens.len();
    let m = (1.0 / coarse).round() as usize;
    let mut best_w = vec![1.0 / k as f64; k];
    let mut best = f64::INFINITY;
    let mut counts = vec![0usize; k];
    fn rec(i: usize, left: usize, m: usize, counts: &mut Vec<usize>, gens: &[Vec<f64>], best: &mut f64, bw: &mut Vec<f64>) {
        if i + 1 == counts.len() {
            counts[i] = left;
            let w: Vec<f64> = counts.iter().map(|&c| c as f64 / m as f64).collect();
            let v = sq(&combo(gens, &w));
            if v < *best {
                *best = v;
                *bw = w;
            }
            return;
        }
        for c in 0..=left {
            counts[i] = c;
            rec(i + 1, left - c, m, counts, gens, best, bw);
        }
    }
    rec(0, m, m, &mut counts, gens, &mut best, &mut best_w);
    let mut step = coarse;
    while step > fine * (1.0 + 1e-9) {
        step = (step / 2.0).max(fine);
        // Local moves: shift `j * step` of mass between any two coordinates.
        let mut improved = true;
        while improved {
            improved = false;
            for a in 0..k {
                for b in 0..k {
                    if a == b {
                        continue;
                    }
                    for j in 1..=4 {
                        let d = j as f64 * step;
                        if best_w[a] < d - 1e-15 {
                            break;
                        }
                        let mut w = best_w.clone();
                        w[a] -= d;
                        w[b] += d;
                        let v = sq(&combo(gens, &w));
                        if v < best - 1e-15 {
                            best = v;
                            best_w = w;
                            improved = true;
                        }
                    }
                }
            }
        }
    }
    best
}

/// Exact min-norm point by enumerating supports: every affinely independent
/// subset whose affine minimizer has nonnegative weights is a candidate.
pub fn support_enumeration_min_norm_sq(gens: &[Vec<f64>]) -> f64 {
    let k = gens.len();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << k) {
        let idx: Vec<usize> = (0..k).filter(|&i| mask & (1 << i) != 0).collect();
        let s = idx.len();
        // Solve [G 1; 1' 0][w; mu] = [0; 1] by Gaussian elimination.
        let mut a = vec![vec![0.0; s + 2]; s + 1];
        for (r, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                a[r][c] = gens[i].iter().zip(&gens[j]).map(|(u, v)| u * v).sum();
            }
            a[r][s] = 1.0;
            a[s][r] = 1.0;
        }
        a[s][s + 1] = 1.0;
        let n = s + 1;
        let mut ok = true;
        for col in 0..n {
            let piv = (col..n).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs())).unwrap();
            if a[piv][col].abs() < 1e-12 {
                ok = false;
                break;
            }
            a.swap(col, piv);
            for r in 0..n {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for c in col..=n {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
        if !ok {
            continue;
        }
        let w: Vec<f64> = (0..s).map(|r| a[r][n] / a[r][r]).collect();
        if w.iter().all(|&v| v >= -1e-12) {
            let sub: Vec<Vec<f64>> = idx.iter().map(|&i| gens[i].clone()).collect();
            best = best.min(sq(&combo(&sub, &w)));
        }
    }
    best
}

/// Random `(birth, death)` points with `birth < death` in `[0, 1]`.
pub fn random_diagram<R: Rng>(rng: &mut R, max_points: usize) -> Vec<(f64, f64)> {
    let n = rng.random_range(0..=max_points);
    (0..n)
        .map(|_| {
            let a: f64 = rng.random();
            let b: f64 = rng.random();
            if a < b { (a, b) } else { (b, a) }
        })
        .filter(|p| p.0 < p.1)
        .collect()
}
