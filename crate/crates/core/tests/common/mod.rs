//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use drc::{Graph, Result, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

/// Worst relative error between backward gradients and central finite
/// differences of `f` with respect to each input.
///
/// Relative error is `|a - n| / max(1, |a|, |n|)`.
pub fn gradcheck<F>(inputs: &[Tensor], h: f64, f: F) -> f64
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let root = f(&mut g, &vars).unwrap();
    g.backward(root).unwrap();
    let analytic: Vec<Tensor> = vars
        .iter()
        .map(|&v| {
            g.grad(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(g.value(v).rows(), g.value(v).cols()))
        })
        .collect();

    let eval = |ts: &[Tensor]| {
        let mut g = Graph::new();
        let vars: Vec<Var> = ts.iter().map(|t| g.constant(t.clone())).collect();
        let root = f(&mut g, &vars).unwrap();
        g.value(root).item()
    };

    let mut worst: f64 = 0.0;
    for (i, t) in inputs.iter().enumerate() {
        for j in 0..t.len() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += h;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let a = analytic[i].data()[j];
            let rel = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            worst = worst.max(rel);
        }
    }
    worst
}

/// ACC by trying every permutation of `0..k`.
pub fn brute_force_acc(pred: &[usize], truth: &[usize], k: usize) -> f64 {
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = 0usize;
    permute(&mut perm, 0, &mut |p| {
        let hits = pred.iter().zip(truth).filter(|(&a, &b)| p[a] == b).count();
        best = best.max(hits);
    });
    best as f64 / pred.len() as f64
}

/// Minimum-cost assignment by enumeration.
pub fn brute_force_assignment(cost: &[Vec<f64>]) -> f64 {
    let mut perm: Vec<usize> = (0..cost.len()).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let c: f64 = p.iter().enumerate().map(|(r, &c)| cost[r][c]).sum();
        best = best.min(c);
    });
    best
}

fn permute(p: &mut Vec<usize>, i: usize, visit: &mut impl FnMut(&[usize])) {
    if i == p.len() {
        visit(p);
        return;
    }
    for j in i..p.len() {
        p.swap(i, j);
        permute(p, i + 1, visit);
        p.swap(i, j);
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(row: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(row, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best.0
}

fn class_means(x: &Tensor, labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; x.cols()]; k];
    let mut counts = vec![0usize; k];
    for (row, &l) in x.row_iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(row) {
            *s += v;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            s.iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    sums
}

/// Assigns each row to the nearest true-class centroid.
pub fn nearest_centroid(x: &Tensor, truth: &[usize], k: usize) -> Vec<usize> {
    let centers = class_means(x, truth, k);
    x.row_iter().map(|r| nearest(r, &centers)).collect()
}

/// Lloyd's k-means from `k` distinct random rows, `iters` iterations.
pub fn lloyd(x: &Tensor, k: usize, iters: usize, seed: u64) -> (Vec<usize>, f64) {
    let mut r = rng(seed);
    let idx = rand::seq::index::sample(&mut r, x.rows(), k);
    let mut centers: Vec<Vec<f64>> = idx.iter().map(|i| x.row(i).to_vec()).collect();
    let mut labels = vec![0; x.rows()];
    for _ in 0..iters {
        labels = x.row_iter().map(|row| nearest(row, &centers)).collect();
        let means = class_means(x, &labels, k);
        for (c, m) in centers.iter_mut().zip(means) {
            // keep an emptied center where it was
            if m.iter().any(|&v| v != 0.0) {
                *c = m;
            }
        }
    }
    labels = x.row_iter().map(|row| nearest(row, &centers)).collect();
    let inertia = x
        .row_iter()
        .zip(&labels)
        .map(|(row, &l)| sq_dist(row, &centers[l]))
        .sum();
    (labels, inertia)
}

/// Best-inertia result over `restarts` Lloyd runs.
pub fn lloyd_restarts(
    x: &Tensor,
    k: usize,
    iters: usize,
    restarts: usize,
    seed: u64,
) -> Vec<usize> {
    (0..restarts as u64)
        .map(|r| lloyd(x, k, iters, seed.wrapping_mul(1000).wrapping_add(r)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
        .0
}

/// Random simplex rows via normalized exponentials.
pub fn random_simplex(rng: &mut impl Rng, rows: usize, k: usize) -> Tensor {
    let mut data = Vec::with_capacity(rows * k);
    for _ in 0..rows {
        let e: Vec<f64> = (0..k)
            .map(|_| -rng.random::<f64>().max(1e-300).ln())
            .collect();
        let s: f64 = e.iter().sum();
        data.extend(e.iter().map(|v| v / s));
    }
    Tensor::matrix(rows, k, data).unwrap()
}
