//! Independent reference implementations and instance generators shared by
//! the integration test targets.
#![allow(dead_code)]

use std::collections::BTreeMap;

use dynoclust::{Batch, DMeansConfig, OldCluster, StreamState};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Points drawn around a handful of random centers in the unit cube.
pub fn blob_points(rng: &mut ChaCha8Rng, n: usize, dim: usize, n_blobs: usize, spread: f64) -> Vec<Vec<f64>> {
    let centers: Vec<Vec<f64>> = (0..n_blobs).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect();
    (0..n)
        .map(|_| {
            let c = &centers[rng.random_range(0..n_blobs)];
            c.iter().map(|x| x + spread * (rng.random::<f64>() - 0.5)).collect()
        })
        .collect()
}

pub fn random_batch(rng: &mut ChaCha8Rng, t: u64, n: usize, dim: usize) -> Batch {
    let blobs = rng.random_range(1..=4);
    Batch::new(t, blob_points(rng, n, dim, blobs, 0.3)).unwrap()
}

/// A carried state with `k` clusters at random positions.
pub fn random_state(rng: &mut ChaCha8Rng, dim: usize, k: usize) -> StreamState {
    let mut ids: Vec<u64> = (0..k as u64 * 2).collect();
    for i in (1..ids.len()).rev() {
        ids.swap(i, rng.random_range(0..=i));
    }
    let mut old: Vec<OldCluster> = ids[..k]
        .iter()
        .map(|&id| OldCluster {
            id,
            phi: (0..dim).map(|_| rng.random::<f64>()).collect(),
            weight: rng.random_range(0.5..20.0),
            staleness: rng.random_range(1..4),
        })
        .collect();
    old.sort_by_key(|c| c.id);
    StreamState { dim, old_clusters: old, next_id: k as u64 * 2 }
}

pub fn random_config(rng: &mut ChaCha8Rng) -> DMeansConfig {
    let lambda = rng.random_range(0.02..0.5);
    let q = lambda * rng.random_range(0.05..0.5);
    let tau = rng.random_range(0.1..5.0);
    DMeansConfig::new(lambda, q, tau).unwrap()
}

/// DP-Means in natural point order.
///
/// Each point joins the nearest cluster (earliest created on ties) unless
/// its squared distance exceeds `lambda`, in which case it opens a cluster
/// at itself.  A cluster that loses its last point disappears at once.
/// Means are refit after every pass; passes stop once the cost repeats.
/// Clusters are numbered by their first point in index order.
pub fn dp_means(points: &[Vec<f64>], lambda: f64, max_iters: usize) -> (Vec<u64>, BTreeMap<u64, Vec<f64>>, f64) {
    struct Cl {
        mean: Vec<f64>,
        size: usize,
    }
    let n = points.len();
    let mut clusters: Vec<Option<Cl>> = Vec::new();
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut prev = f64::INFINITY;
    let mut cost = f64::INFINITY;
    for _ in 0..max_iters {
        for i in 0..n {
            let mut best: Option<(usize, f64)> = None;
            for (c, cl) in clusters.iter().enumerate() {
                if let Some(cl) = cl {
                    let d = sq(&points[i], &cl.mean);
                    if best.is_none_or(|(_, bd)| d < bd) {
                        best = Some((c, d));
                    }
                }
            }
            let target = match best {
                Some((c, d)) if d <= lambda => Some(c),
                _ => None,
            };
            if target.is_some() && target == label[i] {
                continue;
            }
            if let Some(cur) = label[i] {
                let cl = clusters[cur].as_mut().unwrap();
                cl.size -= 1;
                if cl.size == 0 {
                    clusters[cur] = None;
                }
            }
            let c = match target {
                Some(c) => {
                    clusters[c].as_mut().unwrap().size += 1;
                    c
                }
                None => {
                    clusters.push(Some(Cl { mean: points[i].clone(), size: 1 }));
                    clusters.len() - 1
                }
            };
            label[i] = Some(c);
        }
        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; clusters.len()];
        let mut counts = vec![0usize; clusters.len()];
        for i in 0..n {
            let c = label[i].unwrap();
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(&points[i]) {
                *s += x;
            }
        }
        for (c, cl) in clusters.iter_mut().enumerate() {
            if let Some(cl) = cl {
                cl.mean = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let mut sse = vec![0.0; clusters.len()];
        for i in 0..n {
            let c = label[i].unwrap();
            sse[c] += sq(&points[i], &clusters[c].as_ref().unwrap().mean);
        }
        cost = 0.0;
        for (c, cl) in clusters.iter().enumerate() {
            if cl.is_some() {
                cost += lambda + sse[c];
            }
        }
        if prev.is_finite() && (cost - prev).abs() <= 1e-12 * cost.abs().max(prev.abs()) {
            break;
        }
        prev = cost;
    }
    let mut ids: BTreeMap<usize, u64> = BTreeMap::new();
    let labels: Vec<u64> = label
        .iter()
        .map(|l| {
            let next = ids.len() as u64;
            *ids.entry(l.unwrap()).or_insert(next)
        })
        .collect();
    let centers = ids.iter().map(|(c, id)| (*id, clusters[*c].as_ref().unwrap().mean.clone())).collect();
    (labels, centers, cost)
}

/// Minimum-cost partial matching by enumeration: every row takes a distinct
/// column or stays unmatched at zero cost.
pub fn brute_force_matching(cost: &DMatrix<f64>) -> (Vec<Option<usize>>, f64) {
    fn go(
        row: usize,
        cost: &DMatrix<f64>,
        used: &mut Vec<bool>,
        cur: &mut Vec<Option<usize>>,
        acc: f64,
        best: &mut (Vec<Option<usize>>, f64),
    ) {
        if row == cost.nrows() {
            if acc < best.1 {
                *best = (cur.clone(), acc);
            }
            return;
        }
        cur.push(None);
        go(row + 1, cost, used, cur, acc, best);
        cur.pop();
        for c in 0..cost.ncols() {
            if !used[c] {
                used[c] = true;
                cur.push(Some(c));
                go(row + 1, cost, used, cur, acc + cost[(row, c)], best);
                cur.pop();
                used[c] = false;
            }
        }
    }
    let mut best = (Vec::new(), f64::INFINITY);
    go(0, cost, &mut vec![false; cost.ncols()], &mut Vec::new(), 0.0, &mut best);
    best
}

pub fn matching_cost(cost: &DMatrix<f64>, m: &[Option<usize>]) -> f64 {
    m.iter().enumerate().filter_map(|(r, c)| c.map(|c| cost[(r, c)])).sum()
}

/// Minimum spanning tree weight by enumerating every `(n-1)`-edge subset
/// of the complete graph and keeping the connected ones.
pub fn brute_force_mst_weight(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    let edges: Vec<(usize, usize, f64)> =
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| (i, j, sq(&points[i], &points[j]).sqrt())).collect();
    let mut best = f64::INFINITY;
    let e = edges.len();
    for mask in 0u32..(1 << e) {
        if mask.count_ones() as usize != n - 1 {
            continue;
        }
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            if p[x] != x {
                let r = find(p, p[x]);
                p[x] = r;
            }
            p[x]
        }
        let mut w = 0.0;
        let mut ok = true;
        for (k, &(i, j, d)) in edges.iter().enumerate() {
            if mask & (1 << k) != 0 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a == b {
                    ok = false;
                    break;
                }
                parent[a] = b;
                w += d;
            }
        }
        if ok {
            best = best.min(w);
        }
    }
    best
}

/// `min_x (a - x)^T W (a - x)` with `x` supported on `subset`, via the
/// normal equations `W[S,S] x_S = (W a)_S`.
pub fn restricted_residual(a: &[f64], w: &DMatrix<f64>, subset: &[usize]) -> f64 {
    let p = a.len();
    let av = nalgebra::DVector::from_column_slice(a);
    let b = w * &av;
    let s = subset.len();
    let ws = DMatrix::from_fn(s, s, |i, j| w[(subset[i], subset[j])]);
    let bs = nalgebra::DVector::from_fn(s, |i, _| b[subset[i]]);
    let xs = ws.lu().solve(&bs).expect("nonsingular restricted system");
    let mut x = nalgebra::DVector::zeros(p);
    for (i, &j) in subset.iter().enumerate() {
        x[j] = xs[i];
    }
    let r = &av - &x;
    (r.transpose() * w * &r)[(0, 0)].max(0.0)
}

pub fn subsets(p: usize, m: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, p: usize, m: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == m {
            out.push(cur.clone());
            return;
        }
        for j in start..p {
            cur.push(j);
            go(j + 1, p, m, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, p, m, &mut Vec::new(), &mut out);
    out
}

/// Random symmetric matrix with entries in `[-1, 1]`.
pub fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = rng.random_range(-1.0..1.0);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}
