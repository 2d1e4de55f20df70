//! Budgeted kernel-space centers.
//!
//! A carried center is a weighted combination of at most `m` past points.
//! After each batch the combination grows by the newly assigned points and
//! is then re-approximated under the budget by greedy forward selection in
//! the kernel metric `(a - x)^T W (a - x)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dmeans::ClusterId;
use crate::error::{Error, Result};
use crate::kernel::KernelContext;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportPoint {
    pub coeff: f64,
    pub point: Vec<f64>,
}

/// A carried cluster whose old center lives in feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseCenter {
    pub id: ClusterId,
    pub support: Vec<SupportPoint>,
    pub weight: f64,
    pub staleness: u32,
}

impl SparseCenter {
    /// `sum_j a_j v_j`; the center itself under the linear kernel.
    pub fn input_space_center(&self, dim: usize) -> Vec<f64> {
        combine(&self.support, dim)
    }
}

pub(crate) fn combine(support: &[SupportPoint], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for s in support {
        for (o, x) in out.iter_mut().zip(&s.point) {
            *o += s.coeff * x;
        }
    }
    out
}

/// One active timestep of a cluster: its prior weight and assigned points.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryStep {
    pub gamma: f64,
    pub points: Vec<Vec<f64>>,
}

/// Exact expansion of an old center over every point it ever received.
///
/// Points of step `s` get `1/(g_s + n_s) * prod_{r > s} g_r / (g_r + n_r)`.
pub fn exact_center_coeffs(history: &[HistoryStep]) -> Result<Vec<SupportPoint>> {
    if history.is_empty() {
        return Err(Error::EmptyHistory);
    }
    let mut out = Vec::new();
    let mut tail = 1.0;
    for step in history.iter().rev() {
        let n = step.points.len() as f64;
        if n == 0.0 {
            return Err(Error::Parameter("history step without points".into()));
        }
        let coeff = tail / (step.gamma + n);
        for p in step.points.iter().rev() {
            out.push(SupportPoint { coeff, point: p.clone() });
        }
        tail *= step.gamma / (step.gamma + n);
    }
    out.reverse();
    Ok(out)
}

/// Unbudgeted center after absorbing `assigned` with prior weight `gamma`:
/// old coefficients scale by `gamma/(gamma+n)`, new points get `1/(gamma+n)`.
pub fn dense_center_update(support: &[SupportPoint], gamma: f64, assigned: &[&[f64]]) -> Vec<SupportPoint> {
    let denom = gamma + assigned.len() as f64;
    let mut out = Vec::with_capacity(support.len() + assigned.len());
    if gamma > 0.0 {
        out.extend(support.iter().map(|s| SupportPoint { coeff: s.coeff * gamma / denom, point: s.point.clone() }));
    }
    out.extend(assigned.iter().map(|p| SupportPoint { coeff: 1.0 / denom, point: p.to_vec() }));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    pub support: Vec<SupportPoint>,
    /// `sqrt((a - x)^T W (a - x))` for the returned combination.
    pub achieved_eps: f64,
    /// Candidates rejected at some step because they were numerically
    /// dependent on the chosen support or would have driven the residual
    /// below zero (possible only when `W` is indefinite).
    pub skipped: usize,
}

/// Reduces `dense` to at most `budget` support points under the kernel
/// metric of `ctx`.
pub fn sparse_reduce(dense: &[SupportPoint], budget: usize, ctx: &KernelContext) -> Reduction {
    if dense.len() <= budget {
        return Reduction { support: dense.to_vec(), achieved_eps: 0.0, skipped: 0 };
    }
    let sites: Vec<_> = dense.iter().map(|s| ctx.site(&s.point)).collect();
    let w = ctx.gram(&sites);
    sparse_reduce_with_gram(dense, budget, &w)
}

/// Greedy forward selection with exact refits, given the Gram matrix `w`
/// of the dense support points.
///
/// Each step adds the point whose inclusion most reduces the refit
/// objective; the refit is maintained through an incremental Cholesky
/// factor of `W[S, S]`.  A candidate whose Cholesky pivot falls below
/// `1e-10 * max diag(W)` is treated as lying in the span of the support
/// and is not taken.
pub fn sparse_reduce_with_gram(dense: &[SupportPoint], budget: usize, w: &DMatrix<f64>) -> Reduction {
    let p = dense.len();
    assert_eq!(w.nrows(), p, "gram size must match the dense support");
    if p <= budget {
        return Reduction { support: dense.to_vec(), achieved_eps: 0.0, skipped: 0 };
    }
    let target: Vec<f64> = dense.iter().map(|s| s.coeff).collect();
    // b = W a
    let b: Vec<f64> = (0..p).map(|i| (0..p).map(|j| w[(i, j)] * target[j]).sum()).collect();
    let scale = (0..p).map(|i| w[(i, i)].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let floor = 1e-10 * scale;
    let mut residual: f64 = target.iter().zip(&b).map(|(a, x)| a * x).sum();

    let mut selected: Vec<usize> = Vec::with_capacity(budget);
    let mut chosen = vec![false; p];
    // rows of the Cholesky factor of W[S,S]
    let mut chol: Vec<Vec<f64>> = Vec::with_capacity(budget);
    // L^-1 b_S
    let mut c: Vec<f64> = Vec::with_capacity(budget);
    // per candidate: L^-1 W[S, j]
    let mut proj: Vec<Vec<f64>> = vec![Vec::with_capacity(budget); p];
    let mut skipped = 0;

    while selected.len() < budget {
        let mut best: Option<(usize, f64, f64, f64)> = None;
        let mut rejected = 0;
        for j in 0..p {
            if chosen[j] {
                continue;
            }
            let lj = &proj[j];
            let d2 = w[(j, j)] - lj.iter().map(|x| x * x).sum::<f64>();
            if d2 < floor {
                rejected += 1;
                continue;
            }
            let r = b[j] - lj.iter().zip(&c).map(|(x, y)| x * y).sum::<f64>();
            let gain = r * r / d2;
            if gain > residual.max(0.0) + floor {
                rejected += 1;
                continue;
            }
            if best.is_none_or(|(_, g, _, _)| gain > g) {
                best = Some((j, gain, d2, r));
            }
        }
        skipped = skipped.max(rejected);
        let Some((j, gain, d2, r)) = best else { break };
        if !(gain > 0.0) {
            break;
        }
        let diag = d2.sqrt();
        let mut row = proj[j].clone();
        row.push(diag);
        c.push(r / diag);
        residual -= gain;
        chol.push(row);
        selected.push(j);
        chosen[j] = true;
        // extend every remaining candidate's projection by one entry
        let new_row = chol.last().expect("just pushed");
        for k in 0..p {
            if chosen[k] {
                continue;
            }
            let dot: f64 = new_row[..new_row.len() - 1].iter().zip(&proj[k]).map(|(x, y)| x * y).sum();
            let entry = (w[(j, k)] - dot) / diag;
            proj[k].push(entry);
        }
    }

    // back-substitute L^T x = c
    let s = selected.len();
    let mut x = vec![0.0; s];
    for i in (0..s).rev() {
        let mut acc = c[i];
        for (k, xk) in x.iter().enumerate().take(s).skip(i + 1) {
            acc -= chol[k][i] * xk;
        }
        x[i] = acc / chol[i][i];
    }
    let mut full = vec![0.0; p];
    for (i, &j) in selected.iter().enumerate() {
        full[j] = x[i];
    }
    let achieved_eps = quadratic_residual(&target, &full, w).sqrt();
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by_key(|&i| selected[i]);
    let support = order
        .into_iter()
        .filter(|&i| x[i] != 0.0)
        .map(|i| SupportPoint { coeff: x[i], point: dense[selected[i]].point.clone() })
        .collect();
    Reduction { support, achieved_eps, skipped }
}

/// `max(0, (a - x)^T W (a - x))`.
pub fn quadratic_residual(a: &[f64], x: &[f64], w: &DMatrix<f64>) -> f64 {
    let diff: Vec<f64> = a.iter().zip(x).map(|(p, q)| p - q).collect();
    let mut total = 0.0;
    for i in 0..diff.len() {
        if diff[i] == 0.0 {
            continue;
        }
        let row: f64 = (0..diff.len()).map(|j| w[(i, j)] * diff[j]).sum();
        total += diff[i] * row;
    }
    total.max(0.0)
}
