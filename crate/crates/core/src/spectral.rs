//! Spectral Dynamic Means.
//!
//! With the revival penalty of a reinstantiated cluster softened to
//! `n/(gamma+n) * Q * dt`, the kernelized cost of any labeling becomes
//!
//! ```text
//! tr(K_YY) + tr(Gamma K_PhiPhi) + tr(Omega) - lambda K - tr(Z^T (G - lambda I) Z)
//! ```
//!
//! where `Z` has one unit column per cluster (new, revived, or untouched
//! old) and
//!
//! ```text
//! G = [[ K_YY,                K_YPhi Gamma^1/2              ],
//!      [ Gamma^1/2 K_YPhi^T,  Gamma diag(K_PhiPhi) + Omega  ]],   Omega_kk = Q dt_k.
//! ```
//!
//! A revived cluster `k` with members `I` has the column
//! `(gamma_k + n)^-1/2 [1_I; sqrt(gamma_k) e_k]`; expanding `z^T G z` for it
//! gives the kernelized cluster cost with the softened penalty, which is why
//! `Omega_kk = Q dt_k` is the right diagonal.  Dropping every constraint but
//! `Z^T Z = I` yields the eigenvector relaxation and the lower bound of
//! [`relaxed_bound`]; the feasible labeling is recovered by rotating and
//! rounding the top eigenvectors, and old clusters are re-attached by an
//! exact minimum-cost matching.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::DMeansConfig;
use crate::dmeans::{gamma_of, Batch, BatchResult, ClusterId};
use crate::error::{Error, Result};
use crate::kdmeans::{advance_kernel_state, kd_objective_with, renumber, GramTables, KernelState, Penalty};
use crate::kernel::{KernelContext, KernelSpec};
use crate::linalg::{partial_matching, sym_eigendecomp, SymmetricEigen};
use crate::sparse::Reduction;
use crate::util::mix_seed;

/// The augmented similarity matrix of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityBlock {
    pub g: DMatrix<f64>,
    pub gamma_diag: Vec<f64>,
    pub omega_diag: Vec<f64>,
    /// `K_PhiPhi` diagonal the block was built from.
    pub kphiphi: Vec<f64>,
    pub n_data: usize,
    pub n_old: usize,
}

pub fn build_g(gram: &GramTables, state: &KernelState, cfg: &DMeansConfig) -> SimilarityBlock {
    let n = gram.n_data();
    let k = gram.n_old();
    debug_assert_eq!(k, state.centers.len());
    let gamma_diag: Vec<f64> =
        state.centers.iter().map(|c| gamma_of(c.weight, c.staleness, cfg.tau)).collect();
    let omega_diag: Vec<f64> = state.centers.iter().map(|c| cfg.q_penalty * c.staleness as f64).collect();
    let mut g = DMatrix::zeros(n + k, n + k);
    g.view_mut((0, 0), (n, n)).copy_from(&gram.kyy);
    for c in 0..k {
        let root = gamma_diag[c].sqrt();
        for i in 0..n {
            let v = gram.kyphi[(i, c)] * root;
            g[(i, n + c)] = v;
            g[(n + c, i)] = v;
        }
        g[(n + c, n + c)] = gamma_diag[c] * gram.kphiphi[c] + omega_diag[c];
    }
    SimilarityBlock { g, gamma_diag, omega_diag, kphiphi: gram.kphiphi.clone(), n_data: n, n_old: k }
}

/// Constant part of the trace form: `tr(K_YY) + tr(Gamma K_PhiPhi) + tr(Omega - lambda I)`.
fn trace_constant(block: &SimilarityBlock, lambda: f64) -> f64 {
    let n = block.n_data;
    let kyy: f64 = (0..n).map(|i| block.g[(i, i)]).sum();
    let old: f64 = (0..block.n_old)
        .map(|c| block.gamma_diag[c] * block.kphiphi[c] + block.omega_diag[c] - lambda)
        .sum();
    kyy + old
}

/// Lower bound on the softened-penalty cost of every labeling of the batch.
pub fn relaxed_bound(block: &SimilarityBlock, lambda: f64) -> Result<f64> {
    let eig = sym_eigendecomp(&block.g)?;
    Ok(relaxed_bound_from(block, &eig.values, lambda))
}

/// [`relaxed_bound`] given the descending eigenvalues of `block.g`.
pub fn relaxed_bound_from(block: &SimilarityBlock, eigvals: &[f64], lambda: f64) -> f64 {
    let gain: f64 = eigvals.iter().filter(|&&s| s > lambda).map(|s| s - lambda).sum();
    let gain = if gain > 0.0 { gain } else { eigvals.first().map_or(0.0, |s| s - lambda) };
    trace_constant(block, lambda) - gain
}

/// Eigenvectors with eigenvalue above `lambda`, or the top one if none.
pub fn select_v(eig: &SymmetricEigen, lambda: f64) -> DMatrix<f64> {
    let count = eig.values.iter().take_while(|&&s| s > lambda).count().max(1).min(eig.values.len());
    eig.vectors.columns(0, count).into_owned()
}

/// Row-normalized data rows of `v_star` (the last `n_old` rows are dropped).
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedRows {
    pub v_bar: DMatrix<f64>,
    /// Rows whose norm vanished; each was replaced by the indicator of its
    /// largest-magnitude entry.
    pub flagged: Vec<usize>,
}

pub fn normalize_rows(v_star: &DMatrix<f64>, n_data: usize) -> NormalizedRows {
    assert!(v_star.nrows() >= n_data, "v_star has fewer rows than data points");
    let mut v_bar = v_star.rows(0, n_data).into_owned();
    let mut flagged = Vec::new();
    for i in 0..n_data {
        let norm = v_bar.row(i).norm();
        if norm < 1e-12 {
            let mut arg = 0;
            for j in 1..v_bar.ncols() {
                if v_bar[(i, j)].abs() > v_bar[(i, arg)].abs() {
                    arg = j;
                }
            }
            v_bar.row_mut(i).fill(0.0);
            v_bar[(i, arg)] = 1.0;
            flagged.push(i);
        } else {
            v_bar.row_mut(i).unscale_mut(norm);
        }
    }
    NormalizedRows { v_bar, flagged }
}

/// Initial rotation from the most mutually orthogonal rows of `v_bar`.
///
/// The first row is drawn with `rng`; each further row minimizes its
/// largest absolute cosine to the rows already taken.  The taken rows form
/// the columns of `U`, then `U` is replaced by the orthogonal factor of its
/// QR decomposition.
pub fn init_u<R: Rng + ?Sized>(v_bar: &DMatrix<f64>, rng: &mut R) -> DMatrix<f64> {
    let (n, a) = v_bar.shape();
    assert!(a <= n, "more columns than rows");
    let mut picked = Vec::with_capacity(a);
    picked.push(rng.random_range(0..n));
    // largest |cos| to any picked row; rows of v_bar are unit length
    let mut worst = vec![0.0f64; n];
    while picked.len() < a {
        let last = v_bar.row(*picked.last().expect("non-empty"));
        for (i, w) in worst.iter_mut().enumerate() {
            *w = w.max(v_bar.row(i).dot(&last).abs());
        }
        let mut best: Option<usize> = None;
        for i in 0..n {
            if picked.contains(&i) {
                continue;
            }
            if best.is_none_or(|b| worst[i] < worst[b]) {
                best = Some(i);
            }
        }
        picked.push(best.expect("a <= n leaves a candidate"));
    }
    let mut u = DMatrix::zeros(a, a);
    for (c, &i) in picked.iter().enumerate() {
        u.set_column(c, &v_bar.row(i).transpose());
    }
    orthonormalize(u)
}

/// Orthogonal factor of the QR decomposition, signed so `diag(R) >= 0`.
fn orthonormalize(u: DMatrix<f64>) -> DMatrix<f64> {
    let qr = u.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Column of the row-wise maximum of `v_bar * u`, lowest column on ties.
pub fn round_x(v_bar: &DMatrix<f64>, u: &DMatrix<f64>) -> Vec<usize> {
    let z = v_bar * u;
    (0..z.nrows())
        .map(|i| {
            let mut arg = 0;
            for j in 1..z.ncols() {
                if z[(i, j)] > z[(i, arg)] {
                    arg = j;
                }
            }
            arg
        })
        .collect()
}

/// Indicator matrix of `labels` with `cols` columns.
pub fn indicator(labels: &[usize], cols: usize) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(labels.len(), cols);
    for (i, &l) in labels.iter().enumerate() {
        x[(i, l)] = 1.0;
    }
    x
}

/// Orthogonal `U` minimizing `||X - v_bar U||_F` for the indicator `X`.
pub fn refine_u(labels: &[usize], v_bar: &DMatrix<f64>) -> DMatrix<f64> {
    let a = v_bar.ncols();
    // X^T v_bar, accumulated row by row
    let mut m = DMatrix::zeros(a, a);
    for (i, &l) in labels.iter().enumerate() {
        let mut row = m.row_mut(l);
        row += v_bar.row(i);
    }
    let svd = m.svd(true, true);
    let r = svd.u.expect("requested u");
    let wt = svd.v_t.expect("requested v_t");
    wt.transpose() * r.transpose()
}

/// `||X - v_bar U||_F^2`.
pub fn frobenius_gap(labels: &[usize], v_bar: &DMatrix<f64>, u: &DMatrix<f64>) -> f64 {
    let z = v_bar * u;
    let mut total = 0.0;
    for i in 0..z.nrows() {
        for j in 0..z.ncols() {
            let x = if labels[i] == j { 1.0 } else { 0.0 };
            total += (x - z[(i, j)]).powi(2);
        }
    }
    total
}

pub const MAX_ROUNDING_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleSolution {
    /// Temporary cluster of every point, `0..n_clusters`, no empty cluster.
    pub labels: Vec<usize>,
    pub n_clusters: usize,
    /// `||X - v_bar U||_F^2` after every rounding step.
    pub frobenius_trace: Vec<f64>,
    pub u: DMatrix<f64>,
}

/// Alternates rounding and Procrustes refinement from `init_u` until the
/// Frobenius gap stops decreasing; returns the best partition seen.
pub fn solve_feasible(v_bar: &DMatrix<f64>, seed: u64) -> FeasibleSolution {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = init_u(v_bar, &mut rng);
    let mut trace = Vec::new();
    let mut best: Option<(Vec<usize>, DMatrix<f64>, f64)> = None;
    for _ in 0..MAX_ROUNDING_ITERS {
        let labels = round_x(v_bar, &u);
        let gap = frobenius_gap(&labels, v_bar, &u);
        trace.push(gap);
        if let Some((_, _, b)) = &best {
            if gap >= *b {
                break;
            }
        }
        best = Some((labels.clone(), u.clone(), gap));
        u = refine_u(&labels, v_bar);
    }
    let (labels, u, _) = best.expect("at least one rounding step");
    let (labels, n_clusters) = compact(&labels, v_bar.ncols());
    FeasibleSolution { labels, n_clusters, frobenius_trace: trace, u }
}

/// Drops empty columns, keeping the column order.
fn compact(labels: &[usize], cols: usize) -> (Vec<usize>, usize) {
    let mut used = vec![false; cols];
    for &l in labels {
        used[l] = true;
    }
    let mut map = vec![usize::MAX; cols];
    let mut next = 0;
    for (j, u) in used.iter().enumerate() {
        if *u {
            map[j] = next;
            next += 1;
        }
    }
    (labels.iter().map(|&l| map[l]).collect(), next)
}

/// Costs of attaching each temporary cluster to each old cluster, relative
/// to leaving it new.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchProblem {
    pub costs: DMatrix<f64>,
    pub zeta: DMatrix<f64>,
    pub sizes: Vec<usize>,
}

/// `zeta_lk = n_l K_PhiPhi_kk - sum_{i in I_l} (2 K_YPhi_ik - (1/n_l) sum_{j in I_l} K_YY_ij)`
/// and `cost_lk = Q dt_k - lambda + gamma_k zeta_lk / (gamma_k + n_l)`.
pub fn build_match_costs(
    labels: &[usize],
    n_clusters: usize,
    state: &KernelState,
    gram: &GramTables,
    cfg: &DMeansConfig,
) -> MatchProblem {
    let k = gram.n_old();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let mut zeta = DMatrix::zeros(n_clusters, k);
    let mut costs = DMatrix::zeros(n_clusters, k);
    for (l, idx) in members.iter().enumerate() {
        let n = idx.len() as f64;
        let s: f64 = idx.iter().flat_map(|&i| idx.iter().map(move |&j| (i, j))).map(|(i, j)| gram.kyy[(i, j)]).sum();
        for (c, center) in state.centers.iter().enumerate() {
            let cross: f64 = idx.iter().map(|&i| gram.kyphi[(i, c)]).sum();
            let z = n * gram.kphiphi[c] - 2.0 * cross + s / n;
            let gamma = gamma_of(center.weight, center.staleness, cfg.tau);
            zeta[(l, c)] = z;
            costs[(l, c)] = cfg.q_penalty * center.staleness as f64 - cfg.lambda + gamma * z / (gamma + n);
        }
    }
    MatchProblem { costs, zeta, sizes }
}

/// Exact minimum-cost matching; `None` means the temporary cluster is new.
pub fn solve_matching(problem: &MatchProblem) -> Result<Vec<Option<usize>>> {
    if problem.costs.ncols() == 0 {
        return Ok(vec![None; problem.costs.nrows()]);
    }
    partial_matching(&problem.costs)
}

/// Per-batch diagnostics of the spectral pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    /// Number of eigenvectors kept.
    pub n_selected: usize,
    pub relaxed_bound: f64,
    /// Cost of the returned labeling with the softened revival penalty;
    /// this is the value reported as the batch objective.
    pub modified_objective: f64,
    /// Cost of the returned labeling with the exact revival penalty.
    pub exact_objective: f64,
    pub flagged_rows: Vec<usize>,
    pub frobenius_trace: Vec<f64>,
    pub restart: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBatchOutput {
    pub result: BatchResult,
    pub state: KernelState,
    pub reductions: BTreeMap<ClusterId, Reduction>,
    pub report: SpectralReport,
}

struct Candidate {
    labels: Vec<ClusterId>,
    exact: f64,
    modified: f64,
    trace: Vec<f64>,
    restart: usize,
}

/// SD-Means on one batch.
///
/// Restarts re-seed only the initial rotation; the labeling with the lowest
/// exact kernelized cost wins (earliest on ties).
pub fn sdmeans_batch(
    batch: &Batch,
    state: &KernelState,
    kernel: &KernelSpec,
    cfg: &DMeansConfig,
) -> Result<SpectralBatchOutput> {
    batch.validate()?;
    cfg.validate()?;
    if batch.dim() != state.dim {
        return Err(Error::Dimension { expected: state.dim, got: batch.dim() });
    }
    let ctx = KernelContext::new(*kernel, &batch.points)?;
    let gram = GramTables::build(batch, state, &ctx);
    let block = build_g(&gram, state, cfg);
    let eig = sym_eigendecomp(&block.g)?;
    let bound = relaxed_bound_from(&block, &eig.values, cfg.lambda);
    let mut v_star = select_v(&eig, cfg.lambda);
    if v_star.ncols() > block.n_data {
        v_star = v_star.columns(0, block.n_data).into_owned();
    }
    let rows = normalize_rows(&v_star, block.n_data);

    let mut best: Option<Candidate> = None;
    for restart in 0..cfg.restarts.max(1) {
        let feasible = solve_feasible(&rows.v_bar, mix_seed(cfg.seed, batch.t, restart as u64));
        let problem = build_match_costs(&feasible.labels, feasible.n_clusters, state, &gram, cfg);
        let matching = solve_matching(&problem)?;
        // provisional ids for unmatched clusters sit above every carried id
        let base = state.next_id.max(state.centers.iter().map(|c| c.id + 1).max().unwrap_or(0));
        let ids: Vec<ClusterId> = matching
            .iter()
            .enumerate()
            .map(|(l, m)| match m {
                Some(c) => state.centers[*c].id,
                None => base + l as u64,
            })
            .collect();
        let provisional: Vec<ClusterId> = feasible.labels.iter().map(|&l| ids[l]).collect();
        let labels = renumber(&provisional, state);
        let exact = kd_objective_with(&labels, state, &gram, cfg, Penalty::Exact)?;
        let modified = kd_objective_with(&labels, state, &gram, cfg, Penalty::Modified)?;
        if best.as_ref().is_none_or(|b| exact < b.exact) {
            best = Some(Candidate { labels, exact, modified, trace: feasible.frobenius_trace, restart });
        }
    }
    let best = best.expect("at least one restart");
    let (next_state, centers, reductions) = advance_kernel_state(state, &best.labels, batch, &ctx, cfg)?;
    let active_set: BTreeSet<ClusterId> = best.labels.iter().copied().collect();
    let report = SpectralReport {
        n_selected: v_star.ncols(),
        relaxed_bound: bound,
        modified_objective: best.modified,
        exact_objective: best.exact,
        flagged_rows: rows.flagged,
        frobenius_trace: best.trace,
        restart: best.restart,
    };
    Ok(SpectralBatchOutput {
        result: BatchResult {
            labels: best.labels,
            centers,
            objective: best.modified,
            active_set,
            iterations: report.frobenius_trace.len(),
            converged: report.frobenius_trace.len() < MAX_ROUNDING_ITERS,
            objective_trace: vec![best.modified],
        },
        state: next_state,
        reductions,
        report,
    })
}
