//! Tracking accuracy, objective audits and parameter sweeps.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::DMeansConfig;
use crate::datagen::{gen_moving_gaussians, gen_moving_rings, GaussianStreamCfg, LabeledStream, RingStreamCfg};
use crate::dmeans::{advance_state_with_labels, fit_centers, objective, Batch, ClusterId, StreamState};
use crate::engine::{run_stream, Algorithm, EngineSpec};
use crate::error::{Error, Result};
use crate::kdmeans::{advance_kernel_state, kd_objective_with, GramTables, KernelState, Penalty};
use crate::kernel::KernelContext;
use crate::linalg::solve_assignment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub per_step_accuracy: Vec<f64>,
    pub overall: f64,
    /// Counted `(learned, true)` pairs of every step.
    pub matching: Vec<Vec<(u64, u64)>>,
    /// Pairs dropped because they contradicted an earlier commitment.
    pub consistency_removals: usize,
}

/// Matches learned to true clusters step by step and counts the points
/// on which they agree.
///
/// Each step uses a maximum-cardinality matching that, among those,
/// maximizes the number of shared points.  The first step at which a
/// learned id is paired with a true id commits both; later pairs that
/// contradict a commitment are discarded before counting.
///
/// Learned ids are ranked by first appearance before matching, so ties
/// between equally good matchings break the same way under any renaming
/// of the learned ids.
pub fn consistent_accuracy(pred: &[Vec<u64>], truth: &[Vec<u64>]) -> Result<AccuracyReport> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(format!("{} predicted steps for {} true steps", pred.len(), truth.len())));
    }
    let mut rank: BTreeMap<u64, u64> = BTreeMap::new();
    let mut original: Vec<u64> = Vec::new();
    let pred: Vec<Vec<u64>> = pred
        .iter()
        .map(|step| {
            step.iter()
                .map(|&l| {
                    *rank.entry(l).or_insert_with(|| {
                        original.push(l);
                        original.len() as u64 - 1
                    })
                })
                .collect()
        })
        .collect();
    let mut learned_to_true: BTreeMap<u64, u64> = BTreeMap::new();
    let mut true_to_learned: BTreeMap<u64, u64> = BTreeMap::new();
    let mut per_step = Vec::with_capacity(pred.len());
    let mut matching = Vec::with_capacity(pred.len());
    let mut removals = 0;
    let mut correct_total = 0usize;
    let mut points_total = 0usize;
    for (t, (p, q)) in pred.iter().zip(truth).enumerate() {
        if p.len() != q.len() {
            return Err(Error::LengthMismatch(format!("step {t}: {} predicted labels for {} points", p.len(), q.len())));
        }
        let pairs = step_matching(p, q)?;
        let pairs = pairs.into_iter().map(|(l, r, o)| (original[l as usize], r, o));
        let mut kept = Vec::new();
        let mut correct = 0;
        for (l, r, overlap) in pairs {
            let clash = learned_to_true.get(&l).is_some_and(|&x| x != r) || true_to_learned.get(&r).is_some_and(|&x| x != l);
            if clash {
                removals += 1;
                continue;
            }
            learned_to_true.insert(l, r);
            true_to_learned.insert(r, l);
            kept.push((l, r));
            correct += overlap;
        }
        kept.sort_unstable();
        per_step.push(if p.is_empty() { 1.0 } else { correct as f64 / p.len() as f64 });
        matching.push(kept);
        correct_total += correct;
        points_total += p.len();
    }
    let overall = if points_total == 0 { 1.0 } else { correct_total as f64 / points_total as f64 };
    Ok(AccuracyReport { per_step_accuracy: per_step, overall, matching, consistency_removals: removals })
}

/// `(learned, true, overlap)` for the pairs of one step's matching, in
/// ascending learned-id order.
fn step_matching(pred: &[u64], truth: &[u64]) -> Result<Vec<(u64, u64, usize)>> {
    let learned: Vec<u64> = pred.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let real: Vec<u64> = truth.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if learned.is_empty() {
        return Ok(Vec::new());
    }
    let li: BTreeMap<u64, usize> = learned.iter().enumerate().map(|(i, &x)| (x, i)).collect();
    let ri: BTreeMap<u64, usize> = real.iter().enumerate().map(|(i, &x)| (x, i)).collect();
    let mut overlap = DMatrix::<usize>::zeros(learned.len(), real.len());
    for (a, b) in pred.iter().zip(truth) {
        overlap[(li[a], ri[b])] += 1;
    }
    // a shared point is worth less than one extra matched pair
    let big = (pred.len() + 1) as f64;
    let weight = |o: usize| if o > 0 { -(big + o as f64) } else { 0.0 };
    let transpose = learned.len() > real.len();
    let cost = if transpose {
        DMatrix::from_fn(real.len(), learned.len(), |r, l| weight(overlap[(l, r)]))
    } else {
        DMatrix::from_fn(learned.len(), real.len(), |l, r| weight(overlap[(l, r)]))
    };
    let assignment = solve_assignment(&cost)?;
    let mut pairs: Vec<(u64, u64, usize)> = assignment
        .into_iter()
        .enumerate()
        .map(|(row, col)| if transpose { (col, row) } else { (row, col) })
        .filter(|&(l, r)| overlap[(l, r)] > 0)
        .map(|(l, r)| (learned[l], real[r], overlap[(l, r)]))
        .collect();
    pairs.sort_unstable();
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub per_step: Vec<f64>,
    pub total: f64,
    /// Revival-penalty variant the objectives were computed with.
    pub penalty: Penalty,
}

/// Recomputes every batch objective from labels alone, replaying the state
/// fold from an empty state.  Spectral outputs are priced with the softened
/// revival penalty, as the engine reports them.
pub fn cost_audit(spec: &EngineSpec, batches: &[Batch], labels: &[Vec<ClusterId>]) -> Result<AuditReport> {
    spec.validate()?;
    if batches.len() != labels.len() {
        return Err(Error::LengthMismatch(format!("{} label sets for {} batches", labels.len(), batches.len())));
    }
    let cfg = &spec.cfg;
    let penalty = if spec.algorithm == Algorithm::SdMeans { Penalty::Modified } else { Penalty::Exact };
    let mut per_step = Vec::with_capacity(batches.len());
    let Some(first) = batches.first() else {
        return Ok(AuditReport { per_step, total: 0.0, penalty });
    };
    match spec.algorithm {
        Algorithm::DMeans => {
            let mut state = StreamState::new(first.dim());
            for (b, l) in batches.iter().zip(labels) {
                let centers = fit_centers(b, l, &state, cfg)?;
                per_step.push(objective(b, l, &centers, &state, cfg)?);
                state = advance_state_with_labels(&state, l, b, cfg)?;
            }
        }
        Algorithm::KdMeans | Algorithm::SdMeans => {
            let kernel = spec.kernel.expect("validated kernel");
            let mut state = KernelState::new(first.dim());
            for (b, l) in batches.iter().zip(labels) {
                let ctx = KernelContext::new(kernel, &b.points)?;
                let gram = GramTables::build(b, &state, &ctx);
                per_step.push(kd_objective_with(l, &state, &gram, cfg, penalty)?);
                state = advance_kernel_state(&state, l, b, &ctx, cfg)?.0;
            }
        }
    }
    let total = per_step.iter().sum();
    Ok(AuditReport { per_step, total, penalty })
}

/// Which synthetic stream a sweep runs on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StreamSpec {
    Gaussians(GaussianStreamCfg),
    Rings(RingStreamCfg),
}

impl StreamSpec {
    pub fn seed(&self) -> u64 {
        match self {
            StreamSpec::Gaussians(c) => c.seed,
            StreamSpec::Rings(c) => c.seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        match self {
            StreamSpec::Gaussians(c) => StreamSpec::Gaussians(GaussianStreamCfg { seed, ..c.clone() }),
            StreamSpec::Rings(c) => StreamSpec::Rings(RingStreamCfg { seed, ..c.clone() }),
        }
    }

    pub fn generate(&self) -> Result<LabeledStream> {
        match self {
            StreamSpec::Gaussians(c) => gen_moving_gaussians(c),
            StreamSpec::Rings(c) => gen_moving_rings(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub lambda: Vec<f64>,
    pub t_q: Vec<f64>,
    pub k_tau: Vec<f64>,
}

impl SweepGrid {
    pub fn cells(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.lambda
            .iter()
            .flat_map(move |&l| self.t_q.iter().flat_map(move |&q| self.k_tau.iter().map(move |&k| (l, q, k))))
    }

    pub fn len(&self) -> usize {
        self.lambda.len() * self.t_q.len() * self.k_tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub t_q: f64,
    pub k_tau: f64,
    pub trial: usize,
    pub accuracy: f64,
    /// Wall-clock clustering time of the whole stream.
    pub seconds: f64,
}

/// Runs every grid cell on `trials` streams.  Trial `r` uses stream seed
/// `stream.seed() + r` and clustering seed `template.cfg.seed + r`; the
/// penalties of `template` are replaced by each cell's values.
pub fn sweep(template: &EngineSpec, grid: &SweepGrid, trials: usize, stream: &StreamSpec) -> Result<Vec<SweepRow>> {
    let streams: Vec<LabeledStream> = (0..trials)
        .map(|r| stream.with_seed(stream.seed().wrapping_add(r as u64)).generate())
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(grid.len() * trials);
    for (lambda, t_q, k_tau) in grid.cells() {
        let base = DMeansConfig::from_reparam(lambda, t_q, k_tau)?;
        for (trial, data) in streams.iter().enumerate() {
            let cfg = DMeansConfig {
                restarts: template.cfg.restarts,
                max_iters: template.cfg.max_iters,
                budget: template.cfg.budget,
                seed: template.cfg.seed.wrapping_add(trial as u64),
                ..base
            };
            let spec = EngineSpec::new(template.algorithm, template.kernel, cfg)?;
            let start = Instant::now();
            let steps = run_stream(&spec, &data.batches)?;
            let seconds = start.elapsed().as_secs_f64();
            let pred: Vec<Vec<u64>> = steps.into_iter().map(|s| s.result.labels).collect();
            let accuracy = consistent_accuracy(&pred, &data.truth)?.overall;
            rows.push(SweepRow { lambda, t_q, k_tau, trial, accuracy, seconds });
        }
    }
    Ok(rows)
}

pub const SWEEP_HEADER: &str = "lambda,t_q,k_tau,trial,accuracy,seconds";

pub fn write_sweep_csv<W: Write>(mut w: W, rows: &[SweepRow]) -> Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{},{}", r.lambda, r.t_q, r.k_tau, r.trial, r.accuracy, r.seconds)?;
    }
    Ok(())
}
