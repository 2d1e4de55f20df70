//! Kernelized D-Means over budgeted sparse centers.
//!
//! Every quantity is expressed through kernel evaluations: `K_YY` between
//! batch points, `K_YPhi` between points and carried centers, and the center
//! self-similarities `K_PhiPhi`.  The label update is an exact coordinate
//! descent on the kernelized cost, with per-cluster running sums so that
//! each move is priced in constant time.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::DMeansConfig;
use crate::dmeans::{gamma_of, Batch, BatchResult, ClusterId, StreamState, Target};
use crate::error::{Error, Result};
use crate::kernel::{KernelContext, KernelSpec};
use crate::sparse::{dense_center_update, sparse_reduce, Reduction, SparseCenter, SupportPoint};
use crate::util::{mix_seed, objective_settled};

/// Carried clusters of a kernelized stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelState {
    pub dim: usize,
    pub centers: Vec<SparseCenter>,
    pub next_id: ClusterId,
}

impl KernelState {
    pub fn new(dim: usize) -> Self {
        KernelState { dim, centers: Vec::new(), next_id: 0 }
    }

    /// Single-point supports reproducing each center exactly under the
    /// linear kernel.
    pub fn from_linear(state: &StreamState) -> Self {
        let centers = state
            .old_clusters
            .iter()
            .map(|c| SparseCenter {
                id: c.id,
                support: vec![SupportPoint { coeff: 1.0, point: c.phi.clone() }],
                weight: c.weight,
                staleness: c.staleness,
            })
            .collect();
        KernelState { dim: state.dim, centers, next_id: state.next_id }
    }

    pub fn get(&self, id: ClusterId) -> Option<&SparseCenter> {
        self.centers.iter().find(|c| c.id == id)
    }

    pub(crate) fn position(&self, id: ClusterId) -> Option<usize> {
        self.centers.iter().position(|c| c.id == id)
    }
}

/// Kernel evaluations needed to price any labeling of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct GramTables {
    pub kyy: DMatrix<f64>,
    /// `N x K`, column `k` against the `k`-th carried center.
    pub kyphi: DMatrix<f64>,
    pub kphiphi: Vec<f64>,
    /// Number of negative `K_PhiPhi` entries that were clamped to zero.
    pub clamped: usize,
}

impl GramTables {
    pub fn build(batch: &Batch, state: &KernelState, ctx: &KernelContext) -> Self {
        let sites: Vec<_> = batch.points.iter().enumerate().map(|(i, p)| ctx.batch_site(i, p)).collect();
        let kyy = ctx.gram(&sites);
        let n = sites.len();
        let k = state.centers.len();
        let mut kyphi = DMatrix::zeros(n, k);
        let mut kphiphi = Vec::with_capacity(k);
        let mut clamped = 0;
        for (c, center) in state.centers.iter().enumerate() {
            let support: Vec<_> = center.support.iter().map(|s| ctx.site(&s.point)).collect();
            for (i, site) in sites.iter().enumerate() {
                kyphi[(i, c)] = center
                    .support
                    .iter()
                    .zip(&support)
                    .map(|(s, v)| s.coeff * ctx.eval(site, v))
                    .sum();
            }
            let w = ctx.gram(&support);
            let mut self_sim = 0.0;
            for (a, sa) in center.support.iter().enumerate() {
                for (b, sb) in center.support.iter().enumerate() {
                    self_sim += sa.coeff * sb.coeff * w[(a, b)];
                }
            }
            if self_sim < 0.0 {
                if self_sim < -1e-10 {
                    warn!("cluster {}: negative center self-similarity {self_sim:e} clamped to 0", center.id);
                    clamped += 1;
                }
                self_sim = 0.0;
            }
            kphiphi.push(self_sim);
        }
        GramTables { kyy, kyphi, kphiphi, clamped }
    }

    pub fn n_data(&self) -> usize {
        self.kyy.nrows()
    }

    pub fn n_old(&self) -> usize {
        self.kphiphi.len()
    }
}

/// How the revival penalty of a reinstantiated cluster is charged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    /// `Q * dt`.
    Exact,
    /// `n/(gamma+n) * Q * dt`, the surrogate the spectral relaxation bounds.
    Modified,
}

/// The kernelized cost of a labeling.
pub fn kd_objective(labels: &[ClusterId], state: &KernelState, gram: &GramTables, cfg: &DMeansConfig) -> Result<f64> {
    kd_objective_with(labels, state, gram, cfg, Penalty::Exact)
}

pub fn kd_objective_with(
    labels: &[ClusterId],
    state: &KernelState,
    gram: &GramTables,
    cfg: &DMeansConfig,
    penalty: Penalty,
) -> Result<f64> {
    let n = gram.n_data();
    if labels.len() != n {
        return Err(Error::LengthMismatch(format!("{} labels for {n} points", labels.len())));
    }
    let mut groups: BTreeMap<ClusterId, Vec<usize>> = BTreeMap::new();
    for (i, id) in labels.iter().enumerate() {
        groups.entry(*id).or_default().push(i);
    }
    let mut total: f64 = (0..n).map(|i| gram.kyy[(i, i)]).sum();
    for (id, members) in &groups {
        let s: f64 = members.iter().flat_map(|&i| members.iter().map(move |&j| (i, j))).map(|(i, j)| gram.kyy[(i, j)]).sum();
        let m = members.len() as f64;
        total += match state.position(*id) {
            Some(k) => {
                let c = &state.centers[k];
                let gamma = gamma_of(c.weight, c.staleness, cfg.tau);
                let sum_kyphi: f64 = members.iter().map(|&i| gram.kyphi[(i, k)]).sum();
                let q = cfg.q_penalty * c.staleness as f64;
                let pen = match penalty {
                    Penalty::Exact => q,
                    Penalty::Modified => m / (gamma + m) * q,
                };
                pen + (gamma * m * gram.kphiphi[k] - 2.0 * gamma * sum_kyphi - s) / (gamma + m)
            }
            None => cfg.lambda - s / m,
        };
    }
    Ok(total)
}

#[derive(Debug, Clone)]
struct Slot {
    id: ClusterId,
    old: Option<usize>,
    gamma: f64,
    q_dt: f64,
    n: usize,
    sum_kyphi: f64,
    s: f64,
    /// `r[i] = sum_{j in cluster} K_YY[i, j]`
    r: Vec<f64>,
}

/// Running per-cluster sums for the kernelized label update.
///
/// Slots for carried clusters always exist (possibly empty); slots for new
/// clusters are created on demand under provisional ids above `next_id`.
#[derive(Debug, Clone)]
pub struct KdStats<'a> {
    gram: &'a GramTables,
    slots: Vec<Option<Slot>>,
    by_id: BTreeMap<ClusterId, usize>,
    labels: Vec<Option<usize>>,
    next_provisional: ClusterId,
}

impl<'a> KdStats<'a> {
    pub fn new(gram: &'a GramTables, state: &KernelState, cfg: &DMeansConfig) -> Self {
        let n = gram.n_data();
        let mut slots = Vec::with_capacity(state.centers.len());
        let mut by_id = BTreeMap::new();
        for (k, c) in state.centers.iter().enumerate() {
            by_id.insert(c.id, slots.len());
            slots.push(Some(Slot {
                id: c.id,
                old: Some(k),
                gamma: gamma_of(c.weight, c.staleness, cfg.tau),
                q_dt: cfg.q_penalty * c.staleness as f64,
                n: 0,
                sum_kyphi: 0.0,
                s: 0.0,
                r: vec![0.0; n],
            }));
        }
        let next_provisional = state.next_id.max(state.centers.iter().map(|c| c.id + 1).max().unwrap_or(0));
        KdStats { gram, slots, by_id, labels: vec![None; n], next_provisional }
    }

    /// Current (possibly provisional) id of point `i`, if assigned.
    pub fn label(&self, i: usize) -> Option<ClusterId> {
        self.labels[i].map(|s| self.slots[s].as_ref().expect("labelled slot is live").id)
    }

    pub fn is_assigned(&self, i: usize) -> bool {
        self.labels[i].is_some()
    }

    /// Number of members of cluster `id`.
    pub fn count(&self, id: ClusterId) -> usize {
        self.by_id.get(&id).and_then(|&s| self.slots[s].as_ref()).map_or(0, |s| s.n)
    }

    /// Removes point `i` from its cluster.  A new cluster left empty is
    /// destroyed; an emptied carried cluster becomes revivable again.
    pub fn remove(&mut self, i: usize) {
        let Some(si) = self.labels[i].take() else { return };
        let kyy = &self.gram.kyy;
        let slot = self.slots[si].as_mut().expect("live slot");
        slot.n -= 1;
        if slot.n == 0 {
            if slot.old.is_some() {
                slot.sum_kyphi = 0.0;
                slot.s = 0.0;
                slot.r.iter_mut().for_each(|x| *x = 0.0);
            } else {
                self.by_id.remove(&slot.id);
                self.slots[si] = None;
            }
            return;
        }
        for (j, rj) in slot.r.iter_mut().enumerate() {
            *rj -= kyy[(j, i)];
        }
        slot.s -= 2.0 * slot.r[i] + kyy[(i, i)];
        if let Some(k) = slot.old {
            slot.sum_kyphi -= self.gram.kyphi[(i, k)];
        }
    }

    /// Adds unassigned point `i` to `target`.  Returns the id it joined.
    pub fn insert(&mut self, i: usize, target: Target) -> ClusterId {
        debug_assert!(self.labels[i].is_none(), "point must be deassigned first");
        let si = match target {
            Target::Active(id) | Target::Revive(id) => *self.by_id.get(&id).expect("known cluster"),
            Target::New => {
                let id = self.next_provisional;
                self.next_provisional += 1;
                self.by_id.insert(id, self.slots.len());
                self.slots.push(Some(Slot {
                    id,
                    old: None,
                    gamma: 0.0,
                    q_dt: 0.0,
                    n: 0,
                    sum_kyphi: 0.0,
                    s: 0.0,
                    r: vec![0.0; self.gram.n_data()],
                }));
                self.slots.len() - 1
            }
        };
        let kyy = &self.gram.kyy;
        let slot = self.slots[si].as_mut().expect("live slot");
        slot.s += 2.0 * slot.r[i] + kyy[(i, i)];
        for (j, rj) in slot.r.iter_mut().enumerate() {
            *rj += kyy[(j, i)];
        }
        if let Some(k) = slot.old {
            slot.sum_kyphi += self.gram.kyphi[(i, k)];
        }
        slot.n += 1;
        self.labels[i] = Some(si);
        slot.id
    }

    fn live(&self) -> impl Iterator<Item = &Slot> {
        self.slots.iter().flatten()
    }
}

/// Minimum marginal-cost label for unassigned point `i`.
///
/// Equal costs prefer active over revived over new, then the lowest id.
pub fn kd_assign(i: usize, stats: &KdStats<'_>, cfg: &DMeansConfig) -> (Target, f64) {
    debug_assert!(!stats.is_assigned(i));
    let g = stats.gram;
    let kii = g.kyy[(i, i)];
    let mut best_active: Option<(f64, ClusterId)> = None;
    let mut best_old: Option<(f64, ClusterId)> = None;
    for slot in stats.live() {
        let kyphi = slot.old.map_or(0.0, |k| g.kyphi[(i, k)]);
        let kphiphi = slot.old.map_or(0.0, |k| g.kphiphi[k]);
        let gamma = slot.gamma;
        if slot.n > 0 {
            let m = gamma + slot.n as f64;
            let cost = (m * kii - 2.0 * (gamma * kyphi + slot.r[i])) / (m + 1.0)
                + (gamma * gamma * kphiphi + 2.0 * gamma * slot.sum_kyphi + slot.s) / (m * (m + 1.0));
            if best_active.is_none_or(|(c, id)| cost < c || (cost == c && slot.id < id)) {
                best_active = Some((cost, slot.id));
            }
        } else {
            let cost = slot.q_dt + gamma / (gamma + 1.0) * (kphiphi - 2.0 * kyphi + kii);
            if best_old.is_none_or(|(c, id)| cost < c || (cost == c && slot.id < id)) {
                best_old = Some((cost, slot.id));
            }
        }
    }
    let mut best = best_active.map(|(c, id)| (Target::Active(id), c));
    if let Some((c, id)) = best_old {
        if best.is_none_or(|(_, b)| c < b) {
            best = Some((Target::Revive(id), c));
        }
    }
    match best {
        Some((target, cost)) if cost <= cfg.lambda => (target, cost),
        _ => (Target::New, cfg.lambda),
    }
}

/// Result of a kernelized batch: labels and costs plus the folded state.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBatchOutput {
    pub result: BatchResult,
    pub state: KernelState,
    /// Budget reduction outcome of every cluster active in this batch.
    pub reductions: BTreeMap<ClusterId, Reduction>,
}

struct Run {
    labels: Vec<ClusterId>,
    objective: f64,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// KD-Means on one batch.
///
/// The first labeling pass is nearest-first: among unlabeled points the one
/// with the cheapest assignment is labeled next.  Coordinate sweeps follow
/// until the cost settles.
pub fn kd_cluster_batch(
    batch: &Batch,
    state: &KernelState,
    kernel: &KernelSpec,
    cfg: &DMeansConfig,
) -> Result<KernelBatchOutput> {
    batch.validate()?;
    cfg.validate()?;
    if batch.dim() != state.dim {
        return Err(Error::Dimension { expected: state.dim, got: batch.dim() });
    }
    let ctx = KernelContext::new(*kernel, &batch.points)?;
    let gram = GramTables::build(batch, state, &ctx);

    let mut best: Option<Run> = None;
    for restart in 0..cfg.restarts.max(1) {
        let mut order: Vec<usize> = (0..batch.len()).collect();
        if restart > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, batch.t, restart as u64));
            order.shuffle(&mut rng);
        }
        let run = descend(&gram, state, cfg, &order)?;
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    let run = best.expect("at least one restart");
    let labels = renumber(&run.labels, state);
    let (next_state, centers, reductions) = advance_kernel_state(state, &labels, batch, &ctx, cfg)?;
    let active_set: BTreeSet<ClusterId> = labels.iter().copied().collect();
    Ok(KernelBatchOutput {
        result: BatchResult {
            labels,
            centers,
            objective: run.objective,
            active_set,
            iterations: run.iterations,
            converged: run.converged,
            objective_trace: run.trace,
        },
        state: next_state,
        reductions,
    })
}

fn descend(gram: &GramTables, state: &KernelState, cfg: &DMeansConfig, order: &[usize]) -> Result<Run> {
    let n = gram.n_data();
    let mut rank = vec![0usize; n];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    let mut stats = KdStats::new(gram, state, cfg);

    // nearest-first initial pass
    let mut pending: Vec<usize> = order.to_vec();
    while !pending.is_empty() {
        let mut pick: Option<(usize, Target, f64)> = None;
        for (p, &i) in pending.iter().enumerate() {
            let (target, cost) = kd_assign(i, &stats, cfg);
            let better = match pick {
                None => true,
                Some((q, _, c)) => cost < c || (cost == c && rank[i] < rank[pending[q]]),
            };
            if better {
                pick = Some((p, target, cost));
            }
        }
        let (p, target, _) = pick.expect("pending is non-empty");
        let i = pending.swap_remove(p);
        stats.insert(i, target);
    }

    let mut labels = current_labels(&stats);
    let mut trace = vec![kd_objective(&labels, state, gram, cfg)?];
    let mut iterations = 1;
    let mut converged = false;
    while iterations < cfg.max_iters {
        iterations += 1;
        for &i in order {
            stats.remove(i);
            let (target, _) = kd_assign(i, &stats, cfg);
            stats.insert(i, target);
        }
        labels = current_labels(&stats);
        let j = kd_objective(&labels, state, gram, cfg)?;
        let prev = *trace.last().expect("non-empty trace");
        trace.push(j);
        if objective_settled(j, prev) {
            converged = true;
            break;
        }
    }
    let objective = *trace.last().expect("non-empty trace");
    Ok(Run { labels, objective, trace, iterations, converged })
}

fn current_labels(stats: &KdStats<'_>) -> Vec<ClusterId> {
    (0..stats.labels.len()).map(|i| stats.label(i).expect("every point labelled")).collect()
}

/// Replaces provisional ids of new clusters by `next_id, next_id + 1, ...`
/// in order of the first point carrying them.
pub(crate) fn renumber(labels: &[ClusterId], state: &KernelState) -> Vec<ClusterId> {
    let mut map: BTreeMap<ClusterId, ClusterId> = BTreeMap::new();
    let mut next = state.next_id;
    labels
        .iter()
        .map(|&l| {
            if state.position(l).is_some() {
                return l;
            }
            *map.entry(l).or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

/// Folds a labeled batch into the sparse state: for every active cluster
/// the dense update is reduced under the budget, inactive clusters age by
/// one step, and expired clusters are dropped.
///
/// Returns the state, the input-space center of every active cluster, and
/// the per-cluster reductions.
#[allow(clippy::type_complexity)]
pub fn advance_kernel_state(
    state: &KernelState,
    labels: &[ClusterId],
    batch: &Batch,
    ctx: &KernelContext,
    cfg: &DMeansConfig,
) -> Result<(KernelState, BTreeMap<ClusterId, Vec<f64>>, BTreeMap<ClusterId, Reduction>)> {
    if labels.len() != batch.len() {
        return Err(Error::LengthMismatch(format!("{} labels for {} points", labels.len(), batch.len())));
    }
    let mut members: BTreeMap<ClusterId, Vec<&[f64]>> = BTreeMap::new();
    for (y, id) in batch.points.iter().zip(labels) {
        members.entry(*id).or_default().push(y);
    }
    let mut centers = BTreeMap::new();
    let mut reductions = BTreeMap::new();
    let mut carried = Vec::with_capacity(state.centers.len() + members.len());
    let mut next_id = state.next_id;

    let mut absorb = |id: ClusterId, support: &[SupportPoint], gamma: f64, assigned: &[&[f64]]| {
        let dense = dense_center_update(support, gamma, assigned);
        let red = sparse_reduce(&dense, cfg.budget, ctx);
        let center = SparseCenter {
            id,
            support: red.support.clone(),
            weight: gamma + assigned.len() as f64,
            staleness: 1,
        };
        centers.insert(id, center.input_space_center(state.dim));
        reductions.insert(id, red);
        center
    };

    for old in &state.centers {
        match members.remove(&old.id) {
            Some(assigned) => {
                let gamma = gamma_of(old.weight, old.staleness, cfg.tau);
                carried.push(absorb(old.id, &old.support, gamma, &assigned));
            }
            None => carried.push(SparseCenter { staleness: old.staleness + 1, ..old.clone() }),
        }
    }
    for (id, assigned) in members {
        if id < state.next_id {
            return Err(Error::Parameter(format!("label {id} is neither carried nor fresh")));
        }
        next_id = next_id.max(id + 1);
        carried.push(absorb(id, &[], 0.0, &assigned));
    }
    carried.retain(|c| !cfg.is_expired(c.staleness));
    Ok((KernelState { dim: state.dim, centers: carried, next_id }, centers, reductions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dmeans::{assign_point, objective, ActiveCenter, OldCandidate, OldCluster};

    fn cfg(lambda: f64, q: f64, tau: f64) -> DMeansConfig {
        DMeansConfig::new(lambda, q, tau).unwrap()
    }

    fn batch(points: &[[f64; 2]]) -> Batch {
        Batch::new(0, points.iter().map(|p| p.to_vec()).collect()).unwrap()
    }

    fn linear_tables(b: &Batch, s: &KernelState) -> GramTables {
        let ctx = KernelContext::new(KernelSpec::Linear, &b.points).unwrap();
        GramTables::build(b, s, &ctx)
    }

    #[test]
    fn single_new_point_costs_lambda() {
        let b = batch(&[[0.3, 0.4]]);
        let s = KernelState::new(2);
        let g = linear_tables(&b, &s);
        let j = kd_objective(&[0], &s, &g, &cfg(2.5, 1.0, 1.0)).unwrap();
        assert!((j - 2.5).abs() < 1e-15);
    }

    #[test]
    fn one_new_cluster_three_points() {
        let b = batch(&[[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]]);
        let s = KernelState::new(2);
        let g = linear_tables(&b, &s);
        let j = kd_objective(&[0, 0, 0], &s, &g, &cfg(1.0, 1.0, 1.0)).unwrap();
        // mean (1/3, 2/3); squared distances 5/9 + 8/9 + 17/9
        assert!((j - (1.0 + 30.0 / 9.0)).abs() < 1e-12);
    }

    #[test]
    fn empty_stats_go_new() {
        let b = batch(&[[0.0, 0.0]]);
        let s = KernelState::new(2);
        let g = linear_tables(&b, &s);
        let c = cfg(3.0, 1.0, 1.0);
        let stats = KdStats::new(&g, &s, &c);
        assert_eq!(kd_assign(0, &stats, &c), (Target::New, 3.0));
    }

    #[test]
    fn rejoin_identical_singleton() {
        let b = batch(&[[0.5, 0.5], [0.5, 0.5]]);
        let s = KernelState::new(2);
        let g = linear_tables(&b, &s);
        let c = cfg(1.0, 1.0, 1.0);
        let mut stats = KdStats::new(&g, &s, &c);
        let id = stats.insert(0, Target::New);
        let (target, cost) = kd_assign(1, &stats, &c);
        assert_eq!(target, Target::Active(id));
        assert!(cost.abs() < 1e-15);
    }

    #[test]
    fn linear_assign_matches_core() {
        let linear = StreamState {
            dim: 2,
            old_clusters: vec![
                OldCluster { id: 0, phi: vec![0.0, 0.0], weight: 2.0, staleness: 2 },
                OldCluster { id: 1, phi: vec![1.0, 1.0], weight: 5.0, staleness: 1 },
            ],
            next_id: 2,
        };
        let s = KernelState::from_linear(&linear);
        let b = batch(&[[0.2, 0.1], [0.9, 0.8], [0.4, 0.5], [3.0, 3.0]]);
        let g = linear_tables(&b, &s);
        let c = cfg(2.0, 0.3, 0.5);
        let stats = KdStats::new(&g, &s, &c);
        let old: Vec<OldCandidate<'_>> = linear
            .old_clusters
            .iter()
            .map(|o| OldCandidate { id: o.id, phi: &o.phi, gamma: gamma_of(o.weight, o.staleness, 0.5), staleness: o.staleness })
            .collect();
        for i in 0..4 {
            let kd = kd_assign(i, &stats, &c);
            let core = assign_point(&b.points[i], &[] as &[ActiveCenter<'_>], &old, &c);
            assert_eq!(kd.0, core.0);
            assert!((kd.1 - core.1).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_objective_matches_core() {
        let linear = StreamState {
            dim: 2,
            old_clusters: vec![OldCluster { id: 4, phi: vec![0.1, -0.2], weight: 3.0, staleness: 2 }],
            next_id: 5,
        };
        let s = KernelState::from_linear(&linear);
        let b = batch(&[[0.2, 0.1], [0.0, -0.3], [2.0, 2.0], [2.1, 1.9]]);
        let g = linear_tables(&b, &s);
        let c = cfg(2.0, 0.3, 0.5);
        let labels = vec![4, 4, 5, 5];
        let gamma = gamma_of(3.0, 2, 0.5);
        let mut centers = BTreeMap::new();
        centers.insert(4, crate::dmeans::update_center(&[0.1, -0.2], gamma, &[&[0.2, 0.1], &[0.0, -0.3]]));
        centers.insert(5, vec![2.05, 1.95]);
        let core = objective(&b, &labels, &centers, &linear, &c).unwrap();
        let kd = kd_objective(&labels, &s, &g, &c).unwrap();
        assert!((core - kd).abs() <= 1e-10 * core.abs());
    }

    #[test]
    fn modified_penalty_is_cheaper() {
        let linear = StreamState {
            dim: 2,
            old_clusters: vec![OldCluster { id: 0, phi: vec![0.0, 0.0], weight: 3.0, staleness: 2 }],
            next_id: 1,
        };
        let s = KernelState::from_linear(&linear);
        let b = batch(&[[0.2, 0.1], [0.0, 0.3]]);
        let g = linear_tables(&b, &s);
        let c = cfg(2.0, 0.3, 0.5);
        let exact = kd_objective_with(&[0, 0], &s, &g, &c, Penalty::Exact).unwrap();
        let modified = kd_objective_with(&[0, 0], &s, &g, &c, Penalty::Modified).unwrap();
        let gamma = gamma_of(3.0, 2, 0.5);
        assert!((exact - modified - (1.0 - 2.0 / (gamma + 2.0)) * 0.6).abs() < 1e-12);
    }

    #[test]
    fn stats_roundtrip_restores_sums() {
        let b = batch(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let s = KernelState::new(2);
        let g = linear_tables(&b, &s);
        let c = cfg(10.0, 1.0, 1.0);
        let mut stats = KdStats::new(&g, &s, &c);
        let id = stats.insert(0, Target::New);
        stats.insert(1, Target::Active(id));
        stats.insert(2, Target::Active(id));
        let before = kd_assign_after_removal(&mut stats, 2, &c);
        stats.insert(2, Target::Active(id));
        let again = kd_assign_after_removal(&mut stats, 2, &c);
        assert_eq!(before, again);
        assert_eq!(stats.count(id), 2);
    }

    fn kd_assign_after_removal(stats: &mut KdStats<'_>, i: usize, c: &DMeansConfig) -> (Target, f64) {
        stats.remove(i);
        kd_assign(i, stats, c)
    }

    #[test]
    fn rbf_trace_is_monotone() {
        let pts: Vec<Vec<f64>> = (0..30)
            .map(|i| {
                let a = i as f64 * 0.7;
                vec![(a.sin() + (i % 3) as f64) * 0.3, (a.cos() * 0.4 + (i % 2) as f64) * 0.3]
            })
            .collect();
        let b = Batch::new(0, pts).unwrap();
        let out = kd_cluster_batch(&b, &KernelState::new(2), &KernelSpec::Rbf { omega: 0.2 }, &cfg(0.8, 0.1, 1.0))
            .unwrap();
        for w in out.result.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
        assert_eq!(out.result.labels.len(), 30);
    }

    #[test]
    fn ids_follow_first_point() {
        let b = batch(&[[5.0, 5.0], [0.0, 0.0], [5.0, 5.1], [0.1, 0.0]]);
        let mut s = KernelState::new(2);
        s.next_id = 7;
        let out = kd_cluster_batch(&b, &s, &KernelSpec::Linear, &cfg(1.0, 0.1, 1.0)).unwrap();
        assert_eq!(out.result.labels, vec![7, 8, 7, 8]);
        assert_eq!(out.state.next_id, 9);
        assert_eq!(out.state.centers.len(), 2);
    }
}
