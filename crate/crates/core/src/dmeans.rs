//! Exact D-Means: coordinate descent on one batch and the fold of cluster
//! state across batches.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::DMeansConfig;
use crate::error::{Error, Result};
use crate::util::{mix_seed, objective_settled, sq_dist};

/// Stable cluster identity.  Ids are handed out by a monotone counter and
/// are never reused within a stream.
pub type ClusterId = u64;

/// A cluster carried over from earlier batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OldCluster {
    pub id: ClusterId,
    /// Old center memory.
    pub phi: Vec<f64>,
    /// Prior weight, always positive for a carried cluster.
    pub weight: f64,
    /// Steps since the cluster last received data (>= 1).
    pub staleness: u32,
}

/// Fold state of a D-Means stream between timesteps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamState {
    pub dim: usize,
    pub old_clusters: Vec<OldCluster>,
    pub next_id: ClusterId,
}

impl StreamState {
    pub fn new(dim: usize) -> Self {
        StreamState { dim, old_clusters: Vec::new(), next_id: 0 }
    }

    pub fn get(&self, id: ClusterId) -> Option<&OldCluster> {
        self.old_clusters.iter().find(|c| c.id == id)
    }
}

/// One timestep worth of observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub t: u64,
    pub points: Vec<Vec<f64>>,
    pub point_ids: Option<Vec<String>>,
}

impl Batch {
    pub fn new(t: u64, points: Vec<Vec<f64>>) -> Result<Self> {
        let batch = Batch { t, points, point_ids: None };
        batch.validate()?;
        Ok(batch)
    }

    pub fn with_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.points.len() {
            return Err(Error::LengthMismatch(format!(
                "{} point ids for {} points",
                ids.len(),
                self.points.len()
            )));
        }
        let mut seen = std::collections::HashSet::with_capacity(ids.len());
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::Parameter(format!("duplicate point id {dup:?}")));
        }
        self.point_ids = Some(ids);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self.points.first().ok_or(Error::EmptyBatch)?;
        let dim = first.len();
        if dim == 0 {
            return Err(Error::Parameter("points must have at least one coordinate".into()));
        }
        for p in &self.points {
            if p.len() != dim {
                return Err(Error::Dimension { expected: dim, got: p.len() });
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::Parameter("non-finite coordinate".into()));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Outcome of clustering one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    /// Cluster id of every point, in batch order.
    pub labels: Vec<ClusterId>,
    /// Center of every active cluster.  For the kernelized engines this is
    /// the input-space combination of the updated sparse center.
    pub centers: BTreeMap<ClusterId, Vec<f64>>,
    pub objective: f64,
    pub active_set: BTreeSet<ClusterId>,
    pub iterations: usize,
    /// `false` when the sweep cap was hit before the objective settled.
    pub converged: bool,
    /// Objective after every sweep of the winning restart.
    pub objective_trace: Vec<f64>,
}

/// Effective prior weight `(w^-1 + tau * dt)^-1` of a carried cluster.
///
/// New clusters have no prior and use 0 directly.
pub fn gamma_of(weight: f64, staleness: u32, tau: f64) -> f64 {
    if staleness == 0 {
        return weight;
    }
    if tau.is_infinite() {
        return 0.0;
    }
    1.0 / (1.0 / weight + tau * staleness as f64)
}

/// Where a point goes under the label update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Active(ClusterId),
    Revive(ClusterId),
    New,
}

#[derive(Debug, Clone, Copy)]
pub struct ActiveCenter<'a> {
    pub id: ClusterId,
    pub center: &'a [f64],
}

#[derive(Debug, Clone, Copy)]
pub struct OldCandidate<'a> {
    pub id: ClusterId,
    pub phi: &'a [f64],
    pub gamma: f64,
    pub staleness: u32,
}

/// Minimum-cost label for `y` among active, revivable and new clusters.
///
/// Equal costs prefer active over revived over new, then the lowest id.
pub fn assign_point(
    y: &[f64],
    active: &[ActiveCenter<'_>],
    old: &[OldCandidate<'_>],
    cfg: &DMeansConfig,
) -> (Target, f64) {
    let mut best: Option<(Target, f64, ClusterId)> = None;
    for c in active {
        let cost = sq_dist(y, c.center);
        if better(cost, c.id, &best) {
            best = Some((Target::Active(c.id), cost, c.id));
        }
    }
    let mut best_old: Option<(Target, f64, ClusterId)> = None;
    for c in old {
        let cost = revival_cost(y, c, cfg.q_penalty);
        if better(cost, c.id, &best_old) {
            best_old = Some((Target::Revive(c.id), cost, c.id));
        }
    }
    if let Some(o) = best_old {
        if best.is_none_or(|b| o.1 < b.1) {
            best = Some(o);
        }
    }
    match best {
        Some((target, cost, _)) if cost <= cfg.lambda => (target, cost),
        _ => (Target::New, cfg.lambda),
    }
}

fn better(cost: f64, id: ClusterId, best: &Option<(Target, f64, ClusterId)>) -> bool {
    match best {
        None => true,
        Some((_, c, bid)) => cost < *c || (cost == *c && id < *bid),
    }
}

fn revival_cost(y: &[f64], c: &OldCandidate<'_>, q: f64) -> f64 {
    q * c.staleness as f64 + c.gamma / (c.gamma + 1.0) * sq_dist(y, c.phi)
}

/// Weighted center update `(gamma * phi + sum y) / (gamma + n)`.
///
/// `phi` is ignored when `gamma == 0`.  The caller must not pass an empty
/// set together with `gamma == 0`.
pub fn update_center(phi: &[f64], gamma: f64, assigned: &[&[f64]]) -> Vec<f64> {
    let dim = assigned.first().map_or(phi.len(), |p| p.len());
    debug_assert!(gamma > 0.0 || !assigned.is_empty());
    let mut sum = vec![0.0; dim];
    for p in assigned {
        for (s, x) in sum.iter_mut().zip(p.iter()) {
            *s += x;
        }
    }
    let n = assigned.len() as f64;
    if gamma == 0.0 {
        sum.iter().map(|s| s / n).collect()
    } else {
        sum.iter().zip(phi).map(|(s, f)| (gamma * f + s) / (gamma + n)).collect()
    }
}

/// The D-Means cost of a labeling with given centers.
///
/// Labels absent from `state` are new clusters (no prior, no revival cost).
pub fn objective(
    batch: &Batch,
    labels: &[ClusterId],
    centers: &BTreeMap<ClusterId, Vec<f64>>,
    state: &StreamState,
    cfg: &DMeansConfig,
) -> Result<f64> {
    if labels.len() != batch.len() {
        return Err(Error::LengthMismatch(format!("{} labels for {} points", labels.len(), batch.len())));
    }
    let mut sse: BTreeMap<ClusterId, f64> = BTreeMap::new();
    for (y, id) in batch.points.iter().zip(labels) {
        let theta = centers
            .get(id)
            .ok_or_else(|| Error::Parameter(format!("label {id} has no center")))?;
        *sse.entry(*id).or_insert(0.0) += sq_dist(y, theta);
    }
    let mut total = 0.0;
    for (id, s) in &sse {
        total += match state.get(*id) {
            Some(old) => {
                let gamma = gamma_of(old.weight, old.staleness, cfg.tau);
                cfg.q_penalty * old.staleness as f64 + gamma * sq_dist(&centers[id], &old.phi) + s
            }
            None => cfg.lambda + s,
        };
    }
    Ok(total)
}

/// Optimal centers for a fixed labeling: blended with the prior for carried
/// clusters, plain means for new ones.
pub fn fit_centers(
    batch: &Batch,
    labels: &[ClusterId],
    state: &StreamState,
    cfg: &DMeansConfig,
) -> Result<BTreeMap<ClusterId, Vec<f64>>> {
    if labels.len() != batch.len() {
        return Err(Error::LengthMismatch(format!("{} labels for {} points", labels.len(), batch.len())));
    }
    let mut members: BTreeMap<ClusterId, Vec<&[f64]>> = BTreeMap::new();
    for (y, id) in batch.points.iter().zip(labels) {
        members.entry(*id).or_default().push(y);
    }
    Ok(members
        .into_iter()
        .map(|(id, assigned)| {
            let center = match state.get(id) {
                Some(old) => update_center(&old.phi, gamma_of(old.weight, old.staleness, cfg.tau), &assigned),
                None => update_center(&[], 0.0, &assigned),
            };
            (id, center)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Key {
    Old(usize),
    New(u64),
}

#[derive(Debug, Clone)]
struct Working {
    key: Key,
    theta: Vec<f64>,
    count: usize,
}

struct Run {
    labels: Vec<usize>,
    slots: Vec<Option<Working>>,
    objective: f64,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// Clusters one batch against the carried state.
///
/// Restart 0 visits points in batch order; further restarts use seeded
/// permutations.  The lowest-cost restart wins (earliest on ties).
pub fn cluster_batch(batch: &Batch, state: &StreamState, cfg: &DMeansConfig) -> Result<BatchResult> {
    batch.validate()?;
    cfg.validate()?;
    if batch.dim() != state.dim {
        return Err(Error::Dimension { expected: state.dim, got: batch.dim() });
    }
    let gammas: Vec<f64> = state
        .old_clusters
        .iter()
        .map(|c| gamma_of(c.weight, c.staleness, cfg.tau))
        .collect();

    let mut best: Option<Run> = None;
    for restart in 0..cfg.restarts {
        let mut order: Vec<usize> = (0..batch.len()).collect();
        if restart > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, batch.t, restart as u64));
            order.shuffle(&mut rng);
        }
        let run = descend(batch, state, &gammas, cfg, &order);
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    let run = best.expect("at least one restart");
    Ok(finish(run, state))
}

fn descend(batch: &Batch, state: &StreamState, gammas: &[f64], cfg: &DMeansConfig, order: &[usize]) -> Run {
    let n = batch.len();
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut slots: Vec<Option<Working>> = Vec::new();
    let mut live_old: Vec<bool> = vec![false; state.old_clusters.len()];
    let mut serial = 0u64;
    let mut trace = Vec::new();
    let mut prev = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    // comparable id: old ids sit below every id a new cluster can receive
    let rank = |key: Key| -> ClusterId {
        match key {
            Key::Old(i) => state.old_clusters[i].id,
            Key::New(s) => state.next_id + s,
        }
    };

    while iterations < cfg.max_iters {
        iterations += 1;
        for &i in order {
            let y = &batch.points[i];
            let active: Vec<ActiveCenter<'_>> = slots
                .iter()
                .flatten()
                .map(|w| ActiveCenter { id: rank(w.key), center: &w.theta })
                .collect();
            let old: Vec<OldCandidate<'_>> = state
                .old_clusters
                .iter()
                .enumerate()
                .filter(|(k, _)| !live_old[*k])
                .map(|(k, c)| OldCandidate { id: c.id, phi: &c.phi, gamma: gammas[k], staleness: c.staleness })
                .collect();
            let (target, _) = assign_point(y, &active, &old, cfg);

            let dest = match target {
                Target::Active(id) => {
                    let s = slot_of(&slots, |w| rank(w.key) == id);
                    if labels[i] == Some(s) {
                        continue;
                    }
                    Dest::Slot(s)
                }
                Target::Revive(id) => {
                    let k = state.old_clusters.iter().position(|c| c.id == id).expect("known old id");
                    Dest::Revive(k)
                }
                Target::New => Dest::New,
            };

            if let Some(cur) = labels[i] {
                let w = slots[cur].as_mut().expect("labelled slot is live");
                w.count -= 1;
                if w.count == 0 {
                    if let Key::Old(k) = w.key {
                        live_old[k] = false;
                    }
                    slots[cur] = None;
                }
            }
            let s = match dest {
                Dest::Slot(s) => {
                    slots[s].as_mut().expect("live").count += 1;
                    s
                }
                Dest::Revive(k) => {
                    live_old[k] = true;
                    let theta = update_center(&state.old_clusters[k].phi, gammas[k], &[y.as_slice()]);
                    slots.push(Some(Working { key: Key::Old(k), theta, count: 1 }));
                    slots.len() - 1
                }
                Dest::New => {
                    slots.push(Some(Working { key: Key::New(serial), theta: y.clone(), count: 1 }));
                    serial += 1;
                    slots.len() - 1
                }
            };
            labels[i] = Some(s);
        }

        // parameter update, members in index order
        let mut members: Vec<Vec<&[f64]>> = vec![Vec::new(); slots.len()];
        for (i, l) in labels.iter().enumerate() {
            members[l.expect("every point labelled")].push(&batch.points[i]);
        }
        for (s, w) in slots.iter_mut().enumerate() {
            if let Some(w) = w {
                w.theta = match w.key {
                    Key::Old(k) => update_center(&state.old_clusters[k].phi, gammas[k], &members[s]),
                    Key::New(_) => update_center(&[], 0.0, &members[s]),
                };
            }
        }
        let j = working_objective(batch, state, gammas, cfg, &labels, &slots);
        trace.push(j);
        if objective_settled(j, prev) {
            converged = true;
            break;
        }
        prev = j;
    }

    let labels = labels.into_iter().map(|l| l.expect("labelled")).collect();
    let objective = *trace.last().expect("at least one sweep");
    Run { labels, slots, objective, trace, iterations, converged }
}

enum Dest {
    Slot(usize),
    Revive(usize),
    New,
}

fn slot_of(slots: &[Option<Working>], pred: impl Fn(&Working) -> bool) -> usize {
    slots
        .iter()
        .position(|w| w.as_ref().is_some_and(&pred))
        .expect("active target refers to a live slot")
}

fn working_objective(
    batch: &Batch,
    state: &StreamState,
    gammas: &[f64],
    cfg: &DMeansConfig,
    labels: &[Option<usize>],
    slots: &[Option<Working>],
) -> f64 {
    let mut sse = vec![0.0; slots.len()];
    for (i, l) in labels.iter().enumerate() {
        let s = l.expect("labelled");
        sse[s] += sq_dist(&batch.points[i], &slots[s].as_ref().expect("live").theta);
    }
    let mut total = 0.0;
    for (s, w) in slots.iter().enumerate() {
        let Some(w) = w else { continue };
        total += match w.key {
            Key::Old(k) => {
                let old = &state.old_clusters[k];
                cfg.q_penalty * old.staleness as f64 + gammas[k] * sq_dist(&w.theta, &old.phi) + sse[s]
            }
            Key::New(_) => cfg.lambda + sse[s],
        };
    }
    total
}

fn finish(run: Run, state: &StreamState) -> BatchResult {
    // new clusters are numbered by the first point that carries them
    let mut ids: Vec<Option<ClusterId>> = vec![None; run.slots.len()];
    let mut next = state.next_id;
    for &s in &run.labels {
        if ids[s].is_none() {
            ids[s] = Some(match run.slots[s].as_ref().expect("live").key {
                Key::Old(k) => state.old_clusters[k].id,
                Key::New(_) => {
                    next += 1;
                    next - 1
                }
            });
        }
    }
    let labels: Vec<ClusterId> = run.labels.iter().map(|&s| ids[s].expect("assigned")).collect();
    let mut centers = BTreeMap::new();
    for (s, w) in run.slots.into_iter().enumerate() {
        if let (Some(w), Some(id)) = (w, ids[s]) {
            centers.insert(id, w.theta);
        }
    }
    let active_set = labels.iter().copied().collect();
    BatchResult {
        labels,
        centers,
        objective: run.objective,
        active_set,
        iterations: run.iterations,
        converged: run.converged,
        objective_trace: run.trace,
    }
}

/// Folds a clustered batch into the carried state and drops clusters whose
/// revival penalty now exceeds the new-cluster penalty.
pub fn advance_state(
    state: &StreamState,
    result: &BatchResult,
    batch: &Batch,
    cfg: &DMeansConfig,
) -> Result<StreamState> {
    advance_state_with_labels(state, &result.labels, batch, cfg)
}

/// [`advance_state`] from bare labels; centers are refit from the members.
pub fn advance_state_with_labels(
    state: &StreamState,
    labels: &[ClusterId],
    batch: &Batch,
    cfg: &DMeansConfig,
) -> Result<StreamState> {
    if labels.len() != batch.len() {
        return Err(Error::LengthMismatch(format!("{} labels for {} points", labels.len(), batch.len())));
    }
    let mut members: BTreeMap<ClusterId, Vec<&[f64]>> = BTreeMap::new();
    for (y, id) in batch.points.iter().zip(labels) {
        members.entry(*id).or_default().push(y);
    }
    let mut next_id = state.next_id;
    let mut carried = Vec::with_capacity(state.old_clusters.len() + members.len());
    for old in &state.old_clusters {
        match members.remove(&old.id) {
            Some(assigned) => {
                let gamma = gamma_of(old.weight, old.staleness, cfg.tau);
                carried.push(OldCluster {
                    id: old.id,
                    phi: update_center(&old.phi, gamma, &assigned),
                    weight: gamma + assigned.len() as f64,
                    staleness: 1,
                });
            }
            None => carried.push(OldCluster { staleness: old.staleness + 1, ..old.clone() }),
        }
    }
    for (id, assigned) in members {
        if id < state.next_id {
            return Err(Error::Parameter(format!("label {id} is neither carried nor fresh")));
        }
        next_id = next_id.max(id + 1);
        carried.push(OldCluster {
            id,
            phi: update_center(&[], 0.0, &assigned),
            weight: assigned.len() as f64,
            staleness: 1,
        });
    }
    carried.retain(|c| !cfg.is_expired(c.staleness));
    Ok(StreamState { dim: state.dim, old_clusters: carried, next_id })
}
