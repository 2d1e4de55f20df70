//! Seeded synthetic streams with ground truth.
//!
//! All randomness comes from one `ChaCha8Rng` seeded with
//! `seed_from_u64(seed)`; normal draws use `rand_distr::Normal`.  Points of
//! every batch are shuffled with the same generator after sampling, so the
//! batch order carries no label information.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dmeans::Batch;
use crate::error::{Error, Result};

/// Moving isotropic Gaussian clusters in the unit square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaussianStreamCfg {
    pub n_clusters: usize,
    pub pts_per_cluster: usize,
    pub noise_sd: f64,
    pub walk_sd: f64,
    pub death_prob: f64,
    pub steps: usize,
    pub seed: u64,
}

impl Default for GaussianStreamCfg {
    fn default() -> Self {
        GaussianStreamCfg {
            n_clusters: 5,
            pts_per_cluster: 15,
            noise_sd: 0.05,
            walk_sd: 0.05,
            death_prob: 0.05,
            steps: 100,
            seed: 0,
        }
    }
}

impl GaussianStreamCfg {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.death_prob) {
            return Err(Error::Parameter(format!("death_prob must lie in [0, 1], got {}", self.death_prob)));
        }
        check_sd("noise_sd", self.noise_sd)?;
        check_sd("walk_sd", self.walk_sd)?;
        if self.n_clusters == 0 || self.pts_per_cluster == 0 || self.steps == 0 {
            return Err(Error::Parameter("n_clusters, pts_per_cluster and steps must be positive".into()));
        }
        Ok(())
    }
}

/// How ring centers move between steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RingMotion {
    /// Every ring keeps its own random walk.
    #[default]
    Independent,
    /// The rings stay concentric and move together.
    Shared,
}

/// Concentric noisy rings whose centers wander.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RingStreamCfg {
    pub pts_per_step: usize,
    pub radii: Vec<f64>,
    pub noise_sd: f64,
    pub walk_sd: f64,
    pub steps: usize,
    pub motion: RingMotion,
    pub seed: u64,
}

impl Default for RingStreamCfg {
    fn default() -> Self {
        RingStreamCfg {
            pts_per_step: 400,
            radii: vec![0.4, 0.2, 0.0],
            noise_sd: 0.03,
            walk_sd: 0.05,
            steps: 10,
            motion: RingMotion::default(),
            seed: 0,
        }
    }
}

impl RingStreamCfg {
    pub fn validate(&self) -> Result<()> {
        check_sd("noise_sd", self.noise_sd)?;
        check_sd("walk_sd", self.walk_sd)?;
        if self.radii.is_empty() || self.radii.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(Error::Parameter("radii must be non-empty, finite and non-negative".into()));
        }
        for (i, a) in self.radii.iter().enumerate() {
            if self.radii[i + 1..].contains(a) {
                return Err(Error::Parameter(format!("duplicate ring radius {a}")));
            }
        }
        if self.pts_per_step < self.radii.len() || self.steps == 0 {
            return Err(Error::Parameter("need at least one point per ring and one step".into()));
        }
        Ok(())
    }

    /// Points per ring: an equal split, the remainder going to the first rings.
    pub fn ring_counts(&self) -> Vec<usize> {
        let r = self.radii.len();
        (0..r).map(|i| self.pts_per_step / r + usize::from(i < self.pts_per_step % r)).collect()
    }
}

fn check_sd(name: &str, sd: f64) -> Result<()> {
    // zero is accepted as the noiseless limit
    if sd >= 0.0 && sd.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} must be finite and non-negative, got {sd}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Birth { t: u64, id: u64 },
    Death { t: u64, id: u64 },
}

/// Batches with the true cluster of every point.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledStream {
    pub batches: Vec<Batch>,
    /// `truth[t][i]` is the true cluster of point `i` of batch `t`.
    pub truth: Vec<Vec<u64>>,
    pub events: Vec<Event>,
}

fn point_ids(t: usize, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{t}-{i}")).collect()
}

fn shuffled_batch(t: usize, mut rows: Vec<(Vec<f64>, u64)>, rng: &mut ChaCha8Rng) -> Result<(Batch, Vec<u64>)> {
    rows.shuffle(rng);
    let (points, truth): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let n = points.len();
    let batch = Batch::new(t as u64, points)?.with_ids(point_ids(t, n))?;
    Ok((batch, truth))
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("validated standard deviation")
}

/// Reflects into `[0, 1]`.
fn reflect(mut x: f64) -> f64 {
    loop {
        if x < 0.0 {
            x = -x;
        } else if x > 1.0 {
            x = 2.0 - x;
        } else {
            return x;
        }
    }
}

/// Per step: clusters first move (steps after the first), then each dies
/// with `death_prob` and is replaced at a uniform location under a fresh
/// id, then every cluster emits its points.  Centers reflect off the edges
/// of the unit square; points are not clipped.
pub fn gen_moving_gaussians(cfg: &GaussianStreamCfg) -> Result<LabeledStream> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let walk = normal(cfg.walk_sd);
    let noise = normal(cfg.noise_sd);
    let mut next_id = 0u64;
    let mut events = Vec::new();
    let mut clusters: Vec<(u64, [f64; 2])> = (0..cfg.n_clusters)
        .map(|_| {
            let c = [rng.random::<f64>(), rng.random::<f64>()];
            events.push(Event::Birth { t: 0, id: next_id });
            next_id += 1;
            (next_id - 1, c)
        })
        .collect();
    let mut batches = Vec::with_capacity(cfg.steps);
    let mut truth = Vec::with_capacity(cfg.steps);
    for t in 0..cfg.steps {
        if t > 0 {
            for (id, c) in clusters.iter_mut() {
                c[0] = reflect(c[0] + walk.sample(&mut rng));
                c[1] = reflect(c[1] + walk.sample(&mut rng));
                if rng.random::<f64>() < cfg.death_prob {
                    events.push(Event::Death { t: t as u64, id: *id });
                    *id = next_id;
                    next_id += 1;
                    *c = [rng.random::<f64>(), rng.random::<f64>()];
                    events.push(Event::Birth { t: t as u64, id: *id });
                }
            }
        }
        let mut rows = Vec::with_capacity(cfg.n_clusters * cfg.pts_per_cluster);
        for (id, c) in &clusters {
            for _ in 0..cfg.pts_per_cluster {
                rows.push((vec![c[0] + noise.sample(&mut rng), c[1] + noise.sample(&mut rng)], *id));
            }
        }
        let (b, tr) = shuffled_batch(t, rows, &mut rng)?;
        batches.push(b);
        truth.push(tr);
    }
    Ok(LabeledStream { batches, truth, events })
}

/// Rings start concentric at `(0.5, 0.5)` and random-walk without bounds.
/// Ring `r` has true id `r`.
pub fn gen_moving_rings(cfg: &RingStreamCfg) -> Result<LabeledStream> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let walk = normal(cfg.walk_sd);
    let noise = normal(cfg.noise_sd);
    let counts = cfg.ring_counts();
    let mut centers = vec![[0.5, 0.5]; cfg.radii.len()];
    let events = (0..cfg.radii.len() as u64).map(|id| Event::Birth { t: 0, id }).collect();
    let mut batches = Vec::with_capacity(cfg.steps);
    let mut truth = Vec::with_capacity(cfg.steps);
    for t in 0..cfg.steps {
        if t > 0 {
            match cfg.motion {
                RingMotion::Independent => {
                    for c in centers.iter_mut() {
                        c[0] += walk.sample(&mut rng);
                        c[1] += walk.sample(&mut rng);
                    }
                }
                RingMotion::Shared => {
                    let d = [walk.sample(&mut rng), walk.sample(&mut rng)];
                    for c in centers.iter_mut() {
                        c[0] += d[0];
                        c[1] += d[1];
                    }
                }
            }
        }
        let mut rows = Vec::with_capacity(cfg.pts_per_step);
        for (r, (&radius, &count)) in cfg.radii.iter().zip(&counts).enumerate() {
            let c = centers[r];
            for _ in 0..count {
                let angle = rng.random::<f64>() * std::f64::consts::TAU;
                rows.push((
                    vec![
                        c[0] + radius * angle.cos() + noise.sample(&mut rng),
                        c[1] + radius * angle.sin() + noise.sample(&mut rng),
                    ],
                    r as u64,
                ));
            }
        }
        let (b, tr) = shuffled_batch(t, rows, &mut rng)?;
        batches.push(b);
        truth.push(tr);
    }
    Ok(LabeledStream { batches, truth, events })
}
