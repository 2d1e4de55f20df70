//! Penalty parameters and engine knobs shared by every clustering engine.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default sparse-center budget for the kernelized engines.
pub const DEFAULT_BUDGET: usize = 32;
/// Default cap on coordinate-descent sweeps per batch.
pub const DEFAULT_MAX_ITERS: usize = 100;

/// The `(lambda, Q, tau)` penalty triple plus engine knobs.
///
/// `lambda` is the new-cluster penalty, `q_penalty` the per-step revival
/// penalty and `tau` the motion-variance rate. `tau` may be `f64::INFINITY`,
/// which zeroes the prior weight of every carried cluster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DMeansConfig {
    pub lambda: f64,
    pub q_penalty: f64,
    pub tau: f64,
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
    /// Support budget `m` for sparse kernel-space centers; `usize::MAX`
    /// disables the reduction.
    pub budget: usize,
}

impl DMeansConfig {
    pub fn new(lambda: f64, q_penalty: f64, tau: f64) -> Result<Self> {
        let cfg = DMeansConfig {
            lambda,
            q_penalty,
            tau,
            restarts: 1,
            max_iters: DEFAULT_MAX_ITERS,
            seed: 0,
            budget: DEFAULT_BUDGET,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Builds the penalties from the behavioural parameterization: `t_q` is
    /// the number of unobserved steps after which a cluster can no longer be
    /// revived and `k_tau * lambda` the squared revival radius after one step.
    ///
    /// `Q = lambda / t_q`, `tau = (t_q (k_tau - 1) + 1) / (t_q - 1)`.
    pub fn from_reparam(lambda: f64, t_q: f64, k_tau: f64) -> Result<Self> {
        if !(t_q > 1.0) || !t_q.is_finite() {
            return Err(Error::Parameter(format!("t_q must be a finite value > 1, got {t_q}")));
        }
        if !(k_tau >= 1.0) || !k_tau.is_finite() {
            return Err(Error::Parameter(format!("k_tau must be a finite value >= 1, got {k_tau}")));
        }
        let q_penalty = lambda / t_q;
        let tau = (t_q * (k_tau - 1.0) + 1.0) / (t_q - 1.0);
        Self::new(lambda, q_penalty, tau)
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn validate(&self) -> Result<()> {
        // lambda = 0 would make every point its own cluster; reject it.
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::Parameter(format!("lambda must be finite and > 0, got {}", self.lambda)));
        }
        if !(self.q_penalty >= 0.0) || !self.q_penalty.is_finite() {
            return Err(Error::Parameter(format!("Q must be finite and >= 0, got {}", self.q_penalty)));
        }
        if !(self.tau >= 0.0) {
            return Err(Error::Parameter(format!("tau must be >= 0, got {}", self.tau)));
        }
        if self.restarts == 0 {
            return Err(Error::Parameter("restarts must be >= 1".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Parameter("max_iters must be >= 1".into()));
        }
        if self.budget == 0 {
            return Err(Error::Parameter("budget must be >= 1".into()));
        }
        Ok(())
    }

    /// Whether an old cluster unobserved for `staleness` steps is past
    /// revival and may be dropped.
    pub fn is_expired(&self, staleness: u32) -> bool {
        self.q_penalty * staleness as f64 > self.lambda
    }
}
