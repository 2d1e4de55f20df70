//! One interface over the three engines, plus the run configuration.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{DMeansConfig, DEFAULT_BUDGET, DEFAULT_MAX_ITERS};
use crate::dmeans::{advance_state, cluster_batch, Batch, BatchResult, StreamState};
use crate::error::{Error, Result};
use crate::kdmeans::{kd_cluster_batch, KernelState};
use crate::kernel::KernelSpec;
use crate::spectral::{sdmeans_batch, SpectralReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    DMeans,
    KdMeans,
    SdMeans,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::DMeans => "dmeans",
            Algorithm::KdMeans => "kdmeans",
            Algorithm::SdMeans => "sdmeans",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dmeans" => Ok(Algorithm::DMeans),
            "kdmeans" => Ok(Algorithm::KdMeans),
            "sdmeans" => Ok(Algorithm::SdMeans),
            other => Err(Error::Parameter(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// A validated engine choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineSpec {
    pub algorithm: Algorithm,
    pub kernel: Option<KernelSpec>,
    pub cfg: DMeansConfig,
}

impl EngineSpec {
    pub fn new(algorithm: Algorithm, kernel: Option<KernelSpec>, cfg: DMeansConfig) -> Result<Self> {
        let spec = EngineSpec { algorithm, kernel, cfg };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        match (self.algorithm, &self.kernel) {
            (Algorithm::DMeans, None) => Ok(()),
            (Algorithm::DMeans, Some(_)) => Err(Error::Parameter("dmeans takes no kernel".into())),
            (_, None) => Err(Error::Parameter(format!("{} requires a kernel", self.algorithm.name()))),
            (_, Some(k)) => k.validate(),
        }
    }

    fn kernel(&self) -> &KernelSpec {
        self.kernel.as_ref().expect("validated kernel")
    }
}

/// Carried state of either flavor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrackerState {
    Linear(StreamState),
    Kernel(KernelState),
}

impl TrackerState {
    /// Number of carried clusters.
    pub fn len(&self) -> usize {
        match self {
            TrackerState::Linear(s) => s.old_clusters.len(),
            TrackerState::Kernel(s) => s.centers.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub result: BatchResult,
    /// Carried clusters after the fold.
    pub k_total: usize,
    pub seconds: f64,
    pub spectral: Option<SpectralReport>,
}

/// Runs batches through one engine, carrying the state between them.
#[derive(Debug, Clone)]
pub struct Tracker {
    spec: EngineSpec,
    state: Option<TrackerState>,
}

impl Tracker {
    pub fn new(spec: EngineSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Tracker { spec, state: None })
    }

    pub fn spec(&self) -> &EngineSpec {
        &self.spec
    }

    /// `None` before the first batch.
    pub fn state(&self) -> Option<&TrackerState> {
        self.state.as_ref()
    }

    pub fn step(&mut self, batch: &Batch) -> Result<StepOutput> {
        batch.validate()?;
        let dim = batch.dim();
        let cfg = &self.spec.cfg;
        let start = Instant::now();
        let (result, state, spectral) = match self.spec.algorithm {
            Algorithm::DMeans => {
                let prev = match self.state.take() {
                    Some(TrackerState::Linear(s)) => s,
                    _ => StreamState::new(dim),
                };
                let result = cluster_batch(batch, &prev, cfg)?;
                let next = advance_state(&prev, &result, batch, cfg)?;
                (result, TrackerState::Linear(next), None)
            }
            Algorithm::KdMeans | Algorithm::SdMeans => {
                let prev = match self.state.take() {
                    Some(TrackerState::Kernel(s)) => s,
                    _ => KernelState::new(dim),
                };
                if self.spec.algorithm == Algorithm::KdMeans {
                    let out = kd_cluster_batch(batch, &prev, self.spec.kernel(), cfg)?;
                    (out.result, TrackerState::Kernel(out.state), None)
                } else {
                    let out = sdmeans_batch(batch, &prev, self.spec.kernel(), cfg)?;
                    (out.result, TrackerState::Kernel(out.state), Some(out.report))
                }
            }
        };
        let seconds = start.elapsed().as_secs_f64();
        let k_total = state.len();
        self.state = Some(state);
        Ok(StepOutput { result, k_total, seconds, spectral })
    }
}

/// Clusters a whole stream from an empty state.
pub fn run_stream(spec: &EngineSpec, batches: &[Batch]) -> Result<Vec<StepOutput>> {
    let mut tracker = Tracker::new(spec.clone())?;
    batches.iter().map(|b| tracker.step(b)).collect()
}

/// `tau` is a number or the string `"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TauValue {
    Number(f64),
    Text(String),
}

impl TauValue {
    fn value(&self) -> Result<f64> {
        match self {
            TauValue::Number(x) => Ok(*x),
            TauValue::Text(s) if matches!(s.as_str(), "inf" | "infinity" | "Infinity") => Ok(f64::INFINITY),
            TauValue::Text(s) => Err(Error::Parameter(format!("tau must be a number or \"inf\", got {s:?}"))),
        }
    }
}

/// The JSON run configuration.  Penalties are given either directly as
/// `(lambda, q, tau)` or as `(lambda, t_q, k_tau)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<TauValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
}

fn default_budget() -> usize {
    DEFAULT_BUDGET
}

fn default_restarts() -> usize {
    1
}

fn default_max_iters() -> usize {
    DEFAULT_MAX_ITERS
}

impl RunConfig {
    /// Parses the JSON text; syntax and schema problems are reported as
    /// [`Error::Parameter`] like any other invalid configuration.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parameter(format!("invalid run config: {e}")))
    }

    pub fn engine(&self) -> Result<EngineSpec> {
        let direct = self.q.is_some() || self.tau.is_some();
        let reparam = self.t_q.is_some() || self.k_tau.is_some();
        let cfg = match (direct, reparam) {
            (true, true) => return Err(Error::Parameter("give either (q, tau) or (t_q, k_tau), not both".into())),
            (true, false) => {
                let (Some(q), Some(tau)) = (self.q, &self.tau) else {
                    return Err(Error::Parameter("both q and tau are required".into()));
                };
                DMeansConfig::new(self.lambda, q, tau.value()?)?
            }
            (false, true) => {
                let (Some(t_q), Some(k_tau)) = (self.t_q, self.k_tau) else {
                    return Err(Error::Parameter("both t_q and k_tau are required".into()));
                };
                DMeansConfig::from_reparam(self.lambda, t_q, k_tau)?
            }
            (false, false) => return Err(Error::Parameter("missing (q, tau) or (t_q, k_tau)".into())),
        };
        let cfg = cfg
            .with_budget(self.budget)
            .with_restarts(self.restarts)
            .with_seed(self.seed)
            .with_max_iters(self.max_iters);
        EngineSpec::new(self.algorithm, self.kernel, cfg)
    }
}
