//! Temporal stream clustering with small-variance dynamic mixture models.
//!
//! The engines share one carried-state model in which clusters survive
//! from batch to batch until they expire.
//!
//! * [`dmeans`]: coordinate descent in input space.
//! * [`kdmeans`]: the same objective through a kernel, with old centers
//!   kept as budgeted sparse combinations ([`sparse`]).
//! * [`spectral`]: an eigendecomposition relaxation of the kernelized
//!   problem, rounded to a partition and matched to old clusters.
//!
//! [`datagen`] produces labeled synthetic streams and [`eval`] scores
//! learned labelings against ground truth.

pub mod config;
pub mod datagen;
pub mod dmeans;
pub mod engine;
pub mod error;
pub mod eval;
pub mod format;
pub mod kdmeans;
pub mod kernel;
pub mod linalg;
pub mod mst;
pub mod sparse;
pub mod spectral;
mod util;

pub use config::DMeansConfig;
pub use datagen::{LabeledStream, GaussianStreamCfg, RingStreamCfg};
pub use dmeans::{advance_state, cluster_batch, Batch, BatchResult, ClusterId, OldCluster, StreamState, Target};
pub use engine::{run_stream, Algorithm, EngineSpec, RunConfig, StepOutput, Tracker, TrackerState};
pub use error::{Error, Result};
pub use eval::{consistent_accuracy, cost_audit, AccuracyReport, StreamSpec};
pub use kdmeans::{kd_cluster_batch, GramTables, KernelBatchOutput, KernelState, Penalty};
pub use kernel::{KernelContext, KernelSpec};
pub use sparse::{SparseCenter, SupportPoint};
pub use spectral::{sdmeans_batch, SpectralReport};
pub use util::mix_seed;
