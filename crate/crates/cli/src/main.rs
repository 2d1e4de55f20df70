//! `dynoclust` command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure or audit mismatch, 2 unreadable
//! or malformed input, 3 invalid configuration.

mod commands;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use failure::Failure;

#[derive(Debug, Parser)]
#[command(name = "dynoclust", version, about = "Temporal stream clustering with D-Means, KD-Means and SD-Means")]
struct Cli {
    /// Log verbosity; repeat for more detail.  `RUST_LOG` takes precedence.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labeled synthetic stream.
    Gen(GenArgs),
    /// Cluster a stream batch by batch.
    Cluster(ClusterArgs),
    /// Score predicted labels against ground truth (CSV on stdout).
    Eval(EvalArgs),
    /// Grid search over (lambda, t_q, k_tau) on synthetic streams.
    Sweep(SweepArgs),
    /// Recompute the objectives of a labeling from the files alone.
    Audit(AuditArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StreamKind {
    Gaussians,
    Rings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Motion {
    Independent,
    Shared,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: StreamKind,
    /// Number of timesteps [default: 100 for gaussians, 10 for rings].
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, env = "DYNOCLUST_SEED", default_value_t = 0)]
    seed: u64,
    /// Observation noise standard deviation.
    #[arg(long)]
    noise_sd: Option<f64>,
    /// Standard deviation of the per-step center displacement.
    #[arg(long)]
    walk_sd: Option<f64>,
    /// Gaussians: number of simultaneous clusters.
    #[arg(long)]
    clusters: Option<usize>,
    /// Gaussians: points per cluster and step.
    #[arg(long)]
    pts_per_cluster: Option<usize>,
    /// Gaussians: per-step probability that a cluster is replaced.
    #[arg(long)]
    death_prob: Option<f64>,
    /// Rings: points per step, split evenly across rings.
    #[arg(long)]
    pts_per_step: Option<usize>,
    /// Rings: comma-separated radii.
    #[arg(long, value_delimiter = ',')]
    radii: Option<Vec<f64>>,
    /// Rings: whether rings wander independently or together.
    #[arg(long, value_enum)]
    motion: Option<Motion>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    truth_out: PathBuf,
    /// Optional birth/death log.
    #[arg(long)]
    events_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ClusterArgs {
    /// Run configuration (JSON object).
    #[arg(long)]
    config: PathBuf,
    /// Input stream (JSON Lines).
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Per-point labels (JSON Lines).
    #[arg(long)]
    out: PathBuf,
    /// Per-step metrics (JSON Lines).
    #[arg(long)]
    metrics_out: Option<PathBuf>,
    /// Carried clusters after the last batch (JSON Lines).
    #[arg(long)]
    centers_out: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, env = "DYNOCLUST_SEED")]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, value_parser = parse_algorithm)]
    algo: dynoclust::Algorithm,
    /// `linear`, `rbf:<omega>`, `mst_rbf:<omega>` or a JSON kernel object.
    #[arg(long, value_parser = parse_kernel)]
    kernel: Option<dynoclust::KernelSpec>,
    /// JSON object with `lambda`, `t_q` and `k_tau` arrays.
    #[arg(long)]
    grid_file: PathBuf,
    /// JSON stream description, e.g. `{"kind": "gaussians", "steps": 30}`.
    #[arg(long)]
    stream_cfg: PathBuf,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    #[arg(long, default_value_t = dynoclust::config::DEFAULT_BUDGET)]
    budget: usize,
    #[arg(long, default_value_t = dynoclust::config::DEFAULT_MAX_ITERS)]
    max_iters: usize,
    #[arg(long, env = "DYNOCLUST_SEED", default_value_t = 0)]
    seed: u64,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AuditArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Metrics written by `cluster`; every audited objective must match
    /// its reported value within 1e-8 relative.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

fn parse_algorithm(s: &str) -> Result<dynoclust::Algorithm, String> {
    s.parse().map_err(|e: dynoclust::Error| e.to_string())
}

fn parse_kernel(s: &str) -> Result<dynoclust::KernelSpec, String> {
    use dynoclust::KernelSpec;
    if s.trim_start().starts_with('{') {
        return serde_json::from_str(s).map_err(|e| e.to_string());
    }
    let (name, omega) = match s.split_once(':') {
        Some((n, w)) => (n, Some(w.parse::<f64>().map_err(|e| format!("bad omega {w:?}: {e}"))?)),
        None => (s, None),
    };
    let spec = match (name, omega) {
        ("linear", None) => KernelSpec::Linear,
        ("rbf", Some(omega)) => KernelSpec::Rbf { omega },
        ("mst_rbf", Some(omega)) => KernelSpec::MstRbf { omega },
        _ => return Err(format!("unknown kernel {s:?}; expected linear, rbf:<omega> or mst_rbf:<omega>")),
    };
    spec.validate().map_err(|e| e.to_string())?;
    Ok(spec)
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    let result: Result<(), Failure> = match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Cluster(a) => commands::cluster(a),
        Command::Eval(a) => commands::eval(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Audit(a) => commands::audit(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f:#}");
            ExitCode::from(f.exit_code())
        }
    }
}
