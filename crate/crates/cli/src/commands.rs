use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::Path;

use anyhow::anyhow;
use dynoclust::datagen::RingMotion;
use dynoclust::eval::{sweep as run_sweep, write_sweep_csv, SweepGrid};
use dynoclust::format::{
    align_labels, center_records, point_id, read_labels, read_records, read_stream, write_labels, write_records,
    write_stream, LabelBatch, MetricsRecord,
};
use dynoclust::{
    consistent_accuracy, cost_audit, Batch, DMeansConfig, EngineSpec, GaussianStreamCfg, RingStreamCfg, RunConfig,
    StreamSpec, Tracker,
};
use log::info;

use crate::failure::{Classify, Failure};
use crate::{AuditArgs, ClusterArgs, EvalArgs, GenArgs, Motion, StreamKind, SweepArgs};

/// Relative tolerance of `audit` when comparing against reported objectives.
const AUDIT_TOL: f64 = 1e-8;

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path).map(BufReader::new).input_ctx(|| format!("cannot open {}", path.display()))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).input_ctx(|| format!("cannot read {}", path.display()))
}

fn load_stream(path: &Path) -> Result<Vec<Batch>, Failure> {
    read_stream(open(path)?).input_ctx(|| format!("{}", path.display()))
}

fn load_labels(path: &Path) -> Result<Vec<LabelBatch>, Failure> {
    read_labels(open(path)?).input_ctx(|| format!("{}", path.display()))
}

fn load_config(path: &Path) -> Result<EngineSpec, Failure> {
    let text = read_text(path)?;
    RunConfig::from_json(&text)
        .and_then(|c| c.engine())
        .config_ctx(|| format!("{}", path.display()))
}

/// Serializes into memory first so that nothing is written unless the
/// whole output could be produced.
fn render(f: impl FnOnce(&mut Vec<u8>) -> dynoclust::Result<()>) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    f(&mut buf).runtime_ctx(|| "cannot serialize output".into())?;
    Ok(buf)
}

fn write_all(outputs: &[(&Path, &[u8])]) -> Result<(), Failure> {
    for (path, bytes) in outputs {
        fs::write(path, bytes).input_ctx(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn stream_reference(batches: &[Batch]) -> Vec<LabelBatch> {
    batches
        .iter()
        .map(|b| LabelBatch { t: b.t, ids: (0..b.len()).map(|i| point_id(b, i)).collect(), clusters: vec![0; b.len()] })
        .collect()
}

pub fn gen(a: GenArgs) -> Result<(), Failure> {
    let spec = match a.kind {
        StreamKind::Gaussians => {
            let d = GaussianStreamCfg::default();
            StreamSpec::Gaussians(GaussianStreamCfg {
                n_clusters: a.clusters.unwrap_or(d.n_clusters),
                pts_per_cluster: a.pts_per_cluster.unwrap_or(d.pts_per_cluster),
                noise_sd: a.noise_sd.unwrap_or(d.noise_sd),
                walk_sd: a.walk_sd.unwrap_or(d.walk_sd),
                death_prob: a.death_prob.unwrap_or(d.death_prob),
                steps: a.steps.unwrap_or(d.steps),
                seed: a.seed,
            })
        }
        StreamKind::Rings => {
            let d = RingStreamCfg::default();
            StreamSpec::Rings(RingStreamCfg {
                pts_per_step: a.pts_per_step.unwrap_or(d.pts_per_step),
                radii: a.radii.clone().unwrap_or(d.radii),
                noise_sd: a.noise_sd.unwrap_or(d.noise_sd),
                walk_sd: a.walk_sd.unwrap_or(d.walk_sd),
                steps: a.steps.unwrap_or(d.steps),
                motion: match a.motion {
                    Some(Motion::Shared) => RingMotion::Shared,
                    Some(Motion::Independent) => RingMotion::Independent,
                    None => d.motion,
                },
                seed: a.seed,
            })
        }
    };
    let stream = spec.generate().config_ctx(|| "invalid generator settings".into())?;

    let points = render(|w| write_stream(w, &stream.batches))?;
    let truth = render(|w| write_labels(w, &stream.batches, &stream.truth))?;
    let events = match &a.events_out {
        Some(_) => Some(render(|w| write_records(w, &stream.events))?),
        None => None,
    };
    let mut outputs: Vec<(&Path, &[u8])> = vec![(&a.out, &points), (&a.truth_out, &truth)];
    if let (Some(p), Some(e)) = (&a.events_out, &events) {
        outputs.push((p, e));
    }
    write_all(&outputs)?;

    let n_points: usize = stream.batches.iter().map(Batch::len).sum();
    let clusters: BTreeSet<u64> = stream.truth.iter().flatten().copied().collect();
    println!("steps {}, points {n_points}, clusters {}", stream.batches.len(), clusters.len());
    Ok(())
}

pub fn cluster(a: ClusterArgs) -> Result<(), Failure> {
    let mut spec = load_config(&a.config)?;
    if let Some(seed) = a.seed {
        spec.cfg.seed = seed;
    }
    let batches = load_stream(&a.input)?;
    let mut tracker = Tracker::new(spec).config_ctx(|| "invalid run configuration".into())?;
    let mut labels = Vec::with_capacity(batches.len());
    let mut metrics = Vec::with_capacity(batches.len());
    for b in &batches {
        let step = tracker.step(b).runtime_ctx(|| format!("clustering batch t={}", b.t))?;
        info!("t={} objective={} k_active={} k_total={}", b.t, step.result.objective, step.result.active_set.len(), step.k_total);
        metrics.push(MetricsRecord::from_step(b.t, &step));
        labels.push(step.result.labels);
    }

    let label_bytes = render(|w| write_labels(w, &batches, &labels))?;
    let mut outputs: Vec<(&Path, Vec<u8>)> = vec![(&a.out, label_bytes)];
    if let Some(p) = &a.metrics_out {
        outputs.push((p, render(|w| write_records(w, &metrics))?));
    }
    if let Some(p) = &a.centers_out {
        let centers = tracker.state().map(center_records).unwrap_or_default();
        outputs.push((p, render(|w| write_records(w, &centers))?));
    }
    let refs: Vec<(&Path, &[u8])> = outputs.iter().map(|(p, b)| (*p, b.as_slice())).collect();
    write_all(&refs)
}

pub fn eval(a: EvalArgs) -> Result<(), Failure> {
    let truth = load_labels(&a.truth)?;
    let pred = load_labels(&a.pred)?;
    let aligned_pred = align_labels(&truth, &pred).input_ctx(|| format!("{} does not cover {}", a.pred.display(), a.truth.display()))?;
    let aligned_truth: Vec<Vec<u64>> = truth.iter().map(|b| b.clusters.clone()).collect();
    let report = consistent_accuracy(&aligned_pred, &aligned_truth).runtime_ctx(|| "scoring failed".into())?;

    let mut out = String::from("t,points,accuracy\n");
    for (b, acc) in truth.iter().zip(&report.per_step_accuracy) {
        out.push_str(&format!("{},{},{acc}\n", b.t, b.ids.len()));
    }
    let total: usize = truth.iter().map(|b| b.ids.len()).sum();
    out.push_str(&format!("all,{total},{}\n", report.overall));
    io::stdout().write_all(out.as_bytes()).input_ctx(|| "cannot write to stdout".into())
}

pub fn sweep(a: SweepArgs) -> Result<(), Failure> {
    let grid: SweepGrid = serde_json::from_str(&read_text(&a.grid_file)?)
        .config_ctx(|| format!("{}: invalid grid", a.grid_file.display()))?;
    let stream: StreamSpec = serde_json::from_str(&read_text(&a.stream_cfg)?)
        .config_ctx(|| format!("{}: invalid stream description", a.stream_cfg.display()))?;
    let (lambda, t_q, k_tau) = grid.cells().next().ok_or_else(|| Failure::config(anyhow!("the grid has no cells")))?;
    if a.trials == 0 {
        return Err(Failure::config(anyhow!("--trials must be at least 1")));
    }
    let template = DMeansConfig::from_reparam(lambda, t_q, k_tau)
        .map(|c| c.with_restarts(a.restarts).with_budget(a.budget).with_max_iters(a.max_iters).with_seed(a.seed))
        .and_then(|cfg| EngineSpec::new(a.algo, a.kernel, cfg))
        .config_ctx(|| "invalid sweep settings".into())?;
    for cell in grid.cells() {
        DMeansConfig::from_reparam(cell.0, cell.1, cell.2).config_ctx(|| format!("grid cell {cell:?}"))?;
    }
    stream.generate().config_ctx(|| "invalid stream description".into())?;

    let rows = run_sweep(&template, &grid, a.trials, &stream).runtime_ctx(|| "sweep failed".into())?;
    let csv = render(|w| write_sweep_csv(w, &rows))?;
    match &a.out {
        Some(p) => write_all(&[(p, &csv)]),
        None => io::stdout().write_all(&csv).input_ctx(|| "cannot write to stdout".into()),
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= AUDIT_TOL * a.abs().max(b.abs()).max(1.0)
}

pub fn audit(a: AuditArgs) -> Result<(), Failure> {
    let spec = load_config(&a.config)?;
    let batches = load_stream(&a.input)?;
    let labels = load_labels(&a.labels)?;
    let aligned = align_labels(&stream_reference(&batches), &labels)
        .input_ctx(|| format!("{} does not cover {}", a.labels.display(), a.input.display()))?;
    let metrics: Option<Vec<MetricsRecord>> = match &a.metrics {
        Some(p) => {
            let rows = read_records(open(p)?).input_ctx(|| format!("{}", p.display()))?;
            Some(rows.into_iter().map(|(_, r)| r).collect())
        }
        None => None,
    };
    let report = cost_audit(&spec, &batches, &aligned).runtime_ctx(|| "audit failed".into())?;

    let mut out = String::new();
    let mut mismatches = 0usize;
    match &metrics {
        None => {
            out.push_str("t,audit\n");
            for (b, v) in batches.iter().zip(&report.per_step) {
                out.push_str(&format!("{},{v}\n", b.t));
            }
            out.push_str(&format!("total,{}\n", report.total));
        }
        Some(m) => {
            out.push_str("t,audit,reported,status\n");
            if m.len() != batches.len() {
                mismatches += 1;
                log::error!("{} metrics rows for {} batches", m.len(), batches.len());
            }
            for (b, v) in batches.iter().zip(&report.per_step) {
                let reported = m.iter().find(|r| r.t == b.t).map(|r| r.objective);
                let ok = reported.is_some_and(|r| close(*v, r));
                mismatches += usize::from(!ok);
                let shown = reported.map_or_else(String::new, |r| r.to_string());
                out.push_str(&format!("{},{v},{shown},{}\n", b.t, if ok { "ok" } else { "MISMATCH" }));
            }
            let reported: f64 = m.iter().map(|r| r.objective).sum();
            out.push_str(&format!("total,{},{reported},{}\n", report.total, if mismatches == 0 { "ok" } else { "MISMATCH" }));
        }
    }
    io::stdout().write_all(out.as_bytes()).input_ctx(|| "cannot write to stdout".into())?;
    if mismatches > 0 {
        return Err(Failure::runtime(anyhow!("{mismatches} audited objective(s) disagree with {}", a.metrics.as_ref().unwrap().display())));
    }
    Ok(())
}
