//! JSON Lines file formats.
//!
//! * stream: `{"t": 0, "id": "0-3", "x": [0.1, 0.2]}` per point,
//! * labels and truth: `{"t": 0, "id": "0-3", "cluster": 4}` per point,
//! * metrics: `{"t", "objective", "iters", "k_active", "k_total", "seconds"}` per batch,
//! * centers: one [`CenterRecord`] per carried cluster of the final state.
//!
//! A batch is a maximal run of lines with equal `t`; `t` must strictly
//! increase from one batch to the next.  Blank lines are ignored.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dmeans::{Batch, ClusterId};
use crate::engine::{StepOutput, TrackerState};
use crate::error::{Error, Result};
use crate::sparse::SupportPoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointRecord {
    pub t: u64,
    pub id: String,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRecord {
    pub t: u64,
    pub id: String,
    pub cluster: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub t: u64,
    pub objective: f64,
    pub iters: usize,
    pub k_active: usize,
    pub k_total: usize,
    pub seconds: f64,
}

impl MetricsRecord {
    pub fn from_step(t: u64, step: &StepOutput) -> Self {
        MetricsRecord {
            t,
            objective: step.result.objective,
            iters: step.result.iterations,
            k_active: step.result.active_set.len(),
            k_total: step.k_total,
            seconds: step.seconds,
        }
    }
}

/// A carried cluster of the final state.  `support` is empty for the
/// linear engine, whose `center` is exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterRecord {
    pub id: ClusterId,
    pub weight: f64,
    pub staleness: u32,
    pub center: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub support: Vec<SupportPoint>,
}

pub fn center_records(state: &TrackerState) -> Vec<CenterRecord> {
    match state {
        TrackerState::Linear(s) => s
            .old_clusters
            .iter()
            .map(|c| CenterRecord {
                id: c.id,
                weight: c.weight,
                staleness: c.staleness,
                center: c.phi.clone(),
                support: Vec::new(),
            })
            .collect(),
        TrackerState::Kernel(s) => s
            .centers
            .iter()
            .map(|c| CenterRecord {
                id: c.id,
                weight: c.weight,
                staleness: c.staleness,
                center: c.input_space_center(s.dim),
                support: c.support.clone(),
            })
            .collect(),
    }
}

/// Reads one JSON value per non-blank line, tagging errors with the
/// 1-based line number.
pub fn read_records<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Format { line: k + 1, message: e.to_string() })?;
        out.push((k + 1, rec));
    }
    Ok(out)
}

pub fn write_records<T: Serialize, W: Write>(mut writer: W, records: impl IntoIterator<Item = T>) -> Result<()> {
    for r in records {
        let text = serde_json::to_string(&r).map_err(|e| Error::Io(e.to_string()))?;
        writeln!(writer, "{text}")?;
    }
    Ok(())
}

/// Groups `(line, t, item)` into maximal runs of equal `t`.
fn group_by_t<T>(rows: Vec<(usize, u64, T)>) -> Result<Vec<(u64, Vec<(usize, T)>)>> {
    let mut groups: Vec<(u64, Vec<(usize, T)>)> = Vec::new();
    for (line, t, item) in rows {
        match groups.last_mut() {
            Some((last, items)) if *last == t => items.push((line, item)),
            Some((last, _)) if t < *last => {
                return Err(Error::Format { line, message: format!("t = {t} after t = {last}; batches must be in increasing order") })
            }
            _ => groups.push((t, vec![(line, item)])),
        }
    }
    Ok(groups)
}

pub fn read_stream<R: BufRead>(reader: R) -> Result<Vec<Batch>> {
    let rows: Vec<(usize, PointRecord)> = read_records(reader)?;
    let mut dim: Option<usize> = None;
    for (line, r) in &rows {
        if r.x.is_empty() || r.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format { line: *line, message: "x must be a non-empty list of finite numbers".into() });
        }
        match dim {
            None => dim = Some(r.x.len()),
            Some(d) if d != r.x.len() => {
                return Err(Error::Format { line: *line, message: format!("expected {d} coordinates, got {}", r.x.len()) })
            }
            _ => {}
        }
    }
    let groups = group_by_t(rows.into_iter().map(|(l, r)| (l, r.t, r)).collect())?;
    groups
        .into_iter()
        .map(|(t, items)| {
            let first_line = items[0].0;
            let (ids, points): (Vec<String>, Vec<Vec<f64>>) = items.into_iter().map(|(_, r)| (r.id, r.x)).unzip();
            Batch::new(t, points)
                .and_then(|b| b.with_ids(ids))
                .map_err(|e| Error::Format { line: first_line, message: e.to_string() })
        })
        .collect()
}

pub fn write_stream<W: Write>(writer: W, batches: &[Batch]) -> Result<()> {
    let records = batches.iter().flat_map(|b| {
        b.points.iter().enumerate().map(move |(i, x)| PointRecord { t: b.t, id: point_id(b, i), x: x.clone() })
    });
    write_records(writer, records)
}

/// The id of point `i`, defaulting to its index.
pub fn point_id(batch: &Batch, i: usize) -> String {
    batch.point_ids.as_ref().map_or_else(|| i.to_string(), |ids| ids[i].clone())
}

/// Labels of one batch in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelBatch {
    pub t: u64,
    pub ids: Vec<String>,
    pub clusters: Vec<u64>,
}

pub fn read_labels<R: BufRead>(reader: R) -> Result<Vec<LabelBatch>> {
    let rows: Vec<(usize, LabelRecord)> = read_records(reader)?;
    let groups = group_by_t(rows.into_iter().map(|(l, r)| (l, r.t, r)).collect())?;
    Ok(groups
        .into_iter()
        .map(|(t, items)| {
            let (ids, clusters) = items.into_iter().map(|(_, r)| (r.id, r.cluster)).unzip();
            LabelBatch { t, ids, clusters }
        })
        .collect())
}

pub fn write_labels<W: Write>(writer: W, batches: &[Batch], labels: &[Vec<u64>]) -> Result<()> {
    if batches.len() != labels.len() {
        return Err(Error::LengthMismatch(format!("{} label sets for {} batches", labels.len(), batches.len())));
    }
    for (b, l) in batches.iter().zip(labels) {
        if b.len() != l.len() {
            return Err(Error::LengthMismatch(format!("batch t={} has {} points but {} labels", b.t, b.len(), l.len())));
        }
    }
    let records = batches.iter().zip(labels).flat_map(|(b, l)| {
        l.iter().enumerate().map(move |(i, c)| LabelRecord { t: b.t, id: point_id(b, i), cluster: *c })
    });
    write_records(writer, records)
}

/// Reorders `labels` to follow the point order of `reference`, matching
/// batches by `t` and points by id.
pub fn align_labels(reference: &[LabelBatch], labels: &[LabelBatch]) -> Result<Vec<Vec<u64>>> {
    if reference.len() != labels.len() {
        return Err(Error::LengthMismatch(format!("{} batches against {} reference batches", labels.len(), reference.len())));
    }
    reference
        .iter()
        .zip(labels)
        .map(|(r, l)| {
            if r.t != l.t {
                return Err(Error::LengthMismatch(format!("batch t={} has no counterpart (found t={})", r.t, l.t)));
            }
            if r.ids.len() != l.ids.len() {
                return Err(Error::LengthMismatch(format!("batch t={}: {} points against {}", r.t, l.ids.len(), r.ids.len())));
            }
            let index: std::collections::HashMap<&str, u64> =
                l.ids.iter().map(String::as_str).zip(l.clusters.iter().copied()).collect();
            r.ids
                .iter()
                .map(|id| {
                    index
                        .get(id.as_str())
                        .copied()
                        .ok_or_else(|| Error::LengthMismatch(format!("batch t={}: point {id:?} missing", r.t)))
                })
                .collect()
        })
        .collect()
}
