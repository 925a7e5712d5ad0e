//! Ground-truth-preserving perturbations and the invariance harness.
//!
//! The main perturbation plays a clip back to back `k` times. Nothing new
//! enters the scene, so the unique-object count must not change; a counting
//! system that changes its answer has learned something about the shape of
//! the benchmark rather than about the scene.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{EmbeddingError, FrameRecord, FrameStream};
use crate::metrics::{self, MraConfig};
use crate::segment::{AnnotatedStream, CountingInstance, CountingModel, SegmentError};
use crate::types::SceneError;

pub const DEFAULT_SWEEP: [usize; 5] = [1, 2, 3, 4, 5];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerturbError {
    #[error("stream is empty")]
    EmptyStream,
    #[error("repeat factor must be >= 1, got {0}")]
    InvalidRepeat(usize),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepeatSpec {
    pub k: usize,
    /// Record the first frame of every copy after the first.
    pub boundary_marker: bool,
}

impl RepeatSpec {
    pub fn new(k: usize) -> Result<Self, PerturbError> {
        if k == 0 {
            return Err(PerturbError::InvalidRepeat(k));
        }
        Ok(Self {
            k,
            boundary_marker: false,
        })
    }

    /// Seam positions (1-based frame index starting each copy after the
    /// first) for a stream of `n` frames.
    pub fn seams(&self, n: usize) -> Vec<usize> {
        if !self.boundary_marker {
            return Vec::new();
        }
        (1..self.k).map(|j| j * n + 1).collect()
    }
}

/// Concatenates `s` with itself so the result has `k·N` frames.
///
/// Frame `j·N + t` carries the embedding of frame `t`; indices run `1..=kN`
/// and each copy's timestamps continue after the previous copy.
pub fn repeat_stream(s: &FrameStream, k: usize) -> Result<FrameStream, PerturbError> {
    if k == 0 {
        return Err(PerturbError::InvalidRepeat(k));
    }
    if s.is_empty() {
        return Err(PerturbError::EmptyStream);
    }
    let n = s.len();
    let frames = s.frames();
    let span = frames[n - 1].timestamp_s - frames[0].timestamp_s + 1.0 / s.fps();
    let mut out = Vec::with_capacity(n * k);
    for j in 0..k {
        for f in frames {
            out.push(FrameRecord {
                index: j * n + f.index,
                timestamp_s: if j == 0 {
                    f.timestamp_s
                } else {
                    f.timestamp_s + j as f64 * span
                },
                embedding: f.embedding.clone(),
            });
        }
    }
    Ok(FrameStream::new(out, s.fps())?)
}

pub fn repeat_annotated(s: &AnnotatedStream, k: usize) -> Result<AnnotatedStream, PerturbError> {
    let stream = repeat_stream(s.stream(), k)?;
    let objects: Vec<_> = (0..k).flat_map(|_| s.objects().iter().cloned()).collect();
    Ok(AnnotatedStream::new(stream, objects)?)
}

/// Repeats the rendered stream and records the repeat in the scene.
pub fn repeat_instance(inst: &CountingInstance, k: usize) -> Result<CountingInstance, PerturbError> {
    Ok(CountingInstance {
        instance_id: inst.instance_id.clone(),
        scene: inst.scene.repeated(k)?,
        stream: repeat_annotated(&inst.stream, k)?,
    })
}

type Transform = dyn Fn(&CountingInstance) -> Result<CountingInstance, PerturbError> + Sync;

/// A transformation with a known effect on the ground truth and a
/// predicate that a sound model's predictions must satisfy.
pub struct InvarianceCase {
    pub name: String,
    /// Repeat factor the case applies, for reporting.
    pub k: Option<usize>,
    pub transform: Box<Transform>,
    pub gold_map: Box<dyn Fn(u64) -> u64 + Sync>,
    /// `(pred_before, pred_after) -> holds`
    pub predicate: Box<dyn Fn(u64, u64) -> bool + Sync>,
}

impl InvarianceCase {
    /// Play the clip `k` times; gold and prediction must be unchanged.
    pub fn vsc_repeat(k: usize) -> Result<Self, PerturbError> {
        RepeatSpec::new(k)?;
        Ok(Self {
            name: format!("vsc_repeat_k{k}"),
            k: Some(k),
            transform: Box::new(move |inst| repeat_instance(inst, k)),
            gold_map: Box::new(|g| g),
            predicate: Box::new(|before, after| before == after),
        })
    }

    pub fn identity() -> Self {
        Self {
            name: "identity".into(),
            k: Some(1),
            transform: Box::new(|inst| Ok(inst.clone())),
            gold_map: Box::new(|g| g),
            predicate: Box::new(|before, after| before == after),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceRow {
    pub instance_id: String,
    pub gold_before: u64,
    pub gold_after: u64,
    /// `gold_map(gold_before) == gold_after`; false means the case itself
    /// is broken for this instance.
    pub gold_consistent: bool,
    pub pred_before: Option<u64>,
    pub pred_after: Option<u64>,
    pub holds: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub case: String,
    pub k: Option<usize>,
    pub model: String,
    pub rows: Vec<InvarianceRow>,
    pub violations: usize,
    pub evaluated: usize,
    pub violation_rate: f64,
    pub gold_mismatches: usize,
    pub mra_before: Option<f64>,
    pub mra_after: Option<f64>,
}

/// Runs `model` on each instance before and after the case's transform.
/// Model and transform failures are recorded per row and do not stop the
/// sweep.
pub fn run_invariance(
    case: &InvarianceCase,
    model: &dyn CountingModel,
    instances: &[CountingInstance],
    mra_cfg: &MraConfig,
) -> InvarianceReport {
    let rows: Vec<InvarianceRow> = instances
        .par_iter()
        .map(|inst| evaluate_one(case, model, inst))
        .collect();
    let evaluated: Vec<&InvarianceRow> = rows.iter().filter(|r| r.holds.is_some()).collect();
    let violations = evaluated.iter().filter(|r| r.holds == Some(false)).count();
    let pairs = |pick: fn(&InvarianceRow) -> (u64, u64)| -> Option<f64> {
        let pairs: Vec<(u64, u64)> = evaluated.iter().map(|r| pick(r)).collect();
        metrics::mean_mra(&pairs, mra_cfg).ok()
    };
    InvarianceReport {
        case: case.name.clone(),
        k: case.k,
        model: model.name().to_string(),
        violations,
        evaluated: evaluated.len(),
        violation_rate: if evaluated.is_empty() {
            0.0
        } else {
            violations as f64 / evaluated.len() as f64
        },
        gold_mismatches: rows.iter().filter(|r| !r.gold_consistent).count(),
        mra_before: pairs(|r| (r.pred_before.unwrap(), r.gold_before)),
        mra_after: pairs(|r| (r.pred_after.unwrap(), r.gold_after)),
        rows,
    }
}

fn evaluate_one(case: &InvarianceCase, model: &dyn CountingModel, inst: &CountingInstance) -> InvarianceRow {
    let gold_before = inst.gold();
    let mut row = InvarianceRow {
        instance_id: inst.instance_id.clone(),
        gold_before,
        gold_after: gold_before,
        gold_consistent: true,
        pred_before: None,
        pred_after: None,
        holds: None,
        error: None,
    };
    let transformed = match (case.transform)(inst) {
        Ok(t) => t,
        Err(e) => {
            row.error = Some(format!("transform: {e}"));
            return row;
        }
    };
    row.gold_after = transformed.gold();
    row.gold_consistent = (case.gold_map)(gold_before) == row.gold_after;
    match model.predict(inst) {
        Ok(p) => row.pred_before = Some(p),
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    }
    match model.predict(&transformed) {
        Ok(p) => row.pred_after = Some(p),
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    }
    row.holds = Some((case.predicate)(row.pred_before.unwrap(), row.pred_after.unwrap()));
    row
}

/// One line of the repeat-sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub instance_id: String,
    pub k: usize,
    pub pred: u64,
    pub gold: u64,
    pub mra: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub k: usize,
    pub mean_mra: f64,
    pub mean_pred: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatSweep {
    pub model: String,
    pub reports: Vec<InvarianceReport>,
    pub rows: Vec<SweepRow>,
    pub points: Vec<SweepPoint>,
}

/// Runs the repeat case for every `k` in `ks` and tabulates the predictions
/// on the repeated streams.
pub fn repeat_sweep(
    model: &dyn CountingModel,
    instances: &[CountingInstance],
    ks: &[usize],
    mra_cfg: &MraConfig,
) -> Result<RepeatSweep, PerturbError> {
    let mut reports = Vec::with_capacity(ks.len());
    let mut rows = Vec::new();
    let mut points = Vec::with_capacity(ks.len());
    for &k in ks {
        let case = InvarianceCase::vsc_repeat(k)?;
        let report = run_invariance(&case, model, instances, mra_cfg);
        let mut block = Vec::new();
        for r in &report.rows {
            if let Some(pred) = r.pred_after {
                block.push(SweepRow {
                    instance_id: r.instance_id.clone(),
                    k,
                    pred,
                    gold: r.gold_after,
                    mra: metrics::mra(pred, r.gold_after, mra_cfg).unwrap_or(f64::NAN),
                });
            }
        }
        block.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
        if !block.is_empty() {
            let pairs: Vec<_> = block.iter().map(|r| (r.pred, r.gold)).collect();
            points.push(SweepPoint {
                k,
                mean_mra: metrics::mean_mra(&pairs, mra_cfg).unwrap_or(f64::NAN),
                mean_pred: block.iter().map(|r| r.pred as f64).sum::<f64>() / block.len() as f64,
                n: block.len(),
            });
        }
        rows.extend(block);
        reports.push(report);
    }
    Ok(RepeatSweep {
        model: model.name().to_string(),
        reports,
        rows,
        points,
    })
}
