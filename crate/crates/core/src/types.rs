//! Questions, counting scenes and evaluation reports.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{self, MraConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuestionError {
    #[error("expected 4 auxiliaries, got {0}")]
    AuxiliaryCount(usize),
    #[error("expected 4 options, got {0}")]
    OptionCount(usize),
    #[error("option {option} is not a permutation of 1..=4: {values:?}")]
    NotPermutation { option: usize, values: Vec<u8> },
    #[error("options {0} and {1} are identical")]
    DuplicateOption(usize, usize),
    #[error("gold option {0} out of range 1..=4")]
    GoldOutOfRange(usize),
}

/// A candidate ordering: `perm[u]` is the 1-based auxiliary index of the
/// `u`-th needle in time.
pub type Ordering4 = [u8; 4];

/// An order-recall multiple-choice question over four auxiliaries.
///
/// Options are validated permutations, so scoring never needs to re-check
/// them. `gold_option` is 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRecallQuestion", into = "RawRecallQuestion")]
pub struct RecallQuestion {
    question_id: String,
    object_text: String,
    auxiliaries: [String; 4],
    options: [Ordering4; 4],
    gold_option: usize,
    raw_question: Option<String>,
}

/// Wire form of [`RecallQuestion`]; validation happens in `TryFrom`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRecallQuestion {
    pub question_id: String,
    pub object: String,
    pub auxiliaries: Vec<String>,
    pub options: Vec<Vec<u8>>,
    pub gold_option: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_question: Option<String>,
}

impl RecallQuestion {
    pub fn new(
        question_id: impl Into<String>,
        object_text: impl Into<String>,
        auxiliaries: Vec<String>,
        options: Vec<Vec<u8>>,
        gold_option: usize,
        raw_question: Option<String>,
    ) -> Result<Self, QuestionError> {
        let aux_len = auxiliaries.len();
        let auxiliaries: [String; 4] = auxiliaries
            .try_into()
            .map_err(|_| QuestionError::AuxiliaryCount(aux_len))?;
        if options.len() != 4 {
            return Err(QuestionError::OptionCount(options.len()));
        }
        let mut parsed = [[0u8; 4]; 4];
        for (k, opt) in options.iter().enumerate() {
            parsed[k] = parse_permutation(opt).ok_or_else(|| QuestionError::NotPermutation {
                option: k + 1,
                values: opt.clone(),
            })?;
        }
        for a in 0..4 {
            for b in a + 1..4 {
                if parsed[a] == parsed[b] {
                    return Err(QuestionError::DuplicateOption(a + 1, b + 1));
                }
            }
        }
        if !(1..=4).contains(&gold_option) {
            return Err(QuestionError::GoldOutOfRange(gold_option));
        }
        Ok(Self {
            question_id: question_id.into(),
            object_text: object_text.into(),
            auxiliaries,
            options: parsed,
            gold_option,
            raw_question,
        })
    }

    pub fn question_id(&self) -> &str {
        &self.question_id
    }

    pub fn object_text(&self) -> &str {
        &self.object_text
    }

    pub fn auxiliaries(&self) -> &[String; 4] {
        &self.auxiliaries
    }

    pub fn options(&self) -> &[Ordering4; 4] {
        &self.options
    }

    pub fn gold_option(&self) -> usize {
        self.gold_option
    }

    pub fn raw_question(&self) -> Option<&str> {
        self.raw_question.as_deref()
    }
}

fn parse_permutation(values: &[u8]) -> Option<Ordering4> {
    let perm: Ordering4 = values.try_into().ok()?;
    let mut seen = [false; 4];
    for &v in &perm {
        let slot = usize::from(v).checked_sub(1)?;
        if slot >= 4 || seen[slot] {
            return None;
        }
        seen[slot] = true;
    }
    Some(perm)
}

impl TryFrom<RawRecallQuestion> for RecallQuestion {
    type Error = QuestionError;

    fn try_from(raw: RawRecallQuestion) -> Result<Self, Self::Error> {
        RecallQuestion::new(
            raw.question_id,
            raw.object,
            raw.auxiliaries,
            raw.options,
            raw.gold_option,
            raw.raw_question,
        )
    }
}

impl From<RecallQuestion> for RawRecallQuestion {
    fn from(q: RecallQuestion) -> Self {
        RawRecallQuestion {
            question_id: q.question_id,
            object: q.object_text,
            auxiliaries: q.auxiliaries.to_vec(),
            options: q.options.iter().map(|o| o.to_vec()).collect(),
            gold_option: q.gold_option,
            raw_question: q.raw_question,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub instance_id: String,
    pub category: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub room_id: String,
    pub dwell_frames: usize,
    pub objects: Vec<ObjectInstance>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("scene has no rooms")]
    NoRooms,
    #[error("room {0} has zero dwell frames")]
    ZeroDwell(String),
    #[error("instance id {0} appears more than once")]
    DuplicateInstance(String),
    #[error("repeat factor must be >= 1")]
    ZeroRepeat,
}

/// A multi-room walkthrough with explicit object identities.
///
/// `repeat_factor` records how many times the room sequence is played back
/// to back; it never changes the set of objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountingScene {
    pub rooms: Vec<Room>,
    pub target_category: String,
    pub repeat_factor: usize,
}

impl CountingScene {
    pub fn new(rooms: Vec<Room>, target_category: impl Into<String>, repeat_factor: usize) -> Result<Self, SceneError> {
        let scene = Self {
            rooms,
            target_category: target_category.into(),
            repeat_factor,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.rooms.is_empty() {
            return Err(SceneError::NoRooms);
        }
        if self.repeat_factor == 0 {
            return Err(SceneError::ZeroRepeat);
        }
        let mut ids = BTreeSet::new();
        for room in &self.rooms {
            if room.dwell_frames == 0 {
                return Err(SceneError::ZeroDwell(room.room_id.clone()));
            }
            for obj in &room.objects {
                if !ids.insert(obj.instance_id.as_str()) {
                    return Err(SceneError::DuplicateInstance(obj.instance_id.clone()));
                }
            }
        }
        Ok(())
    }

    /// The same layout played back `k` times in a row.
    pub fn repeated(&self, k: usize) -> Result<Self, SceneError> {
        if k == 0 {
            return Err(SceneError::ZeroRepeat);
        }
        Ok(Self {
            repeat_factor: self.repeat_factor * k,
            ..self.clone()
        })
    }

    /// Frames in one playback of the room sequence.
    pub fn frames_per_pass(&self) -> usize {
        self.rooms.iter().map(|r| r.dwell_frames).sum()
    }

    pub fn total_frames(&self) -> usize {
        self.frames_per_pass() * self.repeat_factor
    }
}

/// What a report row was evaluated under.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Condition {
    pub split: String,
    pub repeat_factor: usize,
}

impl Condition {
    pub fn key(&self) -> String {
        format!("{}@k{}", self.split, self.repeat_factor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Accuracy,
    Mra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub instance_id: String,
    pub condition: Condition,
    pub prediction: u64,
    pub gold: u64,
    /// Free-form per-row diagnostics (option scores, segment traces...).
    #[serde(default)]
    pub breakdown: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub metric: MetricKind,
    pub value: f64,
    pub n: usize,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("aggregate for {0} does not match its rows")]
    StaleAggregate(String),
    #[error("aggregate for {0} has no rows")]
    OrphanAggregate(String),
    #[error(transparent)]
    Metric(#[from] metrics::MetricError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Per-instance predictions plus aggregates keyed by condition.
///
/// Aggregates are always derived from the rows; [`EvalReport::to_json`]
/// re-derives them and refuses to serialize a report that disagrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: MetricKind,
    /// Echo of the configuration that produced the report.
    pub config: serde_json::Value,
    pub per_instance: Vec<ReportRow>,
    pub aggregates: BTreeMap<String, Aggregate>,
}

impl EvalReport {
    /// Sorts rows by `(condition, instance_id)` and computes aggregates.
    pub fn from_rows(
        metric: MetricKind,
        config: serde_json::Value,
        mut rows: Vec<ReportRow>,
    ) -> Result<Self, ReportError> {
        rows.sort_by(|a, b| (&a.condition, &a.instance_id).cmp(&(&b.condition, &b.instance_id)));
        let aggregates = compute_aggregates(metric, &rows)?;
        Ok(Self {
            metric,
            config,
            per_instance: rows,
            aggregates,
        })
    }

    pub fn verify(&self) -> Result<(), ReportError> {
        let fresh = compute_aggregates(self.metric, &self.per_instance)?;
        for (key, agg) in &self.aggregates {
            match fresh.get(key) {
                None => return Err(ReportError::OrphanAggregate(key.clone())),
                Some(f) if f != agg => return Err(ReportError::StaleAggregate(key.clone())),
                Some(_) => {}
            }
        }
        if let Some(key) = fresh.keys().find(|k| !self.aggregates.contains_key(*k)) {
            return Err(ReportError::StaleAggregate(key.clone()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, ReportError> {
        self.verify()?;
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn compute_aggregates(metric: MetricKind, rows: &[ReportRow]) -> Result<BTreeMap<String, Aggregate>, ReportError> {
    let mut groups: BTreeMap<String, (Vec<u64>, Vec<u64>)> = BTreeMap::new();
    for row in rows {
        let entry = groups.entry(row.condition.key()).or_default();
        entry.0.push(row.prediction);
        entry.1.push(row.gold);
    }
    let cfg = MraConfig::default();
    groups
        .into_iter()
        .map(|(key, (preds, golds))| {
            let value = match metric {
                MetricKind::Accuracy => metrics::accuracy(&preds, &golds)?,
                MetricKind::Mra => {
                    let pairs: Vec<_> = preds.iter().copied().zip(golds.iter().copied()).collect();
                    metrics::mean_mra(&pairs, &cfg)?
                }
            };
            Ok((
                key,
                Aggregate {
                    metric,
                    value,
                    n: preds.len(),
                },
            ))
        })
        .collect()
}
