//! Surprise-based segment counting and the exact unique-count oracle.
//!
//! The segment counter cuts the stream wherever consecutive frames disagree
//! sharply, counts the distinct target objects inside each segment, and
//! sums the per-segment counts. There is no deduplication across segments,
//! so a room visited twice is counted twice.
//!
//! Surprise is `1 - cos(F_t, F_{t-1})`. With the adaptive rule a frame
//! fires when its surprise exceeds both `mean + c·std` of the last `window`
//! non-boundary surprise values and the absolute floor `min_surprise`.
//!
//! Boundary soundness: for rooms rendered as orthogonal clusters whose
//! per-frame noise has norm at most `rho`, in-room surprise between
//! consecutive frames is at most `1 - cos(step + 2·asin(rho))` (with `step`
//! the in-room drift angle), and a room change has surprise at least
//! `1 - sin(2·asin(rho))`. With `rho <= 0.1` and a drift step of at most
//! `π/14` these are ≤ 0.09 and ≥ 0.80, so the default floor of 0.5
//! separates them with no misses and no false alarms.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine, EmbeddingError, FrameStream};
use crate::types::{CountingScene, ObjectInstance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmentError {
    #[error("stream is empty")]
    EmptyStream,
    #[error("frame metadata missing: {0}")]
    MissingMetadata(String),
    #[error("invalid surprise config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ThresholdRule {
    /// Fire when surprise exceeds `tau`.
    Fixed { tau: f64 },
    /// Fire when surprise exceeds `max(mean + c·std, min_surprise)` over the
    /// trailing `window` non-boundary values.
    Adaptive { c: f64, window: usize, min_surprise: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurpriseConfig {
    pub threshold: ThresholdRule,
}

impl Default for SurpriseConfig {
    fn default() -> Self {
        Self {
            threshold: ThresholdRule::Adaptive {
                c: 3.0,
                window: 30,
                min_surprise: 0.5,
            },
        }
    }
}

impl SurpriseConfig {
    pub fn fixed(tau: f64) -> Self {
        Self {
            threshold: ThresholdRule::Fixed { tau },
        }
    }

    pub fn validate(&self) -> Result<(), SegmentError> {
        match self.threshold {
            ThresholdRule::Fixed { tau } if !(tau > 0.0 && tau <= 2.0) => {
                Err(SegmentError::InvalidConfig(format!("tau must be in (0, 2], got {tau}")))
            }
            ThresholdRule::Adaptive { window, .. } if window < 2 => Err(SegmentError::InvalidConfig(format!(
                "window must be >= 2, got {window}"
            ))),
            ThresholdRule::Adaptive { c, .. } if !(c.is_finite() && c >= 0.0) => {
                Err(SegmentError::InvalidConfig(format!("c must be >= 0, got {c}")))
            }
            ThresholdRule::Adaptive { min_surprise, .. } if !(0.0..=2.0).contains(&min_surprise) => Err(
                SegmentError::InvalidConfig(format!("min_surprise must be in [0, 2], got {min_surprise}")),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurpriseTrace {
    /// Surprise per frame; `values[0]` (frame 1) is always 0.
    pub values: Vec<f64>,
    /// 1-based indices of frames that start a new segment.
    pub boundaries: Vec<usize>,
}

pub fn surprise_signal(stream: &FrameStream, cfg: &SurpriseConfig) -> Result<SurpriseTrace, SegmentError> {
    cfg.validate()?;
    if stream.is_empty() {
        return Err(SegmentError::EmptyStream);
    }
    let frames = stream.frames();
    let mut values = Vec::with_capacity(frames.len());
    values.push(0.0);
    for pair in frames.windows(2) {
        values.push(1.0 - cosine(&pair[1].embedding, &pair[0].embedding)?);
    }

    let mut boundaries = Vec::new();
    match cfg.threshold {
        ThresholdRule::Fixed { tau } => {
            for (i, &s) in values.iter().enumerate().skip(1) {
                if s > tau {
                    boundaries.push(i + 1);
                }
            }
        }
        ThresholdRule::Adaptive {
            c,
            window,
            min_surprise,
        } => {
            let mut background: std::collections::VecDeque<f64> = std::collections::VecDeque::with_capacity(window);
            background.push_back(values[0]);
            for (i, &s) in values.iter().enumerate().skip(1) {
                let n = background.len() as f64;
                let mean = background.iter().sum::<f64>() / n;
                let var = background.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                let threshold = (mean + c * var.sqrt()).max(min_surprise);
                if s > threshold {
                    boundaries.push(i + 1);
                } else {
                    if background.len() == window {
                        background.pop_front();
                    }
                    background.push_back(s);
                }
            }
        }
    }
    Ok(SurpriseTrace { values, boundaries })
}

/// A frame stream with the object instances visible in each frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedStream {
    stream: FrameStream,
    objects: Vec<Vec<ObjectInstance>>,
}

impl AnnotatedStream {
    pub fn new(stream: FrameStream, objects: Vec<Vec<ObjectInstance>>) -> Result<Self, SegmentError> {
        if objects.len() != stream.len() {
            return Err(SegmentError::MissingMetadata(format!(
                "{} metadata entries for {} frames",
                objects.len(),
                stream.len()
            )));
        }
        Ok(Self { stream, objects })
    }

    pub fn stream(&self) -> &FrameStream {
        &self.stream
    }

    /// Visible instances per frame, aligned with `stream().frames()`.
    pub fn objects(&self) -> &[Vec<ObjectInstance>] {
        &self.objects
    }

    pub fn len(&self) -> usize {
        self.stream.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stream.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentTrace {
    pub segment_index: usize,
    pub start_t: usize,
    pub end_t: usize,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentCount {
    pub prediction: u64,
    pub segments: Vec<SegmentTrace>,
}

/// Counts with boundaries from the surprise signal.
pub fn segment_count(
    annotated: &AnnotatedStream,
    target_category: &str,
    cfg: &SurpriseConfig,
) -> Result<SegmentCount, SegmentError> {
    let trace = surprise_signal(annotated.stream(), cfg)?;
    segment_count_with_boundaries(annotated, target_category, &trace.boundaries)
}

/// Counts with externally supplied segment starts (1-based, ascending).
pub fn segment_count_with_boundaries(
    annotated: &AnnotatedStream,
    target_category: &str,
    boundaries: &[usize],
) -> Result<SegmentCount, SegmentError> {
    let n = annotated.len();
    if n == 0 {
        return Err(SegmentError::EmptyStream);
    }
    let mut starts: Vec<usize> = vec![1];
    starts.extend(boundaries.iter().copied().filter(|&b| b > 1 && b <= n));
    starts.dedup();
    let mut segments = Vec::with_capacity(starts.len());
    for (i, &start) in starts.iter().enumerate() {
        let end = starts.get(i + 1).map_or(n, |next| next - 1);
        // The event buffer: everything seen since the last boundary.
        let seen: BTreeSet<&str> = annotated.objects()[start - 1..end]
            .iter()
            .flatten()
            .filter(|o| o.category == target_category)
            .map(|o| o.instance_id.as_str())
            .collect();
        segments.push(SegmentTrace {
            segment_index: i,
            start_t: start,
            end_t: end,
            count: seen.len() as u64,
        });
    }
    Ok(SegmentCount {
        prediction: segments.iter().map(|s| s.count).sum(),
        segments,
    })
}

/// Number of distinct target-category instances in the scene.
pub fn unique_count_oracle(scene: &CountingScene) -> u64 {
    scene
        .rooms
        .iter()
        .flat_map(|r| &r.objects)
        .filter(|o| o.category == scene.target_category)
        .map(|o| o.instance_id.as_str())
        .collect::<BTreeSet<_>>()
        .len() as u64
}

/// Frame indices where a new room visit starts, including the seams
/// between repeats; the first visit is excluded.
pub fn true_boundaries(scene: &CountingScene) -> Vec<usize> {
    let mut out = Vec::new();
    let mut t = 1;
    for pass in 0..scene.repeat_factor {
        for (i, room) in scene.rooms.iter().enumerate() {
            if pass > 0 || i > 0 {
                out.push(t);
            }
            t += room.dwell_frames;
        }
    }
    out
}

/// One counting instance: the scene (for ground truth) and its rendered
/// stream.
#[derive(Debug, Clone)]
pub struct CountingInstance {
    pub instance_id: String,
    pub scene: CountingScene,
    pub stream: AnnotatedStream,
}

impl CountingInstance {
    pub fn gold(&self) -> u64 {
        unique_count_oracle(&self.scene)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{model}: {message}")]
pub struct ModelError {
    pub model: String,
    pub message: String,
}

/// A counting system under test.
pub trait CountingModel: Sync {
    fn name(&self) -> &str;
    fn predict(&self, instance: &CountingInstance) -> Result<u64, ModelError>;
}

/// Surprise segmentation plus per-segment counting, summed.
#[derive(Debug, Clone, Default)]
pub struct SegmentCounter {
    pub config: SurpriseConfig,
}

impl CountingModel for SegmentCounter {
    fn name(&self) -> &str {
        "segment_counter"
    }

    fn predict(&self, instance: &CountingInstance) -> Result<u64, ModelError> {
        segment_count(&instance.stream, &instance.scene.target_category, &self.config)
            .map(|c| c.prediction)
            .map_err(|e| ModelError {
                model: self.name().into(),
                message: e.to_string(),
            })
    }
}

/// Segment counter fed the true room boundaries instead of detected ones.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdealSegmentCounter;

impl CountingModel for IdealSegmentCounter {
    fn name(&self) -> &str {
        "ideal_segment_counter"
    }

    fn predict(&self, instance: &CountingInstance) -> Result<u64, ModelError> {
        segment_count_with_boundaries(
            &instance.stream,
            &instance.scene.target_category,
            &true_boundaries(&instance.scene),
        )
        .map(|c| c.prediction)
        .map_err(|e| ModelError {
            model: self.name().into(),
            message: e.to_string(),
        })
    }
}

/// Keeps one global set of identities across the whole stream.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniqueCounter;

impl CountingModel for UniqueCounter {
    fn name(&self) -> &str {
        "unique_counter"
    }

    fn predict(&self, instance: &CountingInstance) -> Result<u64, ModelError> {
        let target = &instance.scene.target_category;
        Ok(instance
            .stream
            .objects()
            .iter()
            .flatten()
            .filter(|o| &o.category == target)
            .map(|o| o.instance_id.as_str())
            .collect::<BTreeSet<_>>()
            .len() as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{normalize, EmbeddingVector};
    use crate::types::Room;

    fn basis(d: usize, i: usize) -> EmbeddingVector {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        normalize(&v).unwrap()
    }

    fn stream(embs: Vec<EmbeddingVector>) -> FrameStream {
        FrameStream::from_embeddings(embs, 1.0).unwrap()
    }

    #[test]
    fn constant_stream_has_no_boundaries() {
        let e = normalize(&[0.3, 0.1, -0.7]).unwrap();
        let s = stream(vec![e; 50]);
        for cfg in [SurpriseConfig::default(), SurpriseConfig::fixed(0.1)] {
            let trace = surprise_signal(&s, &cfg).unwrap();
            assert!(trace.values.iter().all(|&v| v.abs() < 1e-12));
            assert!(trace.boundaries.is_empty());
        }
    }

    #[test]
    fn orthogonal_clusters_give_one_boundary() {
        let mut embs = vec![basis(4, 0); 12];
        embs.extend(vec![basis(4, 1); 9]);
        let trace = surprise_signal(&stream(embs), &SurpriseConfig::default()).unwrap();
        assert_eq!(trace.values[12], 1.0);
        assert_eq!(trace.boundaries, vec![13]);
    }

    #[test]
    fn single_frame_and_empty() {
        let trace = surprise_signal(&stream(vec![basis(2, 0)]), &SurpriseConfig::default()).unwrap();
        assert_eq!(trace.values, vec![0.0]);
        let empty = FrameStream::from_embeddings(vec![], 1.0).unwrap();
        assert_eq!(
            surprise_signal(&empty, &SurpriseConfig::default()).unwrap_err(),
            SegmentError::EmptyStream
        );
    }

    #[test]
    fn config_validation() {
        assert!(SurpriseConfig::fixed(0.0).validate().is_err());
        assert!(SurpriseConfig::fixed(2.5).validate().is_err());
        assert!(SurpriseConfig::fixed(2.0).validate().is_ok());
        let bad = SurpriseConfig {
            threshold: ThresholdRule::Adaptive {
                c: 3.0,
                window: 1,
                min_surprise: 0.5,
            },
        };
        assert!(bad.validate().is_err());
    }

    fn obj(id: &str, cat: &str) -> ObjectInstance {
        ObjectInstance {
            instance_id: id.into(),
            category: cat.into(),
        }
    }

    /// Room A: chairs a1..a3 and a table; room B: chairs b1, b2.
    /// Each frame shows one object of its room, cycling.
    fn two_room_scene() -> (CountingScene, AnnotatedStream) {
        let room_a = Room {
            room_id: "A".into(),
            dwell_frames: 8,
            objects: vec![
                obj("a1", "chair"),
                obj("a2", "chair"),
                obj("a3", "chair"),
                obj("t1", "table"),
            ],
        };
        let room_b = Room {
            room_id: "B".into(),
            dwell_frames: 6,
            objects: vec![obj("b1", "chair"), obj("b2", "chair")],
        };
        let scene = CountingScene::new(vec![room_a, room_b], "chair", 1).unwrap();
        let mut embs = Vec::new();
        let mut objs = Vec::new();
        for (r, room) in scene.rooms.iter().enumerate() {
            for j in 0..room.dwell_frames {
                embs.push(basis(4, r));
                objs.push(vec![room.objects[j % room.objects.len()].clone()]);
            }
        }
        let annotated = AnnotatedStream::new(stream(embs), objs).unwrap();
        (scene, annotated)
    }

    #[test]
    fn oracle_counts() {
        let (scene, _) = two_room_scene();
        assert_eq!(unique_count_oracle(&scene), 5);
        assert_eq!(unique_count_oracle(&scene.repeated(5).unwrap()), 5);
        let mut none = scene.clone();
        none.target_category = "sofa".into();
        assert_eq!(unique_count_oracle(&none), 0);
    }

    #[test]
    fn single_room_single_segment() {
        let (_, annotated) = two_room_scene();
        let first: Vec<_> = annotated.stream().frames()[..8]
            .iter()
            .map(|f| f.embedding.clone())
            .collect();
        let room_a = AnnotatedStream::new(stream(first), annotated.objects()[..8].to_vec()).unwrap();
        let out = segment_count(&room_a, "chair", &SurpriseConfig::default()).unwrap();
        assert_eq!(out.prediction, 3);
        assert_eq!(out.segments.len(), 1);
    }

    #[test]
    fn two_rooms_sum_to_oracle() {
        let (scene, annotated) = two_room_scene();
        let out = segment_count(&annotated, "chair", &SurpriseConfig::default()).unwrap();
        assert_eq!(out.prediction, 5);
        assert_eq!(
            out.segments,
            vec![
                SegmentTrace {
                    segment_index: 0,
                    start_t: 1,
                    end_t: 8,
                    count: 3
                },
                SegmentTrace {
                    segment_index: 1,
                    start_t: 9,
                    end_t: 14,
                    count: 2
                },
            ]
        );
        assert_eq!(true_boundaries(&scene), vec![9]);
    }

    #[test]
    fn repeated_scene_double_counts() {
        let (scene, annotated) = two_room_scene();
        let twice = scene.repeated(2).unwrap();
        let embs: Vec<_> = annotated
            .stream()
            .embeddings()
            .chain(annotated.stream().embeddings())
            .cloned()
            .collect();
        let objs = [annotated.objects(), annotated.objects()].concat();
        let rep = AnnotatedStream::new(stream(embs), objs).unwrap();
        assert_eq!(true_boundaries(&twice), vec![9, 15, 23]);
        let detected = surprise_signal(rep.stream(), &SurpriseConfig::default()).unwrap();
        assert_eq!(detected.boundaries, vec![9, 15, 23]);
        let out = segment_count_with_boundaries(&rep, "chair", &true_boundaries(&twice)).unwrap();
        assert_eq!(out.prediction, 10);

        let inst = CountingInstance {
            instance_id: "s".into(),
            scene: twice,
            stream: rep,
        };
        assert_eq!(inst.gold(), 5);
        assert_eq!(UniqueCounter.predict(&inst).unwrap(), 5);
        assert_eq!(IdealSegmentCounter.predict(&inst).unwrap(), 10);
        assert_eq!(SegmentCounter::default().predict(&inst).unwrap(), 10);
    }

    #[test]
    fn metadata_length_is_checked() {
        let s = stream(vec![basis(2, 0); 3]);
        assert!(matches!(
            AnnotatedStream::new(s, vec![vec![]; 2]),
            Err(SegmentError::MissingMetadata(_))
        ));
    }
}
