//! Unit-norm embedding vectors and the frame streams built from them.
//!
//! All similarity math runs in `f64`, even when the embeddings were loaded
//! from `f32` files. Frame indices are 1-based: the first frame of a stream
//! is index 1 and sits at timestamp 0.

use std::sync::Arc;

use thiserror::Error;

/// Norms below this are treated as zero.
pub const ZERO_NORM_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("vector has zero norm")]
    ZeroNorm,
    #[error("vector contains a non-finite entry at position {0}")]
    NonFinite(usize),
    #[error("vector is empty")]
    Empty,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("invalid frame stream: {0}")]
    InvalidStream(String),
}

/// A dense, L2-normalized vector.
///
/// The only way to build one is [`normalize`], so every value of this type
/// has finite entries and unit norm (within rounding). Cloning is cheap.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Arc<[f64]>);

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Lossy conversion for writing to `f32` embedding files.
    pub fn to_f32(&self) -> Vec<f32> {
        self.0.iter().map(|&x| x as f32).collect()
    }

    /// Euclidean norm; always 1 up to rounding.
    pub fn norm(&self) -> f64 {
        l2_norm(&self.0)
    }
}

impl AsRef<[f64]> for EmbeddingVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scales `v` to unit L2 norm.
pub fn normalize(v: &[f64]) -> Result<EmbeddingVector, EmbeddingError> {
    if v.is_empty() {
        return Err(EmbeddingError::Empty);
    }
    if let Some(pos) = v.iter().position(|x| !x.is_finite()) {
        return Err(EmbeddingError::NonFinite(pos));
    }
    // Rescale by the max magnitude first so huge or tiny inputs do not
    // overflow or underflow in the sum of squares.
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale < ZERO_NORM_EPS {
        return Err(EmbeddingError::ZeroNorm);
    }
    let scaled: Vec<f64> = v.iter().map(|x| x / scale).collect();
    let norm = l2_norm(&scaled);
    if norm * scale < ZERO_NORM_EPS {
        return Err(EmbeddingError::ZeroNorm);
    }
    Ok(EmbeddingVector(scaled.iter().map(|x| x / norm).collect()))
}

/// Widens an `f32` row and normalizes it.
pub fn normalize_f32(v: &[f32]) -> Result<EmbeddingVector, EmbeddingError> {
    let wide: Vec<f64> = v.iter().map(|&x| f64::from(x)).collect();
    normalize(&wide)
}

/// Inner product of two unit vectors, clamped to `[-1, 1]`.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(dot(a.as_slice(), b.as_slice()).clamp(-1.0, 1.0))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One sampled frame: 1-based index, timestamp in seconds, and embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub index: usize,
    pub timestamp_s: f64,
    pub embedding: EmbeddingVector,
}

/// An ordered, validated sequence of frames with a shared dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStream {
    fps: f64,
    dim: usize,
    frames: Vec<FrameRecord>,
}

impl FrameStream {
    /// Builds a stream from embeddings sampled at `fps`, numbering frames
    /// `1..=N` with timestamps `(t - 1) / fps`.
    pub fn from_embeddings(embeddings: Vec<EmbeddingVector>, fps: f64) -> Result<Self, EmbeddingError> {
        let frames = embeddings
            .into_iter()
            .enumerate()
            .map(|(i, embedding)| FrameRecord {
                index: i + 1,
                timestamp_s: i as f64 / fps,
                embedding,
            })
            .collect();
        Self::new(frames, fps)
    }

    /// Validates index, timestamp and dimension invariants.
    pub fn new(frames: Vec<FrameRecord>, fps: f64) -> Result<Self, EmbeddingError> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(EmbeddingError::InvalidStream(format!(
                "fps must be positive, got {fps}"
            )));
        }
        let dim = frames.first().map_or(0, |f| f.embedding.dim());
        for (i, frame) in frames.iter().enumerate() {
            if frame.index != i + 1 {
                return Err(EmbeddingError::InvalidStream(format!(
                    "frame at position {} has index {}, expected {}",
                    i,
                    frame.index,
                    i + 1
                )));
            }
            if frame.embedding.dim() != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    left: dim,
                    right: frame.embedding.dim(),
                });
            }
            if !frame.timestamp_s.is_finite() {
                return Err(EmbeddingError::InvalidStream(format!(
                    "frame {} has non-finite timestamp",
                    frame.index
                )));
            }
            if i > 0 && frame.timestamp_s < frames[i - 1].timestamp_s {
                return Err(EmbeddingError::InvalidStream(format!(
                    "timestamp decreases at frame {}",
                    frame.index
                )));
            }
        }
        Ok(Self { fps, dim, frames })
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    /// Embedding dimension, or 0 for an empty stream.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[FrameRecord] {
        &self.frames
    }

    pub fn iter(&self) -> std::slice::Iter<'_, FrameRecord> {
        self.frames.iter()
    }

    pub fn embeddings(&self) -> impl Iterator<Item = &EmbeddingVector> {
        self.frames.iter().map(|f| &f.embedding)
    }
}

impl IntoIterator for FrameStream {
    type Item = FrameRecord;
    type IntoIter = std::vec::IntoIter<FrameRecord>;

    fn into_iter(self) -> Self::IntoIter {
        self.frames.into_iter()
    }
}

impl<'a> IntoIterator for &'a FrameStream {
    type Item = &'a FrameRecord;
    type IntoIter = std::slice::Iter<'a, FrameRecord>;

    fn into_iter(self) -> Self::IntoIter {
        self.frames.iter()
    }
}
