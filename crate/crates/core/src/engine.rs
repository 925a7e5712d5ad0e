//! Atemporal streaming baseline for order-recall questions.
//!
//! Every frame is scored independently against the object query. Only the
//! `K` most similar frames are kept while streaming. The kept frames, in
//! time order, are then matched against the joint (object, auxiliary) text
//! embeddings and each candidate ordering is scored as the sum of the
//! matched similarities. Nothing else about time is used.

use std::borrow::Borrow;
use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine, normalize, EmbeddingError, EmbeddingVector, FrameRecord};
use crate::types::{Ordering4, RecallQuestion};

pub const DEFAULT_K: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("raw-question mode needs a raw question, none given for {0}")]
    MissingRawQuestion(String),
    #[error("no text embedding available for {0:?}")]
    EncoderUnavailable(String),
    #[error("prompt ensemble is empty")]
    EmptyTemplates,
    #[error("frame {index} arrived after frame {last}")]
    OutOfOrderFrame { index: usize, last: usize },
    #[error("stream is empty")]
    EmptyStream,
    #[error("similarity for frame {0} is not finite")]
    NonFiniteSimilarity(usize),
    #[error("buffer capacity must be >= 1")]
    ZeroCapacity,
    #[error("score matrix has {0} rows; options cover at most 4")]
    TooManyRows(usize),
    #[error("expected 4 auxiliary embeddings, got {0}")]
    AuxiliaryCount(usize),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

/// How the object query is turned into text before encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    /// Mean of the prompt-ensemble embeddings.
    Ensemble,
    /// A single basic template.
    BasicPrompt,
    /// The question text verbatim, without extracting the object.
    RawQuestion,
}

impl PromptMode {
    pub const ALL: [PromptMode; 3] = [PromptMode::Ensemble, PromptMode::BasicPrompt, PromptMode::RawQuestion];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptMode::Ensemble => "ensemble",
            PromptMode::BasicPrompt => "basic_prompt",
            PromptMode::RawQuestion => "raw_question",
        }
    }
}

impl std::fmt::Display for PromptMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Prompt templates. `{o}` is replaced by the object, `{a}` by an auxiliary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTemplates {
    pub version: String,
    pub ensemble: Vec<String>,
    pub basic: String,
    pub joint: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            version: "ensemble-v1".into(),
            ensemble: [
                "a photo of a {o}.",
                "a photo of the {o}.",
                "a photo of the {o} in a room.",
                "a close-up photo of a {o}.",
                "a photo of a {o} indoors.",
                "a cropped photo of the {o}.",
                "a photo of one {o}.",
            ]
            .map(String::from)
            .to_vec(),
            basic: "a photo of a {o}.".into(),
            joint: "a photo of a {o} near a {a}.".into(),
        }
    }
}

impl PromptTemplates {
    pub fn fill(template: &str, object: &str, auxiliary: Option<&str>) -> String {
        let s = template.replace("{o}", object);
        match auxiliary {
            Some(a) => s.replace("{a}", a),
            None => s,
        }
    }

    /// Every literal string [`build_queries`] may ask the encoder for.
    pub fn expand(&self, q: &RecallQuestion) -> Vec<String> {
        let o = q.object_text();
        let mut out: Vec<String> = self.ensemble.iter().map(|t| Self::fill(t, o, None)).collect();
        out.push(Self::fill(&self.basic, o, None));
        out.extend(q.auxiliaries().iter().map(|a| Self::fill(&self.joint, o, Some(a))));
        if let Some(raw) = q.raw_question() {
            out.push(raw.to_string());
        }
        out.sort();
        out.dedup();
        out
    }
}

/// A text tower: maps a string to a raw (unnormalized) embedding.
pub trait TextEncoder: Sync {
    fn encode(&self, text: &str) -> Result<Vec<f64>, EngineError>;
}

/// Text embeddings precomputed by an external encoder, looked up by the
/// exact string.
#[derive(Debug, Clone, Default)]
pub struct LookupEncoder {
    table: HashMap<String, Vec<f32>>,
}

impl LookupEncoder {
    pub fn new(table: HashMap<String, Vec<f32>>) -> Self {
        Self { table }
    }
}

impl TextEncoder for LookupEncoder {
    fn encode(&self, text: &str) -> Result<Vec<f64>, EngineError> {
        self.table
            .get(text)
            .map(|v| v.iter().map(|&x| f64::from(x)).collect())
            .ok_or_else(|| EngineError::EncoderUnavailable(text.to_string()))
    }
}

/// Deterministic bag-of-words encoder for fixtures: each lowercase token
/// maps to a seeded Gaussian vector and a string embeds as the sum of its
/// tokens. Word order is ignored.
#[derive(Debug, Clone)]
pub struct HashedBagOfWords {
    dim: usize,
}

impl HashedBagOfWords {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self { dim }
    }

    pub fn token_vector(&self, token: &str) -> Vec<f64> {
        let seed = u64::from(crc32fast::hash(token.as_bytes()));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect()
    }
}

impl TextEncoder for HashedBagOfWords {
    fn encode(&self, text: &str) -> Result<Vec<f64>, EngineError> {
        let mut acc = vec![0.0; self.dim];
        let lower = text.to_lowercase();
        let mut any = false;
        for token in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            any = true;
            for (a, v) in acc.iter_mut().zip(self.token_vector(token)) {
                *a += v;
            }
        }
        if !any {
            return Err(EngineError::EncoderUnavailable(text.to_string()));
        }
        Ok(acc)
    }
}

/// Object query `O` and joint auxiliary queries `A_1..A_4`, all unit norm.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryEmbeddings {
    pub object: EmbeddingVector,
    pub auxiliaries: [EmbeddingVector; 4],
    /// `None` when the vectors were injected rather than text-encoded.
    pub mode: Option<PromptMode>,
}

impl QueryEmbeddings {
    pub fn injected(object: EmbeddingVector, auxiliaries: Vec<EmbeddingVector>) -> Result<Self, EngineError> {
        let n = auxiliaries.len();
        let auxiliaries: [EmbeddingVector; 4] = auxiliaries.try_into().map_err(|_| EngineError::AuxiliaryCount(n))?;
        for a in &auxiliaries {
            if a.dim() != object.dim() {
                return Err(EmbeddingError::DimensionMismatch {
                    left: object.dim(),
                    right: a.dim(),
                }
                .into());
            }
        }
        Ok(Self {
            object,
            auxiliaries,
            mode: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.object.dim()
    }
}

fn encode_normalized(encoder: &dyn TextEncoder, text: &str) -> Result<EmbeddingVector, EngineError> {
    Ok(normalize(&encoder.encode(text)?)?)
}

/// Encodes the object and joint auxiliary prompts for one question.
pub fn build_queries(
    q: &RecallQuestion,
    mode: PromptMode,
    templates: &PromptTemplates,
    encoder: &dyn TextEncoder,
) -> Result<QueryEmbeddings, EngineError> {
    let o = q.object_text();
    let object = match mode {
        PromptMode::Ensemble => {
            if templates.ensemble.is_empty() {
                return Err(EngineError::EmptyTemplates);
            }
            let mut mean: Vec<f64> = Vec::new();
            for t in &templates.ensemble {
                let e = encode_normalized(encoder, &PromptTemplates::fill(t, o, None))?;
                if mean.is_empty() {
                    mean = vec![0.0; e.dim()];
                }
                if e.dim() != mean.len() {
                    return Err(EmbeddingError::DimensionMismatch {
                        left: mean.len(),
                        right: e.dim(),
                    }
                    .into());
                }
                for (m, x) in mean.iter_mut().zip(e.as_slice()) {
                    *m += x;
                }
            }
            let n = templates.ensemble.len() as f64;
            mean.iter_mut().for_each(|m| *m /= n);
            normalize(&mean)?
        }
        PromptMode::BasicPrompt => encode_normalized(encoder, &PromptTemplates::fill(&templates.basic, o, None))?,
        PromptMode::RawQuestion => {
            let raw = q
                .raw_question()
                .ok_or_else(|| EngineError::MissingRawQuestion(q.question_id().to_string()))?;
            encode_normalized(encoder, raw)?
        }
    };
    let aux = q
        .auxiliaries()
        .iter()
        .map(|a| encode_normalized(encoder, &PromptTemplates::fill(&templates.joint, o, Some(a))))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = QueryEmbeddings::injected(object, aux)?;
    out.mode = Some(mode);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BufferEntry {
    pub index: usize,
    pub similarity: f64,
    pub embedding: EmbeddingVector,
}

/// Keeps the `K` highest-similarity frames seen so far.
///
/// On a tie at the K-th place the earlier frame is kept, so the result is
/// the same as a stable descending sort of the whole stream cut at `K`.
#[derive(Debug, Clone)]
pub struct TopKBuffer {
    capacity: usize,
    entries: Vec<BufferEntry>,
    last_index: Option<usize>,
    seen: usize,
}

impl TopKBuffer {
    pub fn new(capacity: usize) -> Result<Self, EngineError> {
        if capacity == 0 {
            return Err(EngineError::ZeroCapacity);
        }
        Ok(Self {
            capacity,
            entries: Vec::with_capacity(capacity),
            last_index: None,
            seen: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of frames offered so far.
    pub fn seen(&self) -> usize {
        self.seen
    }

    pub fn entries(&self) -> &[BufferEntry] {
        &self.entries
    }

    /// Scores `frame` against `object` and offers it to the buffer.
    /// Returns the frame's similarity.
    pub fn update(&mut self, frame: &FrameRecord, object: &EmbeddingVector) -> Result<f64, EngineError> {
        let s = cosine(&frame.embedding, object)?;
        self.offer(frame.index, s, frame.embedding.clone())?;
        Ok(s)
    }

    /// Offers a pre-scored frame. Indices must strictly increase.
    pub fn offer(&mut self, index: usize, similarity: f64, embedding: EmbeddingVector) -> Result<(), EngineError> {
        if let Some(last) = self.last_index {
            if index <= last {
                return Err(EngineError::OutOfOrderFrame { index, last });
            }
        }
        if !similarity.is_finite() {
            return Err(EngineError::NonFiniteSimilarity(index));
        }
        self.last_index = Some(index);
        self.seen += 1;
        let entry = BufferEntry {
            index,
            similarity,
            embedding,
        };
        if self.entries.len() < self.capacity {
            self.entries.push(entry);
            return Ok(());
        }
        // Weakest entry: lowest similarity, latest index among ties.
        let (weakest, _) = self
            .entries
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| a.similarity.total_cmp(&b.similarity).then(b.index.cmp(&a.index)))
            .expect("buffer is full and capacity >= 1");
        // The newcomer is the latest frame, so it loses every tie.
        if similarity > self.entries[weakest].similarity {
            self.entries[weakest] = entry;
        }
        Ok(())
    }

    /// Retained frames in ascending frame order.
    pub fn finalize(mut self) -> Result<Vec<BufferEntry>, EngineError> {
        if self.entries.is_empty() {
            return Err(EngineError::EmptyStream);
        }
        self.entries.sort_by_key(|e| e.index);
        Ok(self.entries)
    }
}

/// `r[u][i] = <F_{t_u}, A_i>` with rows in frame order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    rows: Vec<[f64; 4]>,
}

impl ScoreMatrix {
    pub fn new(rows: Vec<[f64; 4]>) -> Result<Self, EngineError> {
        if rows.len() > 4 {
            return Err(EngineError::TooManyRows(rows.len()));
        }
        Ok(Self { rows })
    }

    pub fn from_frames(frames: &[BufferEntry], auxiliaries: &[EmbeddingVector; 4]) -> Result<Self, EngineError> {
        let rows = frames
            .iter()
            .map(|f| {
                let mut row = [0.0; 4];
                for (slot, a) in row.iter_mut().zip(auxiliaries) {
                    *slot = cosine(&f.embedding, a)?;
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>, EngineError>>()?;
        Self::new(rows)
    }

    pub fn rows(&self) -> &[[f64; 4]] {
        &self.rows
    }

    /// Multiplies every entry by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            rows: self.rows.iter().map(|r| r.map(|x| x * c)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptionScores {
    pub scores: [f64; 4],
    /// 1-based option index.
    pub answer: usize,
}

/// Scores each ordering as `sum_u r[u][perm[u]]` over the available rows and
/// picks the maximum; ties go to the lowest option index.
pub fn score_options(r: &ScoreMatrix, options: &[Ordering4; 4]) -> OptionScores {
    let mut scores = [0.0; 4];
    for (score, perm) in scores.iter_mut().zip(options) {
        *score = r
            .rows
            .iter()
            .zip(perm)
            .map(|(row, &aux)| row[usize::from(aux) - 1])
            .sum();
    }
    let mut answer = 0;
    for k in 1..4 {
        if scores[k] > scores[answer] {
            answer = k;
        }
    }
    OptionScores {
        scores,
        answer: answer + 1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub k: usize,
    pub mode: PromptMode,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            mode: PromptMode::Ensemble,
        }
    }
}

/// Where the query vectors come from.
#[derive(Clone, Copy)]
pub enum QuerySource<'a> {
    Injected(&'a QueryEmbeddings),
    Text {
        encoder: &'a dyn TextEncoder,
        templates: &'a PromptTemplates,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetainedFrame {
    pub t: usize,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VsrAnswer {
    /// 1-based option index.
    pub answer: usize,
    pub scores: [f64; 4],
    pub retained: Vec<RetainedFrame>,
    pub frames_seen: usize,
}

/// Answers one question in a single pass over `frames`.
///
/// Accepts any iterator of frames (owned or borrowed), so callers can hand
/// over a live stream; each frame is visited exactly once and at most `K`
/// of them are held at a time.
pub fn answer_vsr<I>(
    frames: I,
    question: &RecallQuestion,
    source: QuerySource<'_>,
    config: &EngineConfig,
) -> Result<VsrAnswer, EngineError>
where
    I: IntoIterator,
    I::Item: Borrow<FrameRecord>,
{
    if config.k > 4 {
        return Err(EngineError::TooManyRows(config.k));
    }
    let built;
    let queries = match source {
        QuerySource::Injected(q) => q,
        QuerySource::Text { encoder, templates } => {
            built = build_queries(question, config.mode, templates, encoder)?;
            &built
        }
    };
    let mut buffer = TopKBuffer::new(config.k)?;
    for frame in frames {
        buffer.update(frame.borrow(), &queries.object)?;
    }
    let frames_seen = buffer.seen();
    let kept = buffer.finalize()?;
    let r = ScoreMatrix::from_frames(&kept, &queries.auxiliaries)?;
    let scored = score_options(&r, question.options());
    Ok(VsrAnswer {
        answer: scored.answer,
        scores: scored.scores,
        retained: kept
            .iter()
            .map(|e| RetainedFrame {
                t: e.index,
                s: e.similarity,
            })
            .collect(),
        frames_seen,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::FrameStream;
    use proptest::prelude::*;

    fn unit(v: &[f64]) -> EmbeddingVector {
        normalize(v).unwrap()
    }

    /// Buffer fed pre-computed similarities through `offer`.
    fn retained(sims: &[f64], k: usize) -> Vec<usize> {
        let dummy = unit(&[1.0]);
        let mut buf = TopKBuffer::new(k).unwrap();
        for (i, &s) in sims.iter().enumerate() {
            buf.offer(i + 1, s, dummy.clone()).unwrap();
            assert!(buf.len() <= k);
        }
        buf.finalize().unwrap().iter().map(|e| e.index).collect()
    }

    /// Offline oracle: stable sort descending, cut at k, re-sort by index.
    fn offline(sims: &[f64], k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (1..=sims.len()).collect();
        idx.sort_by(|&a, &b| sims[b - 1].total_cmp(&sims[a - 1]));
        idx.truncate(k);
        idx.sort_unstable();
        idx
    }

    #[test]
    fn keeps_top_four() {
        let sims = [0.1, 0.9, 0.3, 0.8, 0.7, 0.95];
        assert_eq!(offline(&sims, 4), vec![2, 4, 5, 6]);
        assert_eq!(retained(&sims, 4), vec![2, 4, 5, 6]);
    }

    #[test]
    fn underfull_and_ties() {
        assert_eq!(retained(&[0.2, 0.1, 0.3], 4), vec![1, 2, 3]);
        assert_eq!(retained(&[0.5; 5], 4), vec![1, 2, 3, 4]);
        assert_eq!(offline(&[0.5; 5], 4), vec![1, 2, 3, 4]);
        assert_eq!(retained(&[0.7], 4), vec![1]);
    }

    #[test]
    fn buffer_errors() {
        assert_eq!(TopKBuffer::new(0).unwrap_err(), EngineError::ZeroCapacity);
        let buf = TopKBuffer::new(4).unwrap();
        assert_eq!(buf.finalize().unwrap_err(), EngineError::EmptyStream);
        let mut buf = TopKBuffer::new(2).unwrap();
        let e = unit(&[1.0]);
        buf.offer(3, 0.1, e.clone()).unwrap();
        assert_eq!(
            buf.offer(3, 0.2, e.clone()),
            Err(EngineError::OutOfOrderFrame { index: 3, last: 3 })
        );
        assert_eq!(buf.offer(4, f64::NAN, e), Err(EngineError::NonFiniteSimilarity(4)));
    }

    fn indicator(sigma: Ordering4) -> ScoreMatrix {
        let rows = sigma
            .iter()
            .map(|&a| {
                let mut row = [0.0; 4];
                row[usize::from(a) - 1] = 1.0;
                row
            })
            .collect();
        ScoreMatrix::new(rows).unwrap()
    }

    pub(crate) fn all_perms() -> Vec<Ordering4> {
        let mut out = Vec::new();
        for a in 1..=4u8 {
            for b in 1..=4u8 {
                for c in 1..=4u8 {
                    for d in 1..=4u8 {
                        let p = [a, b, c, d];
                        let mut seen = [false; 4];
                        p.iter().for_each(|&x| seen[usize::from(x) - 1] = true);
                        if seen.iter().all(|&s| s) {
                            out.push(p);
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn indicator_matrix_selects_sigma() {
        let perms = all_perms();
        assert_eq!(perms.len(), 24);
        for &sigma in &perms {
            let r = indicator(sigma);
            // sigma is the unique maximizer over all 24 orderings
            let best: Vec<_> = perms
                .iter()
                .filter(|p| {
                    r.rows()
                        .iter()
                        .zip(p.iter())
                        .map(|(row, &a)| row[usize::from(a) - 1])
                        .sum::<f64>()
                        == 4.0
                })
                .collect();
            assert_eq!(best, vec![&sigma]);
            let others: Vec<_> = perms.iter().filter(|&&p| p != sigma).take(3).copied().collect();
            let opts = [others[0], sigma, others[1], others[2]];
            let out = score_options(&r, &opts);
            assert_eq!(out.answer, 2);
            assert_eq!(out.scores[1], 4.0);
        }
    }

    #[test]
    fn zero_matrix_ties_to_first() {
        let r = ScoreMatrix::new(vec![[0.0; 4]; 4]).unwrap();
        let opts = [[1, 2, 3, 4], [2, 1, 3, 4], [4, 3, 2, 1], [1, 3, 2, 4]];
        let out = score_options(&r, &opts);
        assert_eq!(out.scores, [0.0; 4]);
        assert_eq!(out.answer, 1);
    }

    #[test]
    fn short_matrix_uses_available_rows() {
        let r = ScoreMatrix::new(vec![[0.1, 0.9, 0.0, 0.0]]).unwrap();
        let opts = [[1, 2, 3, 4], [2, 1, 3, 4], [4, 3, 2, 1], [3, 1, 2, 4]];
        let out = score_options(&r, &opts);
        assert_eq!(out.scores, [0.1, 0.9, 0.0, 0.0]);
        assert_eq!(out.answer, 2);
        assert!(ScoreMatrix::new(vec![[0.0; 4]; 5]).is_err());
    }

    /// A lookup encoder over a fixed string table.
    fn table(entries: &[(&str, &[f64])]) -> LookupEncoder {
        LookupEncoder::new(
            entries
                .iter()
                .map(|(k, v)| (k.to_string(), v.iter().map(|&x| x as f32).collect()))
                .collect(),
        )
    }

    fn question(raw: Option<&str>) -> RecallQuestion {
        RecallQuestion::new(
            "q",
            "bear",
            ["bed", "tub", "sink", "floor"].map(String::from).to_vec(),
            vec![vec![1, 2, 3, 4], vec![2, 1, 3, 4], vec![4, 3, 2, 1], vec![1, 3, 2, 4]],
            1,
            raw.map(String::from),
        )
        .unwrap()
    }

    fn templates(ensemble: &[&str]) -> PromptTemplates {
        PromptTemplates {
            version: "test".into(),
            ensemble: ensemble.iter().map(|s| s.to_string()).collect(),
            basic: "b {o}".into(),
            joint: "{o}+{a}".into(),
        }
    }

    fn joint_entries() -> Vec<(&'static str, &'static [f64])> {
        vec![
            ("bear+bed", &[0.0, 0.0, 1.0]),
            ("bear+tub", &[0.0, 1.0, 1.0]),
            ("bear+sink", &[1.0, 0.0, 1.0]),
            ("bear+floor", &[1.0, 1.0, 1.0]),
        ]
    }

    #[test]
    fn ensemble_of_orthogonal_prompts() {
        let mut e = joint_entries();
        e.push(("x bear", &[2.0, 0.0, 0.0]));
        e.push(("y bear", &[0.0, 5.0, 0.0]));
        let enc = table(&e);
        let q = build_queries(
            &question(None),
            PromptMode::Ensemble,
            &templates(&["x {o}", "y {o}"]),
            &enc,
        )
        .unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for (x, y) in q.object.as_slice().iter().zip([h, h, 0.0]) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(q.mode, Some(PromptMode::Ensemble));
        assert_eq!(q.auxiliaries[0].as_slice(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn ensemble_of_identical_prompts_equals_single() {
        let mut e = joint_entries();
        e.push(("x bear", &[0.3, 0.4, 0.5]));
        e.push(("b bear", &[0.3, 0.4, 0.5]));
        let enc = table(&e);
        let ens = build_queries(
            &question(None),
            PromptMode::Ensemble,
            &templates(&["x {o}", "x {o}", "x {o}"]),
            &enc,
        )
        .unwrap();
        let basic = build_queries(&question(None), PromptMode::BasicPrompt, &templates(&["x {o}"]), &enc).unwrap();
        for (x, y) in ens.object.as_slice().iter().zip(basic.object.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn mode_errors() {
        let enc = table(&joint_entries());
        assert_eq!(
            build_queries(&question(None), PromptMode::RawQuestion, &templates(&["x {o}"]), &enc),
            Err(EngineError::MissingRawQuestion("q".into()))
        );
        assert_eq!(
            build_queries(&question(None), PromptMode::Ensemble, &templates(&[]), &enc),
            Err(EngineError::EmptyTemplates)
        );
        assert_eq!(
            build_queries(&question(None), PromptMode::BasicPrompt, &templates(&[]), &enc),
            Err(EngineError::EncoderUnavailable("b bear".into()))
        );
        let mut e = joint_entries();
        e.push(("where was the bear?", &[0.0, 1.0, 0.0]));
        let enc = table(&e);
        let q = build_queries(
            &question(Some("where was the bear?")),
            PromptMode::RawQuestion,
            &templates(&[]),
            &enc,
        )
        .unwrap();
        assert_eq!(q.object.as_slice(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn bag_of_words_ignores_order_and_case() {
        let enc = HashedBagOfWords::new(16);
        assert_eq!(enc.encode("Red chair").unwrap(), enc.encode("chair, red").unwrap());
        assert_ne!(enc.encode("red chair").unwrap(), enc.encode("blue chair").unwrap());
        assert!(enc.encode(" ,. ").is_err());
    }

    /// Needles at t = 3, 7, 12, 15 with F_{t_u} = A_{sigma(u)}; every other
    /// frame is orthogonal to the object query.
    fn needle_stream(sigma: Ordering4) -> (FrameStream, QueryEmbeddings) {
        let d = 8;
        let basis = |i: usize| {
            let mut v = vec![0.0; d];
            v[i] = 1.0;
            v
        };
        let mix = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + y).collect() };
        let object = unit(&basis(0));
        let aux: Vec<_> = (1..=4).map(|i| unit(&mix(&basis(0), &basis(i)))).collect();
        let needles = [3usize, 7, 12, 15];
        let frames = (1..=20)
            .map(|t| match needles.iter().position(|&n| n == t) {
                Some(u) => aux[usize::from(sigma[u]) - 1].clone(),
                None => unit(&basis(5 + t % 3)),
            })
            .collect();
        let q = QueryEmbeddings::injected(object, aux).unwrap();
        (FrameStream::from_embeddings(frames, 1.0).unwrap(), q)
    }

    #[test]
    fn needles_recover_sigma() {
        let sigma = [3, 1, 4, 2];
        let (stream, q) = needle_stream(sigma);
        let question = RecallQuestion::new(
            "q",
            "o",
            ["a", "b", "c", "d"].map(String::from).to_vec(),
            vec![vec![1, 2, 3, 4], vec![3, 1, 4, 2], vec![2, 4, 1, 3], vec![4, 3, 2, 1]],
            2,
            None,
        )
        .unwrap();
        let out = answer_vsr(&stream, &question, QuerySource::Injected(&q), &EngineConfig::default()).unwrap();
        assert_eq!(out.answer, 2);
        assert_eq!(out.retained.iter().map(|r| r.t).collect::<Vec<_>>(), vec![3, 7, 12, 15]);
        assert!((out.scores[1] - 4.0).abs() < 1e-12);
        assert!(out.scores.iter().enumerate().all(|(k, &s)| k == 1 || s < 4.0 - 1e-9));
        assert_eq!(out.frames_seen, 20);
    }

    #[test]
    fn whole_stream_is_retained_when_n_equals_k() {
        let (stream, q) = needle_stream([1, 2, 3, 4]);
        let four: Vec<FrameRecord> = stream.frames()[..4].to_vec();
        let question = question(None);
        let out = answer_vsr(
            four.iter(),
            &question,
            QuerySource::Injected(&q),
            &EngineConfig::default(),
        )
        .unwrap();
        assert_eq!(out.retained.iter().map(|r| r.t).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
        let kept: Vec<BufferEntry> = four
            .iter()
            .map(|f| BufferEntry {
                index: f.index,
                similarity: 0.0,
                embedding: f.embedding.clone(),
            })
            .collect();
        let direct = score_options(
            &ScoreMatrix::from_frames(&kept, &q.auxiliaries).unwrap(),
            question.options(),
        );
        assert_eq!(direct.answer, out.answer);
        assert_eq!(direct.scores, out.scores);
    }

    #[test]
    fn capacity_above_four_is_rejected_for_answering() {
        let (stream, q) = needle_stream([1, 2, 3, 4]);
        let cfg = EngineConfig {
            k: 5,
            mode: PromptMode::Ensemble,
        };
        assert_eq!(
            answer_vsr(&stream, &question(None), QuerySource::Injected(&q), &cfg).unwrap_err(),
            EngineError::TooManyRows(5)
        );
    }

    proptest! {
        #[test]
        fn streaming_matches_offline(
            sims in proptest::collection::vec(
                prop_oneof![0u8..4, 0u8..255].prop_map(|x| f64::from(x) / 8.0),
                1..300,
            ),
            k in 1usize..9,
        ) {
            prop_assert_eq!(retained(&sims, k), offline(&sims, k));
        }

        #[test]
        fn argmax_is_scale_invariant(
            vals in proptest::collection::vec(-1.0f64..1.0, 16),
            c in 0.01f64..100.0,
            pick in proptest::sample::subsequence((0..24).collect::<Vec<usize>>(), 4),
        ) {
            let perms = all_perms();
            let opts = [perms[pick[0]], perms[pick[1]], perms[pick[2]], perms[pick[3]]];
            let rows: Vec<[f64; 4]> = vals.chunks(4).map(|c| [c[0], c[1], c[2], c[3]]).collect();
            let r = ScoreMatrix::new(rows).unwrap();
            let base = score_options(&r, &opts);
            let mut sorted = base.scores;
            sorted.sort_by(f64::total_cmp);
            prop_assume!(sorted.windows(2).all(|w| w[1] - w[0] > 1e-9));
            prop_assert_eq!(score_options(&r.scaled(c), &opts).answer, base.answer);
        }
    }
}
