//! `EMB1` embedding files and JSON manifests.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size        | field                                  |
//! |--------|-------------|----------------------------------------|
//! | 0      | 4           | magic `b"EMB1"`                        |
//! | 4      | 1           | dtype, `0` = float32                   |
//! | 5      | 4           | dim, u32                               |
//! | 9      | 8           | count, u64                             |
//! | 17     | 4·dim·count | row-major f32 payload                  |
//! | end-4  | 4           | CRC-32 (IEEE) of the payload bytes     |
//!
//! Rows are stored exactly as the producer emitted them (not normalized).

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{normalize_f32, EmbeddingError, EmbeddingVector, FrameStream};
use crate::engine::QueryEmbeddings;
use crate::types::{CountingScene, ObjectInstance, RecallQuestion};

pub const MAGIC: [u8; 4] = *b"EMB1";
pub const DTYPE_F32: u8 = 0;
pub const HEADER_LEN: usize = 17;
pub const MAX_DIM: usize = 1 << 16;
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("rows have mixed dimensions: expected {expected}, row {row} has {found}")]
    MixedDimensions { expected: usize, row: usize, found: usize },
    #[error("dimension {0} is outside 1..=65536")]
    BadDimension(usize),
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported dtype {0}")]
    UnsupportedDtype(u8),
    #[error("file is truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("file has {0} unexpected trailing bytes")]
    TrailingData(u64),
    #[error("CRC mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("row {row}: {source}")]
    Row { row: usize, source: EmbeddingError },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Raw `f32` rows as read from an embedding file.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    rows: Vec<Vec<f32>>,
}

impl EmbeddingMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<f32>] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<Vec<f32>> {
        self.rows
    }

    /// Normalizes every row.
    pub fn normalized(&self) -> Result<Vec<EmbeddingVector>, FormatError> {
        self.rows
            .iter()
            .enumerate()
            .map(|(row, r)| normalize_f32(r).map_err(|source| FormatError::Row { row, source }))
            .collect()
    }
}

/// Serializes rows into the `EMB1` byte layout.
pub fn encode_embeddings<R: AsRef<[f32]>>(dim: usize, rows: &[R]) -> Result<Vec<u8>, FormatError> {
    if dim == 0 || dim > MAX_DIM {
        return Err(FormatError::BadDimension(dim));
    }
    if let Some((row, r)) = rows.iter().enumerate().find(|(_, r)| r.as_ref().len() != dim) {
        return Err(FormatError::MixedDimensions {
            expected: dim,
            row,
            found: r.as_ref().len(),
        });
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * dim * rows.len() + 4);
    out.extend_from_slice(&MAGIC);
    out.push(DTYPE_F32);
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(rows.len() as u64).to_le_bytes());
    for r in rows {
        for v in r.as_ref() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out[HEADER_LEN..]);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn write_embeddings<R: AsRef<[f32]>>(path: impl AsRef<Path>, dim: usize, rows: &[R]) -> Result<(), FormatError> {
    let path = path.as_ref();
    let bytes = encode_embeddings(dim, rows)?;
    fs::write(path, bytes).map_err(io_err(path))
}

/// Parses an `EMB1` byte buffer. Lengths are checked against the header
/// before any payload allocation.
pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingMatrix, FormatError> {
    let found = bytes.len() as u64;
    if bytes.len() < HEADER_LEN + 4 {
        if bytes.len() >= 4 && bytes[..4] != MAGIC {
            return Err(FormatError::BadMagic(bytes[..4].try_into().unwrap()));
        }
        return Err(FormatError::Truncated {
            expected: (HEADER_LEN + 4) as u64,
            found,
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    if bytes[4] != DTYPE_F32 {
        return Err(FormatError::UnsupportedDtype(bytes[4]));
    }
    let dim = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(bytes[9..17].try_into().unwrap());
    if dim == 0 || dim > MAX_DIM {
        return Err(FormatError::BadDimension(dim));
    }
    let expected = (dim as u64)
        .checked_mul(4)
        .and_then(|row| row.checked_mul(count))
        .and_then(|p| p.checked_add((HEADER_LEN + 4) as u64))
        .unwrap_or(u64::MAX);
    if found < expected {
        return Err(FormatError::Truncated { expected, found });
    }
    if found > expected {
        return Err(FormatError::TrailingData(found - expected));
    }
    let payload = &bytes[HEADER_LEN..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(FormatError::CrcMismatch { stored, computed });
    }
    let rows = payload
        .chunks_exact(4 * dim)
        .map(|row| {
            row.chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect()
        })
        .collect();
    Ok(EmbeddingMatrix { dim, rows })
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix, FormatError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_embeddings(&bytes)
}

/// Text embeddings keyed by the literal prompt string that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextTable {
    pub embedding_file: String,
    pub strings: Vec<String>,
}

/// A question plus, optionally, query embeddings injected directly
/// (rows: object, then auxiliaries 1..4) instead of being text-encoded.
///
/// Deserialized through a JSON object rather than `#[serde(flatten)]`, which
/// would silently accept unknown question keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "serde_json::Map<String, serde_json::Value>")]
pub struct ManifestQuestion {
    #[serde(flatten)]
    pub question: RecallQuestion,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_embedding_file: Option<String>,
}

impl TryFrom<serde_json::Map<String, serde_json::Value>> for ManifestQuestion {
    type Error = String;

    fn try_from(mut map: serde_json::Map<String, serde_json::Value>) -> Result<Self, String> {
        let query_embedding_file = match map.remove("query_embedding_file") {
            None | Some(serde_json::Value::Null) => None,
            Some(serde_json::Value::String(s)) => Some(s),
            Some(other) => return Err(format!("query_embedding_file must be a string, got {other}")),
        };
        let question = serde_json::from_value(serde_json::Value::Object(map)).map_err(|e| e.to_string())?;
        Ok(Self {
            question,
            query_embedding_file,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountingSpec {
    pub target_category: String,
    pub gold_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<CountingScene>,
    /// Instance ids visible in each frame, one list per frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_objects: Option<Vec<Vec<String>>>,
}

fn default_split() -> String {
    "default".into()
}

fn default_fps() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub video_id: String,
    #[serde(default = "default_split")]
    pub split: String,
    #[serde(default = "default_fps")]
    pub fps: f64,
    pub frame_count: u64,
    pub embedding_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_embeddings: Option<TextTable>,
    #[serde(default)]
    pub questions: Vec<ManifestQuestion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counting: Option<CountingSpec>,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("schema error in {path} at {field}: {message}")]
    Schema {
        path: PathBuf,
        field: String,
        message: String,
    },
    #[error("{path}: manifest says {manifest} frames, embedding file has {file}")]
    CountMismatch { path: PathBuf, manifest: u64, file: u64 },
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: FormatError },
}

impl ManifestError {
    /// Whether the failure came from the filesystem rather than content.
    pub fn is_io(&self) -> bool {
        match self {
            ManifestError::Io { .. } => true,
            ManifestError::Format { source, .. } => matches!(source, FormatError::Io { .. }),
            _ => false,
        }
    }
}

/// A question ready to evaluate.
#[derive(Debug, Clone)]
pub struct LoadedQuestion {
    pub question: RecallQuestion,
    pub injected: Option<QueryEmbeddings>,
}

/// Per-frame visible objects, aligned with the frame stream.
pub type FrameObjects = Vec<Vec<ObjectInstance>>;

#[derive(Debug, Clone)]
pub struct LoadedCounting {
    pub target_category: String,
    pub gold_count: u64,
    pub scene: Option<CountingScene>,
    pub frame_objects: Option<FrameObjects>,
}

/// A manifest with every linked file read and validated.
#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub path: PathBuf,
    pub manifest: Manifest,
    pub stream: FrameStream,
    pub text: Option<HashMap<String, Vec<f32>>>,
    pub questions: Vec<LoadedQuestion>,
    pub counting: Option<LoadedCounting>,
}

/// Loads a manifest and the files it references (paths relative to the
/// manifest's directory).
pub fn load_manifest(path: impl AsRef<Path>) -> Result<LoadedManifest, ManifestError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let manifest = parse_manifest(path, &text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let schema = |field: &str, message: String| ManifestError::Schema {
        path: path.to_path_buf(),
        field: field.to_string(),
        message,
    };
    let format = |p: &Path| {
        let p = p.to_path_buf();
        move |source| ManifestError::Format { path: p, source }
    };

    if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(schema(
            "schema_version",
            format!(
                "unsupported version {}, expected {MANIFEST_SCHEMA_VERSION}",
                manifest.schema_version
            ),
        ));
    }
    if !(manifest.fps.is_finite() && manifest.fps > 0.0) {
        return Err(schema("fps", format!("must be positive, got {}", manifest.fps)));
    }

    let frames_path = base.join(&manifest.embedding_file);
    let frames = read_embeddings(&frames_path).map_err(format(&frames_path))?;
    if frames.len() as u64 != manifest.frame_count {
        return Err(ManifestError::CountMismatch {
            path: path.to_path_buf(),
            manifest: manifest.frame_count,
            file: frames.len() as u64,
        });
    }
    let stream = FrameStream::from_embeddings(frames.normalized().map_err(format(&frames_path))?, manifest.fps)
        .map_err(|e| schema("embedding_file", e.to_string()))?;

    let text_table = match &manifest.text_embeddings {
        None => None,
        Some(table) => {
            let tpath = base.join(&table.embedding_file);
            let m = read_embeddings(&tpath).map_err(format(&tpath))?;
            if m.len() != table.strings.len() {
                return Err(schema(
                    "text_embeddings.strings",
                    format!("{} strings but {} rows", table.strings.len(), m.len()),
                ));
            }
            if m.dim() != stream.dim() && !stream.is_empty() {
                return Err(schema(
                    "text_embeddings.embedding_file",
                    format!("dim {} does not match frame dim {}", m.dim(), stream.dim()),
                ));
            }
            Some(table.strings.iter().cloned().zip(m.into_rows()).collect())
        }
    };

    let mut questions = Vec::with_capacity(manifest.questions.len());
    for (i, mq) in manifest.questions.iter().enumerate() {
        let injected = match &mq.query_embedding_file {
            None => None,
            Some(file) => {
                let qpath = base.join(file);
                let m = read_embeddings(&qpath).map_err(format(&qpath))?;
                if m.len() != 5 {
                    return Err(schema(
                        &format!("questions[{i}].query_embedding_file"),
                        format!("expected 5 rows (object + 4 auxiliaries), found {}", m.len()),
                    ));
                }
                let rows = m.normalized().map_err(format(&qpath))?;
                let q = QueryEmbeddings::injected(rows[0].clone(), rows[1..].to_vec())
                    .map_err(|e| schema(&format!("questions[{i}].query_embedding_file"), e.to_string()))?;
                Some(q)
            }
        };
        questions.push(LoadedQuestion {
            question: mq.question.clone(),
            injected,
        });
    }

    let counting = match &manifest.counting {
        None => None,
        Some(spec) => Some(load_counting(spec, manifest.frame_count, &schema)?),
    };

    Ok(LoadedManifest {
        path: path.to_path_buf(),
        manifest,
        stream,
        text: text_table,
        questions,
        counting,
    })
}

fn load_counting(
    spec: &CountingSpec,
    frame_count: u64,
    schema: &dyn Fn(&str, String) -> ManifestError,
) -> Result<LoadedCounting, ManifestError> {
    if let Some(scene) = &spec.scene {
        scene.validate().map_err(|e| schema("counting.scene", e.to_string()))?;
        if scene.target_category != spec.target_category {
            return Err(schema(
                "counting.scene.target_category",
                "does not match counting.target_category".into(),
            ));
        }
        let oracle = crate::segment::unique_count_oracle(scene);
        if oracle != spec.gold_count {
            return Err(schema(
                "counting.gold_count",
                format!("{} but the scene contains {oracle} unique targets", spec.gold_count),
            ));
        }
        if scene.total_frames() as u64 != frame_count {
            return Err(schema(
                "counting.scene",
                format!(
                    "scene spans {} frames, manifest has {frame_count}",
                    scene.total_frames()
                ),
            ));
        }
    }
    let frame_objects = match &spec.frame_objects {
        None => None,
        Some(lists) => {
            let scene = spec.scene.as_ref().ok_or_else(|| {
                schema(
                    "counting.frame_objects",
                    "requires counting.scene for instance categories".into(),
                )
            })?;
            if lists.len() as u64 != frame_count {
                return Err(schema(
                    "counting.frame_objects",
                    format!("{} entries for {frame_count} frames", lists.len()),
                ));
            }
            let by_id: HashMap<&str, &ObjectInstance> = scene
                .rooms
                .iter()
                .flat_map(|r| &r.objects)
                .map(|o| (o.instance_id.as_str(), o))
                .collect();
            let mut out = Vec::with_capacity(lists.len());
            for (t, ids) in lists.iter().enumerate() {
                let mut frame = Vec::with_capacity(ids.len());
                for id in ids {
                    let obj = by_id.get(id.as_str()).ok_or_else(|| {
                        schema(
                            &format!("counting.frame_objects[{t}]"),
                            format!("unknown instance id {id:?}"),
                        )
                    })?;
                    frame.push((*obj).clone());
                }
                out.push(frame);
            }
            Some(out)
        }
    };
    Ok(LoadedCounting {
        target_category: spec.target_category.clone(),
        gold_count: spec.gold_count,
        scene: spec.scene.clone(),
        frame_objects,
    })
}

/// Parses manifest JSON, reporting the failing field path on error.
pub fn parse_manifest(path: &Path, text: &str) -> Result<Manifest, ManifestError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ManifestError::Schema {
        path: path.to_path_buf(),
        field: "$".into(),
        message: e.to_string(),
    })?;
    // Validate questions one by one so the error carries an index.
    if let Some(qs) = value.get("questions").and_then(|q| q.as_array()) {
        for (i, q) in qs.iter().enumerate() {
            if let Err(e) = serde_json::from_value::<ManifestQuestion>(q.clone()) {
                return Err(ManifestError::Schema {
                    path: path.to_path_buf(),
                    field: format!("questions[{i}]"),
                    message: e.to_string(),
                });
            }
        }
    }
    serde_json::from_value(value).map_err(|e| ManifestError::Schema {
        path: path.to_path_buf(),
        field: "$".into(),
        message: e.to_string(),
    })
}
