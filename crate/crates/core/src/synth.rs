//! Seeded synthetic instances for both tasks.
//!
//! Order-recall instances are built so the answer is known analytically,
//! then checked by direct computation before they are returned. Counting
//! scenes render each room as its own orthogonal subspace so room changes
//! are unambiguous.

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine, normalize_f32, EmbeddingError, EmbeddingVector, FrameStream};
use crate::engine::{
    score_options, BufferEntry, EngineError, PromptTemplates, QueryEmbeddings, ScoreMatrix, TextEncoder,
};
use crate::io::{
    write_embeddings, CountingSpec, FormatError, Manifest, ManifestQuestion, TextTable, MANIFEST_SCHEMA_VERSION,
};
use crate::segment::{unique_count_oracle, AnnotatedStream, CountingInstance, SegmentError};
use crate::types::{CountingScene, ObjectInstance, Ordering4, QuestionError, RecallQuestion, Room, SceneError};

/// Largest in-room drift between consecutive frames, in radians.
pub const MAX_DRIFT_STEP: f64 = std::f64::consts::PI / 14.0;

/// Noise norm up to which detected boundaries are guaranteed to match the
/// true room changes under the default surprise config.
pub const MAX_SOUND_NOISE: f64 = 0.1;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("infeasible parameters: {0}")]
    InfeasibleParams(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Question(#[from] QuestionError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

const OBJECTS: [&str; 8] = [
    "teddy bear",
    "red backpack",
    "yellow duck",
    "blue vase",
    "toy robot",
    "green umbrella",
    "wooden clock",
    "white cat",
];
const PLACES: [&str; 10] = [
    "bed",
    "bathtub",
    "sink",
    "floor",
    "sofa",
    "desk",
    "stove",
    "bookshelf",
    "window",
    "doorway",
];

/// Parameters for one order-recall instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VsrSynthParams {
    pub frames: usize,
    pub dim: usize,
    /// Minimum gap between the weakest needle and the strongest distractor
    /// in object similarity.
    pub margin: f64,
    /// 1-based, strictly increasing.
    pub needle_positions: [usize; 4],
    /// `sigma[u]` is the auxiliary co-located with the `u`-th needle.
    pub sigma: Ordering4,
    /// Norm of the Gaussian-direction noise added to every frame.
    pub noise: f64,
    pub seed: u64,
    /// Copy the first needle into a distractor slot (to test rejection).
    #[serde(default)]
    pub duplicate_needle: bool,
}

impl VsrSynthParams {
    /// Random needle positions and ordering drawn from `seed`.
    pub fn random(seed: u64, frames: usize, dim: usize, margin: f64, noise: f64) -> Result<Self, SynthError> {
        if frames < 4 {
            return Err(SynthError::InvalidParams(format!(
                "need at least 4 frames, got {frames}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_9ee7);
        let mut pos: Vec<usize> = rand::seq::index::sample(&mut rng, frames, 4)
            .into_iter()
            .map(|i| i + 1)
            .collect();
        pos.sort_unstable();
        let mut sigma: Ordering4 = [1, 2, 3, 4];
        sigma.shuffle(&mut rng);
        Ok(Self {
            frames,
            dim,
            margin,
            needle_positions: [pos[0], pos[1], pos[2], pos[3]],
            sigma,
            noise,
            seed,
            duplicate_needle: false,
        })
    }

    fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidParams(m));
        if self.frames < 4 {
            return bad(format!("need at least 4 frames, got {}", self.frames));
        }
        if self.dim < 5 {
            return bad(format!("need dim >= 5 for object + 4 auxiliaries, got {}", self.dim));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return bad(format!("margin must be >= 0, got {}", self.margin));
        }
        if !(0.0..1.0).contains(&self.noise) {
            return bad(format!("noise must be in [0, 1), got {}", self.noise));
        }
        let p = self.needle_positions;
        if p[0] < 1 || p.windows(2).any(|w| w[0] >= w[1]) || p[3] > self.frames {
            return bad(format!(
                "needle positions {p:?} must increase strictly within 1..={}",
                self.frames
            ));
        }
        let mut seen = [false; 4];
        for &a in &self.sigma {
            match usize::from(a).checked_sub(1) {
                Some(i) if i < 4 && !seen[i] => seen[i] = true,
                _ => return bad(format!("sigma {:?} is not a permutation", self.sigma)),
            }
        }
        if self.duplicate_needle && self.frames == 4 {
            return bad("no distractor slot for the duplicate needle".into());
        }
        Ok(())
    }
}

/// A generated instance plus the raw rows that would be written to disk.
#[derive(Debug, Clone)]
pub struct VsrInstance {
    pub stream: FrameStream,
    pub question: RecallQuestion,
    pub queries: QueryEmbeddings,
    pub frame_rows: Vec<Vec<f32>>,
    /// Object query followed by the four auxiliary queries.
    pub query_rows: Vec<Vec<f32>>,
    /// Smallest needle similarity minus largest distractor similarity.
    pub achieved_margin: f64,
}

fn gaussian(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn scaled_direction(rng: &mut impl Rng, dim: usize, norm: f64) -> Vec<f64> {
    if norm == 0.0 {
        return vec![0.0; dim];
    }
    let g = gaussian(rng, dim);
    let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    g.iter().map(|x| x * norm / n).collect()
}

/// `count` orthonormal vectors by Gram-Schmidt on seeded Gaussian draws.
fn orthonormal(rng: &mut impl Rng, dim: usize, count: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v = gaussian(rng, dim);
        // Two passes keep the result orthogonal to working precision.
        for _ in 0..2 {
            for b in &basis {
                let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            basis.push(v.iter().map(|x| x / n).collect());
        }
    }
    basis
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

fn axpy(acc: &mut [f64], a: f64, x: &[f64]) {
    acc.iter_mut().zip(x).for_each(|(y, x)| *y += a * x);
}

/// Generates one instance and verifies (i) the needles are strictly the
/// top-4 frames by object similarity with gap ≥ margin and (ii) the gold
/// ordering strictly out-scores the other three options.
pub fn gen_vsr_instance(p: &VsrSynthParams) -> Result<VsrInstance, SynthError> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let basis = orthonormal(&mut rng, p.dim, 5);
    let object = &basis[0];
    let aux = &basis[1..5];

    // Worst case: needle similarity >= (alpha - noise) / (1 + noise) and
    // distractor similarity <= noise / (1 - noise).
    let eta = p.noise;
    let alpha_min = eta + (1.0 + eta) * (p.margin + eta / (1.0 - eta));
    if alpha_min >= 1.0 {
        return Err(SynthError::InfeasibleParams(format!(
            "margin {} with noise {} leaves no room for the auxiliary component",
            p.margin, p.noise
        )));
    }
    let alpha = (alpha_min + 1.0) / 2.0;
    let beta = (1.0 - alpha * alpha).sqrt();

    let mut frame_rows = Vec::with_capacity(p.frames);
    for t in 1..=p.frames {
        let mut raw = scaled_direction(&mut rng, p.dim, p.noise);
        match p.needle_positions.iter().position(|&n| n == t) {
            Some(u) => {
                axpy(&mut raw, alpha, object);
                axpy(&mut raw, beta, &aux[usize::from(p.sigma[u]) - 1]);
            }
            None => {
                // unit direction orthogonal to the object query
                let mut w = gaussian(&mut rng, p.dim);
                let proj: f64 = w.iter().zip(object).map(|(x, y)| x * y).sum();
                axpy(&mut w, -proj, object);
                let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
                axpy(&mut raw, 1.0 / n, &w);
            }
        }
        frame_rows.push(to_f32(&raw));
    }
    if p.duplicate_needle {
        let slot = (1..=p.frames)
            .find(|t| !p.needle_positions.contains(t))
            .expect("validated: a distractor slot exists");
        frame_rows[slot - 1] = frame_rows[p.needle_positions[0] - 1].clone();
    }
    let query_rows: Vec<Vec<f32>> = basis.iter().map(|b| to_f32(b)).collect();

    let embeddings = frame_rows
        .iter()
        .map(|r| normalize_f32(r))
        .collect::<Result<Vec<_>, _>>()?;
    let stream = FrameStream::from_embeddings(embeddings, 1.0)?;
    let qvecs = query_rows
        .iter()
        .map(|r| normalize_f32(r))
        .collect::<Result<Vec<_>, _>>()?;
    let queries = QueryEmbeddings::injected(qvecs[0].clone(), qvecs[1..].to_vec())
        .map_err(|e| SynthError::InvalidParams(e.to_string()))?;

    // Check (i): top-4 identity with margin.
    let mut needle_min = f64::INFINITY;
    let mut distractor_max = f64::NEG_INFINITY;
    for f in stream.iter() {
        let s = cosine(&f.embedding, &queries.object)?;
        if p.needle_positions.contains(&f.index) {
            needle_min = needle_min.min(s);
        } else {
            distractor_max = distractor_max.max(s);
        }
    }
    let achieved_margin = needle_min - distractor_max;
    if !(achieved_margin > 0.0 && achieved_margin >= p.margin) {
        return Err(SynthError::InfeasibleParams(format!(
            "needle/distractor gap {achieved_margin:.6} does not strictly exceed zero and reach margin {}",
            p.margin
        )));
    }

    let question = make_question(&mut rng, p)?;

    // Check (ii): the gold option strictly wins.
    let kept: Vec<BufferEntry> = p
        .needle_positions
        .iter()
        .map(|&t| BufferEntry {
            index: t,
            similarity: 0.0,
            embedding: stream.frames()[t - 1].embedding.clone(),
        })
        .collect();
    let r =
        ScoreMatrix::from_frames(&kept, &queries.auxiliaries).map_err(|e| SynthError::InvalidParams(e.to_string()))?;
    let scored = score_options(&r, question.options());
    let gold = question.gold_option() - 1;
    if (0..4).any(|k| k != gold && scored.scores[k] >= scored.scores[gold]) {
        return Err(SynthError::InfeasibleParams(format!(
            "gold option does not strictly win: scores {:?}",
            scored.scores
        )));
    }

    Ok(VsrInstance {
        stream,
        question,
        queries,
        frame_rows,
        query_rows,
        achieved_margin,
    })
}

fn make_question(rng: &mut ChaCha8Rng, p: &VsrSynthParams) -> Result<RecallQuestion, SynthError> {
    let object = OBJECTS.choose(rng).expect("non-empty");
    let places: Vec<String> = PLACES.choose_multiple(rng, 4).map(|s| s.to_string()).collect();
    let mut options: Vec<Ordering4> = vec![p.sigma];
    while options.len() < 4 {
        let mut perm: Ordering4 = [1, 2, 3, 4];
        perm.shuffle(rng);
        if !options.contains(&perm) {
            options.push(perm);
        }
    }
    options.shuffle(rng);
    let gold = options.iter().position(|o| *o == p.sigma).expect("sigma is an option") + 1;
    let raw = format!(
        "In which order does the {object} appear next to the {}, the {}, the {} and the {}?",
        places[0], places[1], places[2], places[3]
    );
    Ok(RecallQuestion::new(
        format!("vsr-{:016x}", p.seed),
        *object,
        places,
        options.iter().map(|o| o.to_vec()).collect(),
        gold,
        Some(raw),
    )?)
}

/// Writes `<name>.frames.emb`, `<name>.queries.emb` and `<name>.json` into
/// `dir` and returns the manifest.
pub fn emit_vsr(dir: &Path, name: &str, split: &str, inst: &VsrInstance) -> Result<Manifest, SynthError> {
    let frames_file = format!("{name}.frames.emb");
    let queries_file = format!("{name}.queries.emb");
    let dim = inst.stream.dim();
    write_embeddings(dir.join(&frames_file), dim, &inst.frame_rows)?;
    write_embeddings(dir.join(&queries_file), dim, &inst.query_rows)?;
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        video_id: name.to_string(),
        split: split.to_string(),
        fps: 1.0,
        frame_count: inst.frame_rows.len() as u64,
        embedding_file: frames_file,
        text_embeddings: None,
        questions: vec![ManifestQuestion {
            question: inst.question.clone(),
            query_embedding_file: Some(queries_file),
        }],
        counting: None,
    };
    std::fs::write(
        dir.join(format!("{name}.json")),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(manifest)
}

/// Like [`emit_vsr`], but the question carries no query vectors. Every
/// prompt string the templates can produce is encoded with `encoder` and
/// stored as a text table (`<name>.text.emb`), so each prompt mode yields
/// its own queries.
pub fn emit_vsr_text(
    dir: &Path,
    name: &str,
    split: &str,
    inst: &VsrInstance,
    encoder: &dyn TextEncoder,
    templates: &PromptTemplates,
) -> Result<Manifest, SynthError> {
    let frames_file = format!("{name}.frames.emb");
    let text_file = format!("{name}.text.emb");
    let dim = inst.stream.dim();
    let strings = templates.expand(&inst.question);
    let rows = strings
        .iter()
        .map(|s| {
            let v = encoder.encode(s)?;
            if v.len() != dim {
                return Err(SynthError::InvalidParams(format!(
                    "encoder dimension {} differs from frame dimension {dim}",
                    v.len()
                )));
            }
            Ok(v.iter().map(|&x| x as f32).collect::<Vec<f32>>())
        })
        .collect::<Result<Vec<_>, SynthError>>()?;
    write_embeddings(dir.join(&frames_file), dim, &inst.frame_rows)?;
    write_embeddings(dir.join(&text_file), dim, &rows)?;
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        video_id: name.to_string(),
        split: split.to_string(),
        fps: 1.0,
        frame_count: inst.frame_rows.len() as u64,
        embedding_file: frames_file,
        text_embeddings: Some(TextTable {
            embedding_file: text_file,
            strings,
        }),
        questions: vec![ManifestQuestion {
            question: inst.question.clone(),
            query_embedding_file: None,
        }],
        counting: None,
    };
    std::fs::write(
        dir.join(format!("{name}.json")),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(manifest)
}

/// Layout of one room.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomLayout {
    pub dwell: usize,
    /// `(category, count)` pairs.
    pub objects: Vec<(String, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VscSynthParams {
    pub rooms: Vec<RoomLayout>,
    pub target_category: String,
    pub dim: usize,
    /// Norm of the per-frame noise vector.
    pub noise: f64,
    /// Chance that an object shows up in a frame beyond its guaranteed slot.
    pub extra_visibility: f64,
    pub seed: u64,
}

impl VscSynthParams {
    /// A random layout of 1 to 5 rooms with chairs and tables, at least one
    /// chair overall, and dwell times of 8 to 40 frames.
    pub fn random(seed: u64, dim: usize, noise: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0c0u64.rotate_left(40));
        let n_rooms = rng.gen_range(1..=5);
        let mut rooms: Vec<RoomLayout> = (0..n_rooms)
            .map(|_| RoomLayout {
                dwell: rng.gen_range(8..=40),
                objects: vec![
                    ("chair".into(), rng.gen_range(0..=4)),
                    ("table".into(), rng.gen_range(0..=2)),
                ],
            })
            .collect();
        if rooms.iter().all(|r| r.objects[0].1 == 0) {
            let i = rng.gen_range(0..n_rooms);
            rooms[i].objects[0].1 = rng.gen_range(1..=4);
        }
        Self {
            rooms,
            target_category: "chair".into(),
            dim,
            noise,
            extra_visibility: 0.25,
            seed,
        }
    }
}

/// A rendered scene with the raw rows that would be written to disk.
#[derive(Debug, Clone)]
pub struct VscScene {
    pub instance: CountingInstance,
    pub frame_rows: Vec<Vec<f32>>,
}

/// Renders a scene: room `r` drifts from an entry view to an exit view
/// inside its own 2-D subspace, orthogonal to every other room's.
pub fn gen_vsc_scene(p: &VscSynthParams, instance_id: &str) -> Result<VscScene, SynthError> {
    let r = p.rooms.len();
    if r == 0 {
        return Err(SynthError::InvalidParams("need at least one room".into()));
    }
    if let Some(i) = p.rooms.iter().position(|room| room.dwell == 0) {
        return Err(SynthError::InvalidParams(format!("room {i} has zero dwell")));
    }
    if !(0.0..1.0).contains(&p.noise) {
        return Err(SynthError::InvalidParams(format!(
            "noise must be in [0, 1), got {}",
            p.noise
        )));
    }
    if !(0.0..=1.0).contains(&p.extra_visibility) {
        return Err(SynthError::InvalidParams("extra_visibility must be in [0, 1]".into()));
    }
    if p.dim < 2 * r {
        return Err(SynthError::InfeasibleParams(format!(
            "{r} rooms need dim >= {}, got {}",
            2 * r,
            p.dim
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let basis = orthonormal(&mut rng, p.dim, 2 * r);

    let mut rooms = Vec::with_capacity(r);
    for (i, layout) in p.rooms.iter().enumerate() {
        let room_id = format!("room{i}");
        let objects = layout
            .objects
            .iter()
            .flat_map(|(cat, n)| {
                let room_id = room_id.clone();
                (0..*n).map(move |j| ObjectInstance {
                    instance_id: format!("{room_id}-{}{j}", cat.replace(' ', "_")),
                    category: cat.clone(),
                })
            })
            .collect();
        rooms.push(Room {
            room_id,
            dwell_frames: layout.dwell,
            objects,
        });
    }
    let scene = CountingScene::new(rooms, p.target_category.clone(), 1)?;

    let mut frame_rows = Vec::with_capacity(scene.total_frames());
    let mut visible = Vec::with_capacity(scene.total_frames());
    for (i, room) in scene.rooms.iter().enumerate() {
        let (entry, exit) = (&basis[2 * i], &basis[2 * i + 1]);
        let d = room.dwell_frames;
        let sweep = if d > 1 {
            ((d - 1) as f64 * MAX_DRIFT_STEP).min(FRAC_PI_2)
        } else {
            0.0
        };
        for j in 0..d {
            let phi = if d > 1 { sweep * j as f64 / (d - 1) as f64 } else { 0.0 };
            let mut raw = scaled_direction(&mut rng, p.dim, p.noise);
            axpy(&mut raw, phi.cos(), entry);
            axpy(&mut raw, phi.sin(), exit);
            frame_rows.push(to_f32(&raw));
            let mut seen: Vec<ObjectInstance> = room
                .objects
                .iter()
                .enumerate()
                .filter(|(o, _)| o % d == j % d || rng.gen_bool(p.extra_visibility))
                .map(|(_, obj)| obj.clone())
                .collect();
            seen.sort();
            visible.push(seen);
        }
    }
    let embeddings: Vec<EmbeddingVector> = frame_rows.iter().map(|r| normalize_f32(r)).collect::<Result<_, _>>()?;
    let stream = AnnotatedStream::new(FrameStream::from_embeddings(embeddings, 1.0)?, visible)?;
    Ok(VscScene {
        instance: CountingInstance {
            instance_id: instance_id.to_string(),
            scene,
            stream,
        },
        frame_rows,
    })
}

pub fn emit_vsc(dir: &Path, name: &str, split: &str, scene: &VscScene) -> Result<Manifest, SynthError> {
    let frames_file = format!("{name}.frames.emb");
    let inst = &scene.instance;
    write_embeddings(dir.join(&frames_file), inst.stream.stream().dim(), &scene.frame_rows)?;
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        video_id: name.to_string(),
        split: split.to_string(),
        fps: 1.0,
        frame_count: scene.frame_rows.len() as u64,
        embedding_file: frames_file,
        text_embeddings: None,
        questions: Vec::new(),
        counting: Some(CountingSpec {
            target_category: inst.scene.target_category.clone(),
            gold_count: unique_count_oracle(&inst.scene),
            scene: Some(inst.scene.clone()),
            frame_objects: Some(
                inst.stream
                    .objects()
                    .iter()
                    .map(|f| f.iter().map(|o| o.instance_id.clone()).collect())
                    .collect(),
            ),
        }),
    };
    std::fs::write(
        dir.join(format!("{name}.json")),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{answer_vsr, EngineConfig, QuerySource};
    use crate::segment::{surprise_signal, true_boundaries, SurpriseConfig};

    fn params(seed: u64) -> VsrSynthParams {
        VsrSynthParams::random(seed, 120, 32, 0.1, 0.0).unwrap()
    }

    #[test]
    fn generated_instances_are_answered_correctly() {
        for seed in 0..20 {
            let inst = gen_vsr_instance(&params(seed)).unwrap();
            assert!(inst.achieved_margin >= 0.1);
            let out = answer_vsr(
                &inst.stream,
                &inst.question,
                QuerySource::Injected(&inst.queries),
                &EngineConfig::default(),
            )
            .unwrap();
            assert_eq!(out.answer, inst.question.gold_option(), "seed {seed}");
        }
    }

    #[test]
    fn needles_only_stream() {
        let mut p = params(3);
        p.frames = 4;
        p.needle_positions = [1, 2, 3, 4];
        let inst = gen_vsr_instance(&p).unwrap();
        let out = answer_vsr(
            &inst.stream,
            &inst.question,
            QuerySource::Injected(&inst.queries),
            &EngineConfig::default(),
        )
        .unwrap();
        assert_eq!(out.answer, inst.question.gold_option());
    }

    #[test]
    fn duplicate_needle_is_rejected() {
        let mut p = params(5);
        p.margin = 0.0;
        p.duplicate_needle = true;
        assert!(matches!(gen_vsr_instance(&p), Err(SynthError::InfeasibleParams(_))));
    }

    #[test]
    fn oversized_margin_is_rejected() {
        let mut p = params(5);
        p.margin = 1.0;
        assert!(matches!(gen_vsr_instance(&p), Err(SynthError::InfeasibleParams(_))));
        let mut p = params(5);
        p.noise = 0.4;
        p.margin = 0.3;
        assert!(matches!(gen_vsr_instance(&p), Err(SynthError::InfeasibleParams(_))));
    }

    #[test]
    fn invalid_params() {
        let mut p = params(1);
        p.needle_positions = [3, 3, 5, 9];
        assert!(matches!(gen_vsr_instance(&p), Err(SynthError::InvalidParams(_))));
        let mut p = params(1);
        p.dim = 4;
        assert!(matches!(gen_vsr_instance(&p), Err(SynthError::InvalidParams(_))));
        let mut p = params(1);
        p.sigma = [1, 1, 2, 3];
        assert!(matches!(gen_vsr_instance(&p), Err(SynthError::InvalidParams(_))));
    }

    #[test]
    fn same_seed_same_rows() {
        let a = gen_vsr_instance(&params(9)).unwrap();
        let b = gen_vsr_instance(&params(9)).unwrap();
        assert_eq!(a.frame_rows, b.frame_rows);
        assert_eq!(a.question, b.question);
    }

    fn two_rooms(noise: f64) -> VscSynthParams {
        VscSynthParams {
            rooms: vec![
                RoomLayout {
                    dwell: 12,
                    objects: vec![("chair".into(), 3)],
                },
                RoomLayout {
                    dwell: 9,
                    objects: vec![("chair".into(), 2), ("table".into(), 1)],
                },
            ],
            target_category: "chair".into(),
            dim: 8,
            noise,
            extra_visibility: 0.25,
            seed: 11,
        }
    }

    #[test]
    fn two_room_scene() {
        let s = gen_vsc_scene(&two_rooms(0.0), "s").unwrap();
        assert_eq!(s.instance.gold(), 5);
        let trace = surprise_signal(s.instance.stream.stream(), &SurpriseConfig::default()).unwrap();
        assert_eq!(trace.boundaries, vec![13]);
        assert_eq!(trace.boundaries, true_boundaries(&s.instance.scene));
        // every object is seen during its room's dwell
        for (i, room) in s.instance.scene.rooms.iter().enumerate() {
            let start: usize = s.instance.scene.rooms[..i].iter().map(|r| r.dwell_frames).sum();
            let seen: std::collections::BTreeSet<_> = s.instance.stream.objects()[start..start + room.dwell_frames]
                .iter()
                .flatten()
                .collect();
            assert_eq!(seen.len(), room.objects.len());
        }
    }

    #[test]
    fn single_room_has_no_boundaries() {
        let mut p = two_rooms(0.05);
        p.rooms.truncate(1);
        let s = gen_vsc_scene(&p, "s").unwrap();
        let trace = surprise_signal(s.instance.stream.stream(), &SurpriseConfig::default()).unwrap();
        assert!(trace.boundaries.is_empty());
        let counted = crate::segment::segment_count(&s.instance.stream, "chair", &SurpriseConfig::default()).unwrap();
        assert_eq!(counted.prediction, s.instance.gold());
    }

    #[test]
    fn too_few_dimensions() {
        let mut p = two_rooms(0.0);
        p.dim = 3;
        assert!(matches!(gen_vsc_scene(&p, "s"), Err(SynthError::InfeasibleParams(_))));
    }

    #[test]
    fn random_layouts_have_a_target() {
        for seed in 0..50 {
            let p = VscSynthParams::random(seed, 16, 0.05);
            let s = gen_vsc_scene(&p, "s").unwrap();
            assert!(s.instance.gold() >= 1);
        }
    }
}
