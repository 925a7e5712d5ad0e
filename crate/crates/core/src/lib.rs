//! Stress tests for long-video benchmarks, built from embedding streams.
//!
//! - [`engine`]: a single-pass, bounded-memory top-k retrieval baseline for
//!   order-recall questions.
//! - [`perturb`]: back-to-back repetition of a clip and a harness that checks
//!   whether a counting system's answer survives it.
//! - [`segment`]: a surprise-segmentation counter that sums per-segment counts,
//!   next to an exact unique-identity oracle.
//! - [`metrics`]: multiple-choice accuracy and mean relative accuracy.
//! - [`synth`]: seeded generators with known answers.
//! - [`io`]: the `EMB1` embedding file format and JSON manifests.
//! - [`cli`]: batch commands behind the `streamprobe` binary.
//!
//! ```
//! use streamprobe::engine::{answer_vsr, EngineConfig, QuerySource};
//! use streamprobe::synth::{gen_vsr_instance, VsrSynthParams};
//!
//! let inst = gen_vsr_instance(&VsrSynthParams::random(1, 500, 32, 0.1, 0.0).unwrap()).unwrap();
//! let ans = answer_vsr(
//!     &inst.stream,
//!     &inst.question,
//!     QuerySource::Injected(&inst.queries),
//!     &EngineConfig::default(),
//! )
//! .unwrap();
//! assert_eq!(ans.answer, inst.question.gold_option());
//! assert_eq!(ans.retained.len(), 4);
//! ```

pub mod cli;
pub mod embedding;
pub mod engine;
pub mod io;
pub mod metrics;
pub mod perturb;
pub mod segment;
pub mod synth;
pub mod types;

pub use embedding::{cosine, normalize, EmbeddingVector, FrameRecord, FrameStream};
pub use engine::{answer_vsr, build_queries, score_options, EngineConfig, PromptMode, QueryEmbeddings, TopKBuffer};
pub use metrics::{accuracy, mean_mra, mra, MraConfig};
pub use perturb::{repeat_stream, run_invariance, InvarianceCase};
pub use segment::{segment_count, surprise_signal, unique_count_oracle, SurpriseConfig};
pub use types::{CountingScene, EvalReport, RecallQuestion};
