//! Batch commands: `run-vsr`, `run-vsc-repeat`, `gen`, `report`.
//!
//! Per-instance rows go to JSON-lines files, aggregates to CSV with four
//! decimals, and plot series to JSON. Given the same configuration, seed and
//! inputs every output file is byte-identical across runs; rows are sorted
//! before they are written.
//!
//! Exit codes: 0 success, 2 configuration error, 3 I/O or input-data error.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::engine::{
    answer_vsr, EngineConfig, EngineError, HashedBagOfWords, LookupEncoder, PromptMode, PromptTemplates, QuerySource,
};
use crate::io::{load_manifest, LoadedManifest, ManifestError};
use crate::metrics::MraConfig;
use crate::perturb::{repeat_sweep, RepeatSweep};
use crate::segment::{
    segment_count, AnnotatedStream, CountingInstance, CountingModel, SegmentCounter, SurpriseConfig, ThresholdRule,
    UniqueCounter,
};
use crate::synth::{self, SynthError, VscSynthParams, VsrSynthParams};
use crate::types::{Condition, EvalReport, MetricKind, ReportRow};

/// Version stamped on every JSON-lines row.
pub const ROW_SCHEMA_VERSION: u32 = 1;

/// Environment variable for the default output directory.
pub const OUT_DIR_ENV: &str = "STREAMPROBE_OUT_DIR";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("input error: {0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) | CliError::Data(_) => 3,
        }
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

impl From<ManifestError> for CliError {
    fn from(e: ManifestError) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "streamprobe",
    version,
    about = "Streaming retrieval baseline and repeat-invariance stress tests over embedding streams"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Answer order-recall questions with the streaming top-k baseline.
    RunVsr(RunVsrArgs),
    /// Sweep back-to-back repeats over counting scenes and score each model.
    RunVscRepeat(RunVscRepeatArgs),
    /// Generate synthetic manifests and embedding files.
    Gen(GenArgs),
    /// Merge JSON-lines rows from earlier runs into summary tables.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Output directory.
    #[arg(long, env = OUT_DIR_ENV, default_value = "streamprobe-out")]
    pub out: PathBuf,
    /// Worker threads (default: available parallelism). Outputs do not
    /// depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize)]
pub enum ModeArg {
    /// Object query from the averaged prompt ensemble (default).
    Ensemble,
    /// Ablation: a single basic template instead of the ensemble.
    Basic,
    /// Ablation: encode the raw question without extracting the object.
    Raw,
}

impl From<ModeArg> for PromptMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Ensemble => PromptMode::Ensemble,
            ModeArg::Basic => PromptMode::BasicPrompt,
            ModeArg::Raw => PromptMode::RawQuestion,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RunVsrArgs {
    /// Glob matching manifest JSON files.
    #[arg(long)]
    pub manifests: String,
    /// Prompt modes to evaluate, comma separated. `basic` and `raw` are the
    /// text-side ablations; modes only matter for text-encoded queries.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "ensemble")]
    pub mode: Vec<ModeArg>,
    /// Frames kept in the streaming buffer (1..=4).
    #[arg(short = 'k', long, default_value_t = 4)]
    pub k: usize,
    /// JSON file with prompt templates (`version`, `ensemble`, `basic`, `joint`).
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SurpriseArgs {
    /// Adaptive rule: standard deviations above the trailing mean.
    #[arg(long, default_value_t = 3.0)]
    pub surprise_c: f64,
    /// Adaptive rule: trailing window length in frames.
    #[arg(long, default_value_t = 30)]
    pub surprise_window: usize,
    /// Adaptive rule: absolute minimum surprise for a boundary.
    #[arg(long, default_value_t = 0.5)]
    pub surprise_floor: f64,
    /// Use a fixed threshold instead of the adaptive rule.
    #[arg(long)]
    pub surprise_tau: Option<f64>,
}

impl SurpriseArgs {
    fn config(&self) -> SurpriseConfig {
        match self.surprise_tau {
            Some(tau) => SurpriseConfig::fixed(tau),
            None => SurpriseConfig {
                threshold: ThresholdRule::Adaptive {
                    c: self.surprise_c,
                    window: self.surprise_window,
                    min_surprise: self.surprise_floor,
                },
            },
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RunVscRepeatArgs {
    /// Glob matching counting manifests. Without it synthetic scenes are used.
    #[arg(long)]
    pub manifests: Option<String>,
    /// Number of synthetic scenes when no manifests are given.
    #[arg(long, default_value_t = 50)]
    pub scenes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Embedding dimension of synthetic scenes.
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    /// Per-frame noise norm of synthetic scenes.
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    /// Repeat factors to sweep, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    pub sweep: Vec<usize>,
    #[command(flatten)]
    pub surprise: SurpriseArgs,
    #[command(flatten)]
    #[serde(skip)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum GenKind {
    Vsr,
    Vsc,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub kind: GenKind,
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Frames per order-recall stream.
    #[arg(long, default_value_t = 600)]
    pub frames: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    /// Needle/distractor similarity margin for order-recall instances.
    #[arg(long, default_value_t = 0.1)]
    pub margin: f64,
    /// Per-frame noise norm.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Split label written into each manifest.
    #[arg(long, default_value = "synthetic")]
    pub split: String,
    /// Order-recall only: store hashed bag-of-words text embeddings of every
    /// prompt instead of injected query vectors, so prompt modes differ.
    #[arg(long)]
    pub text_queries: bool,
    #[command(flatten)]
    #[serde(skip)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportArgs {
    /// JSON-lines files or directories containing them.
    #[arg(long, num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub common: CommonArgs,
}

/// Parses `args` (including the program name), runs, prints, and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(summary) => {
            // A closed pipe (e.g. `| head`) is not an error worth reporting.
            let _ = writeln!(std::io::stdout(), "{summary}");
            0
        }
        Err(e) => {
            eprintln!("streamprobe: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command and returns a one-paragraph summary.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::RunVsr(a) => with_pool(&a.common, || cmd_run_vsr(a)).map(|o| o.summary),
        Command::RunVscRepeat(a) => with_pool(&a.common, || cmd_run_vsc_repeat(a)).map(|o| o.summary),
        Command::Gen(a) => with_pool(&a.common, || cmd_gen(a)),
        Command::Report(a) => cmd_report(a),
    }
}

fn with_pool<T: Send>(common: &CommonArgs, f: impl FnOnce() -> Result<T, CliError> + Send) -> Result<T, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.workers {
        if n == 0 {
            return Err(CliError::Config("--workers must be >= 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(f)
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_error(dir))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(io_error(path))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(io_error(path))?;
    let mut w = std::io::BufWriter::new(file);
    for row in rows {
        let line = serde_json::to_string(row).map_err(|e| CliError::Data(e.to_string()))?;
        writeln!(w, "{line}").map_err(io_error(path))?;
    }
    w.flush().map_err(io_error(path))
}

fn to_json_pretty<T: Serialize>(v: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Data(e.to_string()))
}

fn expand_glob(pattern: &str) -> Result<Vec<PathBuf>, CliError> {
    let paths = glob::glob(pattern)
        .map_err(|e| CliError::Config(format!("bad glob {pattern:?}: {e}")))?
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Io(e.to_string()))?;
    if paths.is_empty() {
        return Err(CliError::Config(format!("glob {pattern:?} matched no files")));
    }
    let mut paths = paths;
    paths.sort();
    Ok(paths)
}

fn load_templates(path: Option<&Path>) -> Result<PromptTemplates, CliError> {
    match path {
        None => Ok(PromptTemplates::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(io_error(p))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("templates {}: {e}", p.display())))
        }
    }
}

/// One evaluated question, as written to `vsr_rows.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VsrRow {
    pub schema_version: u32,
    pub kind: String,
    pub video_id: String,
    pub question_id: String,
    pub split: String,
    pub mode: String,
    pub retained_frames: Vec<crate::engine::RetainedFrame>,
    pub scores: Vec<f64>,
    pub predicted: usize,
    pub gold: usize,
    pub correct: bool,
}

#[derive(Debug)]
pub struct VsrOutcome {
    pub rows: Vec<VsrRow>,
    pub reports: BTreeMap<String, EvalReport>,
    pub summary: String,
}

pub fn cmd_run_vsr(args: &RunVsrArgs) -> Result<VsrOutcome, CliError> {
    if !(1..=4).contains(&args.k) {
        return Err(CliError::Config(format!("-k must be in 1..=4, got {}", args.k)));
    }
    if args.mode.is_empty() {
        return Err(CliError::Config("at least one --mode is required".into()));
    }
    let templates = load_templates(args.templates.as_deref())?;
    let paths = expand_glob(&args.manifests)?;
    let modes: Vec<PromptMode> = args
        .mode
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(PromptMode::from)
        .collect();
    let out = &args.common.out;
    ensure_dir(out)?;

    let loaded: Vec<Result<LoadedManifest, ManifestError>> = paths.par_iter().map(load_manifest).collect();

    let mut first_error: Option<CliError> = None;
    let mut manifests = Vec::new();
    for l in loaded {
        match l {
            Ok(m) => manifests.push(m),
            Err(e) => {
                first_error.get_or_insert(e.into());
            }
        }
    }

    let jobs: Vec<(&LoadedManifest, usize, PromptMode)> = manifests
        .iter()
        .flat_map(|m| {
            let modes = &modes;
            (0..m.questions.len()).flat_map(move |q| modes.iter().map(move |&mode| (m, q, mode)))
        })
        .collect();

    let results: Vec<Result<VsrRow, CliError>> = jobs
        .par_iter()
        .map(|&(m, qi, mode)| evaluate_question(m, qi, mode, args.k, &templates))
        .collect();

    let mut rows = Vec::new();
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    rows.sort_by(|a, b| (&a.mode, &a.video_id, &a.question_id).cmp(&(&b.mode, &b.video_id, &b.question_id)));
    write_jsonl(&out.join("vsr_rows.jsonl"), &rows)?;

    let mut echoed = args.clone();
    echoed.mode.sort();
    echoed.mode.dedup();
    let config = json!({
        "command": "run-vsr",
        "args": echoed,
        "templates": templates,
    });
    let mut reports = BTreeMap::new();
    for mode in &modes {
        let report_rows: Vec<ReportRow> = rows
            .iter()
            .filter(|r| r.mode == mode.as_str())
            .map(|r| ReportRow {
                instance_id: format!("{}/{}", r.video_id, r.question_id),
                condition: Condition {
                    split: r.split.clone(),
                    repeat_factor: 1,
                },
                prediction: r.predicted as u64,
                gold: r.gold as u64,
                breakdown: json!({ "scores": r.scores, "retained_frames": r.retained_frames }),
            })
            .collect();
        if report_rows.is_empty() {
            continue;
        }
        let report = EvalReport::from_rows(MetricKind::Accuracy, config.clone(), report_rows)
            .map_err(|e| CliError::Data(e.to_string()))?;
        let text = report.to_json().map_err(|e| CliError::Data(e.to_string()))? + "\n";
        write_file(&out.join(format!("vsr_report_{}.json", mode.as_str())), &text)?;
        reports.insert(mode.as_str().to_string(), report);
    }
    let table = accuracy_table(rows.iter().map(|r| (r.mode.as_str(), r.split.as_str(), r.correct)));
    write_file(&out.join("vsr_accuracy.csv"), &table.long_csv())?;
    write_file(&out.join("vsr_table.csv"), &table.matrix_csv())?;

    if let Some(e) = first_error {
        return Err(e);
    }
    let mut summary = format!(
        "evaluated {} question rows from {} manifests\n",
        rows.len(),
        manifests.len()
    );
    summary.push_str(&table.long_csv());
    Ok(VsrOutcome {
        rows,
        reports,
        summary: summary.trim_end().to_string(),
    })
}

fn evaluate_question(
    m: &LoadedManifest,
    qi: usize,
    mode: PromptMode,
    k: usize,
    templates: &PromptTemplates,
) -> Result<VsrRow, CliError> {
    let lq = &m.questions[qi];
    let cfg = EngineConfig { k, mode };
    let encoder;
    let source = match (&lq.injected, &m.text) {
        (Some(q), _) => QuerySource::Injected(q),
        (None, Some(table)) => {
            encoder = LookupEncoder::new(table.clone());
            QuerySource::Text {
                encoder: &encoder,
                templates,
            }
        }
        (None, None) => {
            return Err(CliError::Data(format!(
                "{}: {}",
                m.path.display(),
                EngineError::EncoderUnavailable(lq.question.question_id().to_string())
            )))
        }
    };
    let ans = answer_vsr(m.stream.iter(), &lq.question, source, &cfg)
        .map_err(|e| CliError::Data(format!("{} {}: {e}", m.path.display(), lq.question.question_id())))?;
    let gold = lq.question.gold_option();
    Ok(VsrRow {
        schema_version: ROW_SCHEMA_VERSION,
        kind: "vsr".into(),
        video_id: m.manifest.video_id.clone(),
        question_id: lq.question.question_id().to_string(),
        split: m.manifest.split.clone(),
        mode: mode.as_str().into(),
        retained_frames: ans.retained,
        scores: ans.scores.to_vec(),
        predicted: ans.answer,
        gold,
        correct: ans.answer == gold,
    })
}

/// Accuracy by (mode, split).
pub struct AccuracyTable {
    cells: BTreeMap<(String, String), (usize, usize)>,
}

fn accuracy_table<'a>(items: impl Iterator<Item = (&'a str, &'a str, bool)>) -> AccuracyTable {
    let mut cells: BTreeMap<(String, String), (usize, usize)> = BTreeMap::new();
    for (mode, split, correct) in items {
        let cell = cells.entry((mode.to_string(), split.to_string())).or_default();
        cell.0 += usize::from(correct);
        cell.1 += 1;
    }
    AccuracyTable { cells }
}

impl AccuracyTable {
    pub fn get(&self, mode: &str, split: &str) -> Option<f64> {
        self.cells
            .get(&(mode.to_string(), split.to_string()))
            .map(|&(hit, n)| hit as f64 / n as f64)
    }

    pub fn long_csv(&self) -> String {
        let mut s = String::from("mode,split,n,accuracy\n");
        for ((mode, split), &(hit, n)) in &self.cells {
            let _ = writeln!(s, "{mode},{split},{n},{:.4}", hit as f64 / n as f64);
        }
        s
    }

    /// One row per mode, one column per split.
    pub fn matrix_csv(&self) -> String {
        let splits: BTreeSet<&str> = self.cells.keys().map(|(_, s)| s.as_str()).collect();
        let modes: BTreeSet<&str> = self.cells.keys().map(|(m, _)| m.as_str()).collect();
        let mut s = String::from("mode");
        for sp in &splits {
            let _ = write!(s, ",{sp}");
        }
        s.push('\n');
        for m in &modes {
            s.push_str(m);
            for sp in &splits {
                match self.get(m, sp) {
                    Some(v) => {
                        let _ = write!(s, ",{v:.4}");
                    }
                    None => s.push(','),
                }
            }
            s.push('\n');
        }
        s
    }
}

/// One swept prediction, as written to `vsc_rows.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VscRow {
    pub schema_version: u32,
    pub kind: String,
    pub model: String,
    pub split: String,
    pub instance_id: String,
    pub k: usize,
    pub pred: u64,
    pub gold: u64,
    pub mra: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRow {
    pub schema_version: u32,
    pub kind: String,
    pub instance_id: String,
    pub k: usize,
    pub segment_index: usize,
    pub start_t: usize,
    pub end_t: usize,
    pub count: u64,
}

#[derive(Debug)]
pub struct VscOutcome {
    pub sweeps: Vec<RepeatSweep>,
    pub summary: String,
}

fn counting_instance(m: &LoadedManifest) -> Result<CountingInstance, CliError> {
    let fail = |msg: &str| CliError::Data(format!("{}: {msg}", m.path.display()));
    let counting = m.counting.as_ref().ok_or_else(|| fail("no counting section"))?;
    let scene = counting
        .scene
        .clone()
        .ok_or_else(|| fail("counting.scene is required"))?;
    let objects = counting
        .frame_objects
        .clone()
        .ok_or_else(|| fail("counting.frame_objects is required"))?;
    let stream = AnnotatedStream::new(m.stream.clone(), objects).map_err(|e| fail(&e.to_string()))?;
    Ok(CountingInstance {
        instance_id: m.manifest.video_id.clone(),
        scene,
        stream,
    })
}

pub fn cmd_run_vsc_repeat(args: &RunVscRepeatArgs) -> Result<VscOutcome, CliError> {
    if args.sweep.is_empty() || args.sweep.contains(&0) {
        return Err(CliError::Config("--sweep needs repeat factors >= 1".into()));
    }
    let surprise = args.surprise.config();
    surprise.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let out = &args.common.out;

    let (instances, split) = match &args.manifests {
        Some(pattern) => {
            let paths = expand_glob(pattern)?;
            let loaded = paths
                .par_iter()
                .map(|p| {
                    load_manifest(p).map_err(CliError::from).and_then(|m| {
                        let split = m.manifest.split.clone();
                        counting_instance(&m).map(|i| (i, split))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let splits: BTreeSet<&str> = loaded.iter().map(|(_, s)| s.as_str()).collect();
            let split = splits.into_iter().collect::<Vec<_>>().join("+");
            (loaded.into_iter().map(|(i, _)| i).collect::<Vec<_>>(), split)
        }
        None => {
            if args.scenes == 0 {
                return Err(CliError::Config("--scenes must be >= 1".into()));
            }
            let scenes = synthetic_scenes(args.seed, args.scenes, args.dim, args.noise)
                .map_err(|e| CliError::Config(e.to_string()))?;
            (scenes, "synthetic".to_string())
        }
    };
    ensure_dir(out)?;

    let mra_cfg = MraConfig::default();
    let segmenter = SegmentCounter { config: surprise };
    let models: [&dyn CountingModel; 2] = [&segmenter, &UniqueCounter];
    let sweeps = models
        .iter()
        .map(|m| repeat_sweep(*m, &instances, &args.sweep, &mra_cfg))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Data(e.to_string()))?;

    let config = json!({ "command": "run-vsc-repeat", "args": args, "surprise": surprise });
    let mut jsonl = Vec::new();
    let mut plot = Vec::new();
    for sweep in &sweeps {
        let mut csv = String::from("instance_id,k,pred,gold,mra\n");
        for r in &sweep.rows {
            let _ = writeln!(csv, "{},{},{},{},{:.4}", r.instance_id, r.k, r.pred, r.gold, r.mra);
            jsonl.push(VscRow {
                schema_version: ROW_SCHEMA_VERSION,
                kind: "vsc".into(),
                model: sweep.model.clone(),
                split: split.clone(),
                instance_id: r.instance_id.clone(),
                k: r.k,
                pred: r.pred,
                gold: r.gold,
                mra: r.mra,
            });
        }
        write_file(&out.join(format!("vsc_repeat_{}.csv", sweep.model)), &csv)?;
        plot.push(json!({
            "model": sweep.model,
            "k": sweep.points.iter().map(|p| p.k).collect::<Vec<_>>(),
            "mean_mra": sweep.points.iter().map(|p| p.mean_mra).collect::<Vec<_>>(),
            "mean_pred": sweep.points.iter().map(|p| p.mean_pred).collect::<Vec<_>>(),
        }));

        let report_rows = sweep
            .rows
            .iter()
            .map(|r| ReportRow {
                instance_id: r.instance_id.clone(),
                condition: Condition {
                    split: split.clone(),
                    repeat_factor: r.k,
                },
                prediction: r.pred,
                gold: r.gold,
                breakdown: serde_json::Value::Null,
            })
            .collect();
        let report = EvalReport::from_rows(MetricKind::Mra, config.clone(), report_rows)
            .map_err(|e| CliError::Data(e.to_string()))?;
        let text = report.to_json().map_err(|e| CliError::Data(e.to_string()))? + "\n";
        write_file(&out.join(format!("vsc_report_{}.json", sweep.model)), &text)?;
    }
    write_jsonl(&out.join("vsc_rows.jsonl"), &jsonl)?;
    write_file(
        &out.join("vsc_repeat_plot.json"),
        &to_json_pretty(&json!({ "series": plot }))?,
    )?;
    let invariance: Vec<_> = sweeps.iter().flat_map(|s| &s.reports).collect();
    write_file(
        &out.join("vsc_invariance.json"),
        &to_json_pretty(&json!({
            "config": config,
            "reports": invariance,
        }))?,
    )?;

    // Segment traces for the surprise counter.
    let mut traces = Vec::new();
    for &k in &args.sweep {
        let per_instance: Vec<Result<Vec<SegmentRow>, CliError>> = instances
            .par_iter()
            .map(|inst| {
                let rep = crate::perturb::repeat_instance(inst, k).map_err(|e| CliError::Data(e.to_string()))?;
                let counted = segment_count(&rep.stream, &rep.scene.target_category, &surprise)
                    .map_err(|e| CliError::Data(e.to_string()))?;
                Ok(counted
                    .segments
                    .into_iter()
                    .map(|s| SegmentRow {
                        schema_version: ROW_SCHEMA_VERSION,
                        kind: "segment".into(),
                        instance_id: inst.instance_id.clone(),
                        k,
                        segment_index: s.segment_index,
                        start_t: s.start_t,
                        end_t: s.end_t,
                        count: s.count,
                    })
                    .collect())
            })
            .collect();
        // Failed instances already show up as errors in the sweep rows.
        traces.extend(per_instance.into_iter().flatten().flatten());
    }
    traces.sort_by(|a, b| (a.k, &a.instance_id, a.segment_index).cmp(&(b.k, &b.instance_id, b.segment_index)));
    write_jsonl(&out.join("vsc_segments.jsonl"), &traces)?;

    let mut summary = format!(
        "{} scenes, sweep {:?}\nmodel,k,mean_mra,mean_pred\n",
        instances.len(),
        args.sweep
    );
    for s in &sweeps {
        for p in &s.points {
            let _ = writeln!(summary, "{},{},{:.4},{:.4}", s.model, p.k, p.mean_mra, p.mean_pred);
        }
    }
    Ok(VscOutcome {
        sweeps,
        summary: summary.trim_end().to_string(),
    })
}

/// Seeded synthetic counting scenes named `scene-0000`, `scene-0001`, ...
pub fn synthetic_scenes(seed: u64, count: usize, dim: usize, noise: f64) -> Result<Vec<CountingInstance>, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..count).map(|_| rng.next_u64()).collect();
    seeds
        .par_iter()
        .enumerate()
        .map(|(i, &s)| {
            let p = VscSynthParams::random(s, dim, noise);
            synth::gen_vsc_scene(&p, &format!("scene-{i:04}")).map(|v| v.instance)
        })
        .collect()
}

pub fn cmd_gen(args: &GenArgs) -> Result<String, CliError> {
    if args.count == 0 {
        return Err(CliError::Config("--count must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let seeds: Vec<u64> = (0..args.count).map(|_| rng.next_u64()).collect();
    let out = &args.common.out;
    let config_err = |e: SynthError| CliError::Config(e.to_string());
    let write_err = |e: SynthError| match e {
        SynthError::Io(e) => CliError::Io(e.to_string()),
        SynthError::Format(e) => CliError::Io(e.to_string()),
        other => CliError::Data(other.to_string()),
    };
    // Generate everything first so an infeasible request writes nothing.
    match args.kind {
        GenKind::Vsr => {
            let instances = seeds
                .par_iter()
                .map(|&s| {
                    VsrSynthParams::random(s, args.frames, args.dim, args.margin, args.noise)
                        .and_then(|p| synth::gen_vsr_instance(&p))
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(config_err)?;
            ensure_dir(out)?;
            let encoder = HashedBagOfWords::new(args.dim);
            let templates = PromptTemplates::default();
            for (i, inst) in instances.iter().enumerate() {
                let name = format!("vsr-{i:04}");
                if args.text_queries {
                    synth::emit_vsr_text(out, &name, &args.split, inst, &encoder, &templates)
                } else {
                    synth::emit_vsr(out, &name, &args.split, inst)
                }
                .map_err(write_err)?;
            }
        }
        GenKind::Vsc => {
            let scenes = seeds
                .par_iter()
                .enumerate()
                .map(|(i, &s)| {
                    let p = VscSynthParams::random(s, args.dim, args.noise);
                    synth::gen_vsc_scene(&p, &format!("vsc-{i:04}"))
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(config_err)?;
            ensure_dir(out)?;
            for (i, scene) in scenes.iter().enumerate() {
                synth::emit_vsc(out, &format!("vsc-{i:04}"), &args.split, scene).map_err(write_err)?;
            }
        }
    }
    Ok(format!(
        "wrote {} {} manifests to {}",
        args.count,
        match args.kind {
            GenKind::Vsr => "vsr",
            GenKind::Vsc => "vsc",
        },
        out.display()
    ))
}

fn collect_jsonl(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(io_error(p))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            found.sort();
            files.extend(found);
        } else if p.exists() {
            files.push(p.clone());
        } else {
            return Err(CliError::Io(format!("{}: no such file", p.display())));
        }
    }
    if files.is_empty() {
        return Err(CliError::Config("no JSON-lines inputs found".into()));
    }
    Ok(files)
}

pub fn cmd_report(args: &ReportArgs) -> Result<String, CliError> {
    let files = collect_jsonl(&args.inputs)?;
    let mut vsr: Vec<VsrRow> = Vec::new();
    let mut vsc: Vec<VscRow> = Vec::new();
    for f in &files {
        let text = fs::read_to_string(f).map_err(io_error(f))?;
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |msg: String| CliError::Data(format!("{}:{}: {msg}", f.display(), n + 1));
            let value: serde_json::Value = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
            let version = value.get("schema_version").cloned().unwrap_or_default();
            if version.as_u64() != Some(u64::from(ROW_SCHEMA_VERSION)) {
                return Err(bad(format!("schema_version {version}, expected {ROW_SCHEMA_VERSION}")));
            }
            match value.get("kind").and_then(|v| v.as_str()) {
                Some("vsr") => vsr.push(serde_json::from_value(value).map_err(|e| bad(e.to_string()))?),
                Some("vsc") => vsc.push(serde_json::from_value(value).map_err(|e| bad(e.to_string()))?),
                Some("segment") => {}
                other => return Err(bad(format!("unknown row kind {other:?}"))),
            }
        }
    }
    let out = &args.common.out;
    ensure_dir(out)?;
    let mut summary = format!(
        "read {} files: {} vsr rows, {} vsc rows",
        files.len(),
        vsr.len(),
        vsc.len()
    );
    if !vsr.is_empty() {
        let table = accuracy_table(vsr.iter().map(|r| (r.mode.as_str(), r.split.as_str(), r.correct)));
        write_file(&out.join("report_vsr_table.csv"), &table.matrix_csv())?;
        summary.push('\n');
        summary.push_str(table.matrix_csv().trim_end());
    }
    if !vsc.is_empty() {
        let mut cells: BTreeMap<(String, usize), Vec<&VscRow>> = BTreeMap::new();
        for r in &vsc {
            cells.entry((r.model.clone(), r.k)).or_default().push(r);
        }
        let cfg = MraConfig::default();
        let mut csv = String::from("model,k,n,mean_mra,mean_pred\n");
        for ((model, k), rows) in &cells {
            let pairs: Vec<(u64, u64)> = rows.iter().map(|r| (r.pred, r.gold)).collect();
            let mean_mra = crate::metrics::mean_mra(&pairs, &cfg).map_err(|e| CliError::Data(e.to_string()))?;
            let mean_pred = pairs.iter().map(|p| p.0 as f64).sum::<f64>() / pairs.len() as f64;
            let _ = writeln!(csv, "{model},{k},{},{mean_mra:.4},{mean_pred:.4}", rows.len());
        }
        write_file(&out.join("report_vsc_mra.csv"), &csv)?;
        summary.push('\n');
        summary.push_str(csv.trim_end());
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_layout() {
        let t = accuracy_table(
            [
                ("ensemble", "10min", true),
                ("ensemble", "10min", false),
                ("basic_prompt", "30min", true),
            ]
            .into_iter(),
        );
        assert_eq!(
            t.matrix_csv(),
            "mode,10min,30min\nbasic_prompt,,1.0000\nensemble,0.5000,\n"
        );
        assert_eq!(
            t.long_csv(),
            "mode,split,n,accuracy\nbasic_prompt,30min,1,1.0000\nensemble,10min,2,0.5000\n"
        );
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config(String::new()).exit_code(), 2);
        assert_eq!(CliError::Io(String::new()).exit_code(), 3);
        assert_eq!(CliError::Data(String::new()).exit_code(), 3);
    }

    #[test]
    fn argument_parsing() {
        let cli = Cli::try_parse_from([
            "streamprobe",
            "run-vsr",
            "--manifests",
            "x/*.json",
            "--mode",
            "ensemble,raw",
            "-k",
            "3",
        ])
        .unwrap();
        match cli.command {
            Command::RunVsr(a) => {
                assert_eq!(a.mode, vec![ModeArg::Ensemble, ModeArg::Raw]);
                assert_eq!(a.k, 3);
            }
            _ => panic!("wrong subcommand"),
        }
        assert!(Cli::try_parse_from(["streamprobe", "gen", "--kind", "nope"]).is_err());
    }
}
