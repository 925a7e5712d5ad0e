//! Write an embedding file and a manifest, dump the header, load it back.

use streamprobe::engine::{answer_vsr, EngineConfig, QuerySource};
use streamprobe::io::{encode_embeddings, load_manifest, read_embeddings};
use streamprobe::synth::{emit_vsr, gen_vsr_instance, VsrSynthParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bytes = encode_embeddings(2, &[[1.0f32, 0.0], [0.6, 0.8]])?;
    println!("2 rows x 2 dims = {} bytes", bytes.len());
    for (off, chunk) in bytes.chunks(16).enumerate() {
        let hex: Vec<String> = chunk.iter().map(|b| format!("{b:02x}")).collect();
        println!("  {:08x}  {}", off * 16, hex.join(" "));
    }

    let dir = tempfile::tempdir()?;
    let inst = gen_vsr_instance(&VsrSynthParams::random(11, 300, 32, 0.1, 0.0)?)?;
    emit_vsr(dir.path(), "clip", "demo", &inst)?;
    let mut names: Vec<String> = std::fs::read_dir(dir.path())?
        .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect::<Result<_, _>>()?;
    names.sort();
    println!("\nwrote {names:?}");

    let frames = read_embeddings(dir.path().join("clip.frames.emb"))?;
    println!("frames: {} rows of dim {}", frames.len(), frames.dim());
    let m = load_manifest(dir.path().join("clip.json"))?;
    let q = &m.questions[0];
    let queries = q.injected.as_ref().expect("emit_vsr attaches query vectors");
    let ans = answer_vsr(
        m.stream.iter(),
        &q.question,
        QuerySource::Injected(queries),
        &EngineConfig::default(),
    )?;
    println!(
        "loaded {} / {}: answer {} gold {}",
        m.manifest.video_id,
        q.question.question_id(),
        ans.answer,
        q.question.gold_option()
    );
    Ok(())
}
