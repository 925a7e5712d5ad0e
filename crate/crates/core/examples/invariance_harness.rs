//! Run invariance cases against built-in and custom counting models.
//!
//! A custom case reverses playback: the set of objects is unchanged, so the
//! gold count is too, and a sound counter should not notice.

use streamprobe::cli::synthetic_scenes;
use streamprobe::metrics::MraConfig;
use streamprobe::perturb::{run_invariance, InvarianceCase};
use streamprobe::segment::{
    AnnotatedStream, CountingInstance, CountingModel, ModelError, SegmentCounter, UniqueCounter,
};
use streamprobe::types::CountingScene;
use streamprobe::FrameStream;

/// Largest number of targets visible in any single frame.
struct PeakFrameCounter;

impl CountingModel for PeakFrameCounter {
    fn name(&self) -> &str {
        "peak_frame"
    }

    fn predict(&self, inst: &CountingInstance) -> Result<u64, ModelError> {
        let target = &inst.scene.target_category;
        Ok(inst
            .stream
            .objects()
            .iter()
            .map(|f| f.iter().filter(|o| &o.category == target).count() as u64)
            .max()
            .unwrap_or(0))
    }
}

fn reversed() -> InvarianceCase {
    InvarianceCase {
        name: "reverse".into(),
        k: None,
        transform: Box::new(|inst| {
            let s = inst.stream.stream();
            let embs = s.frames().iter().rev().map(|f| f.embedding.clone()).collect();
            let objects = inst.stream.objects().iter().cloned().rev().collect();
            let rooms = inst.scene.rooms.iter().cloned().rev().collect();
            let stream = FrameStream::from_embeddings(embs, s.fps())?;
            Ok(CountingInstance {
                instance_id: inst.instance_id.clone(),
                scene: CountingScene::new(rooms, inst.scene.target_category.clone(), inst.scene.repeat_factor)?,
                stream: AnnotatedStream::new(stream, objects)?,
            })
        }),
        gold_map: Box::new(|g| g),
        predicate: Box::new(|a, b| a == b),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenes = synthetic_scenes(8, 40, 16, 0.05)?;
    let segmenter = SegmentCounter::default();
    let models: [&dyn CountingModel; 3] = [&UniqueCounter, &segmenter, &PeakFrameCounter];
    let cases = [InvarianceCase::identity(), InvarianceCase::vsc_repeat(2)?, reversed()];
    let cfg = MraConfig::default();

    println!(
        "{:<16} {:<14} {:>10} {:>10} {:>10}",
        "model", "case", "violations", "MRA before", "MRA after"
    );
    for model in models {
        for case in &cases {
            let r = run_invariance(case, model, &scenes, &cfg);
            println!(
                "{:<16} {:<14} {:>4}/{:<5} {:>10.3} {:>10.3}",
                r.model,
                r.case,
                r.violations,
                r.evaluated,
                r.mra_before.unwrap_or(f64::NAN),
                r.mra_after.unwrap_or(f64::NAN)
            );
        }
    }
    Ok(())
}
