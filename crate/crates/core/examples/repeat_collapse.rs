//! Play each scene back-to-back k times and watch segment counting break.
//!
//! The unique counter keeps one global set of identities and stays exact.
//! The segment counter resets at every surprise boundary, so each replay
//! counts the same objects again.

use streamprobe::cli::synthetic_scenes;
use streamprobe::metrics::MraConfig;
use streamprobe::perturb::{repeat_sweep, DEFAULT_SWEEP};
use streamprobe::segment::{CountingModel, IdealSegmentCounter, SegmentCounter, UniqueCounter};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenes = synthetic_scenes(42, 50, 16, 0.05)?;
    let segmenter = SegmentCounter::default();
    let models: [&dyn CountingModel; 3] = [&UniqueCounter, &IdealSegmentCounter, &segmenter];

    println!(
        "{} scenes, mean gold {:.2}",
        scenes.len(),
        scenes.iter().map(|s| s.gold() as f64).sum::<f64>() / scenes.len() as f64
    );
    println!("{:<22} {:>3} {:>9} {:>10}", "model", "k", "mean MRA", "mean pred");
    for model in models {
        let sweep = repeat_sweep(model, &scenes, &DEFAULT_SWEEP, &MraConfig::default())?;
        for p in &sweep.points {
            println!(
                "{:<22} {:>3} {:>9.3} {:>10.2}",
                sweep.model, p.k, p.mean_mra, p.mean_pred
            );
        }
    }
    Ok(())
}
