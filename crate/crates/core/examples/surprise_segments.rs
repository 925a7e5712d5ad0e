//! Surprise signal and detected boundaries for one scene and its replay.

use streamprobe::cli::synthetic_scenes;
use streamprobe::perturb::repeat_instance;
use streamprobe::segment::{segment_count, surprise_signal, true_boundaries, SurpriseConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scene = synthetic_scenes(5, 1, 16, 0.05)?.remove(0);
    let cfg = SurpriseConfig::default();
    for room in &scene.scene.rooms {
        let chairs = room.objects.iter().filter(|o| o.category == "chair").count();
        println!("{}: {} frames, {} chairs", room.room_id, room.dwell_frames, chairs);
    }

    for k in [1, 2] {
        let inst = repeat_instance(&scene, k)?;
        let trace = surprise_signal(inst.stream.stream(), &cfg)?;
        let peak = trace.values.iter().cloned().fold(0.0, f64::max);
        println!("\nk={k}: {} frames, peak surprise {peak:.3}", inst.stream.len());
        println!("  detected boundaries {:?}", trace.boundaries);
        println!("  true boundaries     {:?}", true_boundaries(&inst.scene));
        let counted = segment_count(&inst.stream, "chair", &cfg)?;
        let per_segment: Vec<u64> = counted.segments.iter().map(|s| s.count).collect();
        println!(
            "  per-segment counts {per_segment:?} -> {} (gold {})",
            counted.prediction,
            inst.gold()
        );
    }
    Ok(())
}
