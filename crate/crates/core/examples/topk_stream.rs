//! Bounded-memory top-k over a live stream, checked against a full sort.
//!
//! Similarities are drawn from a handful of levels so ties are frequent;
//! the earlier frame always wins a tie.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use streamprobe::engine::TopKBuffer;
use streamprobe::normalize;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let levels = [0.1, 0.4, 0.4, 0.7, 0.9];
    let sims: Vec<f64> = (0..10_000).map(|_| *levels.choose(&mut rng).unwrap()).collect();
    let emb = normalize(&[1.0, 0.0])?;

    for k in [1, 4, 8] {
        let mut buf = TopKBuffer::new(k)?;
        for (i, &s) in sims.iter().enumerate() {
            buf.offer(i + 1, s, emb.clone())?;
        }
        let seen = buf.seen();
        let kept: Vec<usize> = buf.finalize()?.iter().map(|e| e.index).collect();

        let mut order: Vec<usize> = (0..sims.len()).collect();
        order.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]));
        let mut offline: Vec<usize> = order[..k].iter().map(|i| i + 1).collect();
        offline.sort_unstable();

        println!(
            "k={k}: saw {seen} frames, kept {kept:?}, offline sort agrees: {}",
            kept == offline
        );
    }
    Ok(())
}
