//! Mean relative accuracy for a few predictions against a gold count of 100.

use streamprobe::metrics::{mean_mra, mra, Comparison, MraConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let strict = MraConfig::default();
    let inclusive = MraConfig::default().with_comparison(Comparison::NonStrict);
    println!("thresholds {:?}", strict.thresholds().collect::<Vec<_>>());
    println!("{:>5} {:>7} {:>10}", "pred", "strict", "inclusive");
    for pred in [0, 40, 50, 95, 100, 105, 110, 150, 200] {
        println!(
            "{pred:>5} {:>7.1} {:>10.1}",
            mra(pred, 100, &strict)?,
            mra(pred, 100, &inclusive)?
        );
    }
    let pairs = [(110, 100), (100, 100), (3, 4), (8, 4)];
    println!("mean over {pairs:?}: {:.3}", mean_mra(&pairs, &strict)?);
    Ok(())
}
