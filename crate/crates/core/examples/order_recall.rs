//! Answer a synthetic order-recall question with the streaming top-k baseline.
//!
//! ```text
//! cargo run --example order_recall -- [seed]
//! ```

use streamprobe::engine::{answer_vsr, EngineConfig, QuerySource};
use streamprobe::synth::{gen_vsr_instance, VsrSynthParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map_or(Ok(7), |s| s.parse())?;
    let params = VsrSynthParams::random(seed, 1200, 64, 0.1, 0.02)?;
    let inst = gen_vsr_instance(&params)?;
    let q = &inst.question;

    println!("{} frames, dim {}", inst.stream.len(), inst.stream.dim());
    println!("question: {}", q.raw_question().unwrap_or(q.question_id()));
    println!(
        "needles planted at {:?}, true order {:?}",
        params.needle_positions, params.sigma
    );

    let ans = answer_vsr(
        &inst.stream,
        q,
        QuerySource::Injected(&inst.queries),
        &EngineConfig::default(),
    )?;
    for r in &ans.retained {
        println!("  kept frame {:>5}  similarity {:.4}", r.t, r.s);
    }
    for (i, (opt, score)) in q.options().iter().zip(ans.scores).enumerate() {
        let mark = if i + 1 == ans.answer { "<-" } else { "" };
        println!("  option {} {:?}  score {:+.4} {mark}", i + 1, opt, score);
    }
    println!("answer {} / gold {}", ans.answer, q.gold_option());
    Ok(())
}
