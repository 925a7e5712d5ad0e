//! How the three prompt modes change the object query.
//!
//! The hashed bag-of-words encoder stands in for a real text tower, so the
//! point here is the plumbing: each mode encodes different strings, while
//! directly supplied query vectors make the mode irrelevant.

use streamprobe::cosine;
use streamprobe::engine::{
    answer_vsr, build_queries, EngineConfig, HashedBagOfWords, PromptMode, PromptTemplates, QuerySource,
};
use streamprobe::synth::{gen_vsr_instance, VsrSynthParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let inst = gen_vsr_instance(&VsrSynthParams::random(3, 600, 64, 0.1, 0.02)?)?;
    let q = &inst.question;
    let templates = PromptTemplates::default();
    let encoder = HashedBagOfWords::new(64);

    println!("object: {:?}", q.object_text());
    println!("ensemble ({} templates):", templates.ensemble.len());
    for t in &templates.ensemble {
        println!("  {}", PromptTemplates::fill(t, q.object_text(), None));
    }

    let queries: Vec<_> = PromptMode::ALL
        .iter()
        .map(|&m| build_queries(q, m, &templates, &encoder))
        .collect::<Result<_, _>>()?;
    println!("\ncosine between object queries:");
    for (i, a) in queries.iter().enumerate() {
        for b in &queries[i + 1..] {
            println!(
                "  {:<13} vs {:<13} {:.4}",
                a.mode.unwrap(),
                b.mode.unwrap(),
                cosine(&a.object, &b.object)?
            );
        }
    }

    println!("\nwith injected queries every mode gives the same answer:");
    for mode in PromptMode::ALL {
        let cfg = EngineConfig { k: 4, mode };
        let ans = answer_vsr(&inst.stream, q, QuerySource::Injected(&inst.queries), &cfg)?;
        println!(
            "  {mode:<13} answer {} scores {:?}",
            ans.answer,
            ans.scores.map(|s| (s * 1e4).round() / 1e4)
        );
    }
    Ok(())
}
