use std::cell::Cell;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use streamprobe::engine::{answer_vsr, EngineConfig, QuerySource, TopKBuffer};
use streamprobe::synth::{gen_vsr_instance, VsrInstance, VsrSynthParams};
use streamprobe::{normalize, FrameRecord};

/// Hands out owned frames and counts how many were pulled.
struct Counted<I> {
    inner: I,
    pulled: std::rc::Rc<Cell<usize>>,
}

impl<I: Iterator> Iterator for Counted<I> {
    type Item = I::Item;

    fn next(&mut self) -> Option<I::Item> {
        let item = self.inner.next();
        if item.is_some() {
            self.pulled.set(self.pulled.get() + 1);
        }
        item
    }
}

fn instance(seed: u64) -> VsrInstance {
    gen_vsr_instance(&VsrSynthParams::random(seed, 300, 32, 0.1, 0.02).unwrap()).unwrap()
}

#[test]
fn each_frame_is_pulled_once() {
    let inst = instance(3);
    let pulled = std::rc::Rc::new(Cell::new(0));
    let frames = Counted {
        inner: inst.stream.frames().to_vec().into_iter(),
        pulled: pulled.clone(),
    };
    let ans = answer_vsr(
        frames,
        &inst.question,
        QuerySource::Injected(&inst.queries),
        &EngineConfig::default(),
    )
    .unwrap();
    assert_eq!(pulled.get(), 300);
    assert_eq!(ans.frames_seen, 300);
    assert_eq!(ans.answer, inst.question.gold_option());
}

#[test]
fn buffer_never_exceeds_capacity() {
    let inst = instance(4);
    for k in 1..=8 {
        let mut buf = TopKBuffer::new(k).unwrap();
        for f in inst.stream.iter() {
            buf.update(f, &inst.queries.object).unwrap();
            assert!(buf.len() <= k);
        }
        assert_eq!(buf.len(), k);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn non_retained_frame_does_not_matter(seed in 0u64..10_000, pick in any::<prop::sample::Index>(), noise_seed: u64) {
        let inst = instance(seed);
        let cfg = EngineConfig::default();
        let source = QuerySource::Injected(&inst.queries);
        let before = answer_vsr(&inst.stream, &inst.question, source, &cfg).unwrap();
        let retained: Vec<usize> = before.retained.iter().map(|r| r.t).collect();
        let others: Vec<usize> = (1..=inst.stream.len()).filter(|t| !retained.contains(t)).collect();
        let t = others[pick.index(others.len())];

        // Random direction pushed away from the object query, so the frame
        // stays below every retained similarity.
        let o = inst.queries.object.as_slice();
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let mut v: Vec<f64> = (0..o.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let along: f64 = v.iter().zip(o).map(|(a, b)| a * b).sum();
        v.iter_mut().zip(o).for_each(|(x, y)| *x -= (along + 1.0) * y);
        let replacement = normalize(&v).unwrap();

        let frames: Vec<FrameRecord> = inst
            .stream
            .iter()
            .map(|f| if f.index == t {
                FrameRecord { embedding: replacement.clone(), ..f.clone() }
            } else {
                f.clone()
            })
            .collect();
        let after = answer_vsr(frames, &inst.question, source, &cfg).unwrap();
        prop_assert_eq!(after.answer, before.answer);
        prop_assert_eq!(after.retained, before.retained);
        prop_assert_eq!(after.scores, before.scores);
    }
}
