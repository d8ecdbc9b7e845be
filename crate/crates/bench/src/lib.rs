//! Inputs shared by the benchmarks.

use pjx_core::data::{generate_synthetic, prepare_synthetic, PreparedExample, SynthConfig, Vocabularies};
use pjx_core::model::{AttentionMap, PjxModel, QuestionMode};
use pjx_core::train::TrainConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A dense random distribution on a `side x side` grid.
pub fn random_map(side: usize, seed: u64) -> AttentionMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mass = (0..side * side).map(|_| rng.gen_range(0.01..1.0)).collect();
    AttentionMap::from_mass(side, side, mass).expect("positive mass")
}

/// A freshly initialized model at the default widths plus a few examples.
pub fn model_and_examples(n: usize) -> (PjxModel, Vec<PreparedExample>) {
    let cfg = SynthConfig {
        train: n,
        val: 1,
        test: 1,
        ..SynthConfig::default()
    };
    let data = generate_synthetic(&cfg, 0).expect("valid config");
    let records: Vec<_> = data.train.iter().map(|e| e.record.clone()).collect();
    let vocab = Vocabularies::build(&records, 1, 16).expect("vocabulary");
    let examples = prepare_synthetic(&data.train, &vocab);
    let mc = TrainConfig::default().model_config(cfg.channels, cfg.grid_height, cfg.grid_width, &vocab, QuestionMode::Question);
    (PjxModel::new(mc, 0).expect("model"), examples)
}
