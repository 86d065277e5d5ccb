#![allow(dead_code)]

use std::sync::OnceLock;

use oraldx_core::datapipe::{generate_synthetic_corpus, SynthParams, SyntheticCorpus};
use oraldx_core::engine::{Engine, EngineConfig};
use oraldx_core::taxonomy::Taxonomy;
use oraldx_core::trainer::TrainConfig;

pub const SEED: u64 = 5;

pub fn small_params() -> SynthParams {
    SynthParams {
        cases_per_disease: 8,
        ..SynthParams::default()
    }
}

pub fn small_train() -> TrainConfig {
    TrainConfig {
        epochs: 12,
        ..TrainConfig::default()
    }
}

/// Heads trained on a small synthetic corpus, shared by a test binary.
pub fn trained() -> &'static (Engine, SyntheticCorpus) {
    static CELL: OnceLock<(Engine, SyntheticCorpus)> = OnceLock::new();
    CELL.get_or_init(|| {
        let engine = Engine::synthetic(SEED, small_params(), small_train(), EngineConfig::default())
            .expect("training succeeds");
        let corpus = generate_synthetic_corpus(&Taxonomy::bundled(), SEED, &small_params()).unwrap();
        (engine, corpus)
    })
}
