mod common;

use oraldx_core::engine::{Engine, EngineConfig, EngineError};
use oraldx_core::reasoning::render_fast;
use oraldx_core::taxonomy::DiseaseId;

#[test]
fn model_directory_round_trips() {
    let (engine, corpus) = common::trained();
    let dir = tempfile::tempdir().unwrap();
    engine.save(dir.path()).unwrap();
    for f in ["engine.toml", "fusion.odxw", "heads.odxw", "atlas.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let back = Engine::load(dir.path()).unwrap();
    assert_eq!(back.model, engine.model);
    assert_eq!(back.fusion, engine.fusion);
    assert_eq!(back.config, engine.config);
    assert_eq!(back.atlas, engine.atlas);

    let id = DiseaseId(7);
    let text = corpus.signature(id).join(" ");
    let a = engine.fast(&text, corpus.prototype(id)).unwrap();
    let b = back.fast(&text, corpus.prototype(id)).unwrap();
    assert_eq!(a, b);
    assert!(render_fast(&a).starts_with("Primary Diagnosis: "));
}

#[test]
fn fast_mode_rejects_bad_cases() {
    let (engine, corpus) = common::trained();
    let features = corpus.prototype(DiseaseId(1));
    assert!(engine.fast("   ", features).is_err());
    assert!(engine.fast("white plaque", &features[..10]).is_err());
}

#[test]
fn broken_model_directories_fail_cleanly() {
    let (engine, _) = common::trained();
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(Engine::load(dir.path()), Err(EngineError::Io { .. })));

    engine.save(dir.path()).unwrap();
    let cfg = dir.path().join("engine.toml");
    let text = std::fs::read_to_string(&cfg).unwrap();
    std::fs::write(&cfg, text.replace("schema_version = 1", "schema_version = 9")).unwrap();
    assert!(matches!(Engine::load(dir.path()), Err(EngineError::Config(_))));

    engine.save(dir.path()).unwrap();
    let heads = dir.path().join("heads.odxw");
    let mut bytes = std::fs::read(&heads).unwrap();
    bytes.truncate(100);
    std::fs::write(&heads, bytes).unwrap();
    assert!(matches!(Engine::load(dir.path()), Err(EngineError::Bundle(_))));

    let bad = EngineConfig {
        top_k: 0,
        ..EngineConfig::default()
    };
    assert!(bad.validate().is_err());
}
