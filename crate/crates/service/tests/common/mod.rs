#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use oraldx_core::datapipe::{generate_synthetic_corpus, SynthParams, SyntheticCorpus};
use oraldx_core::engine::{Engine, EngineConfig};
use oraldx_core::reasoning::GatingConfig;
use oraldx_core::trainer::TrainConfig;
use oraldx_service::{router, SessionStore, StoreConfig};
use serde_json::Value;
use tower::ServiceExt;

pub const SEED: u64 = 5;

fn params() -> SynthParams {
    SynthParams {
        cases_per_disease: 8,
        ..SynthParams::default()
    }
}

pub fn trained() -> &'static (Engine, SyntheticCorpus) {
    static CELL: OnceLock<(Engine, SyntheticCorpus)> = OnceLock::new();
    CELL.get_or_init(|| {
        let train = TrainConfig {
            epochs: 12,
            ..TrainConfig::default()
        };
        let engine = Engine::synthetic(SEED, params(), train, EngineConfig::default()).unwrap();
        let corpus = generate_synthetic_corpus(&engine.taxonomy, SEED, &params()).unwrap();
        (engine, corpus)
    })
}

/// The trained engine under a different gate threshold.
pub fn engine_with_threshold(threshold: f64) -> Arc<Engine> {
    let (e, _) = trained();
    let config = EngineConfig {
        gating: GatingConfig::with_threshold(threshold),
        ..e.config.clone()
    };
    Arc::new(
        Engine::new(
            e.taxonomy.clone(),
            e.fusion.clone(),
            e.model.clone(),
            config,
            e.atlas.clone(),
        )
        .unwrap(),
    )
}

pub fn app(engine: Arc<Engine>, config: StoreConfig) -> (Router, Arc<SessionStore>) {
    let store = Arc::new(SessionStore::open(engine, config).unwrap());
    (router(store.clone()), store)
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json");
    let req = match body {
        Some(v) => req.body(Body::from(v.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, value)
}

pub async fn call_raw(app: &Router, method: &str, uri: &str, body: &str) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}
