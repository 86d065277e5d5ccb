mod common;

use axum::http::StatusCode;
use common::{app, call, call_raw, engine_with_threshold, trained};
use oraldx_core::taxonomy::DiseaseId;
use oraldx_service::StoreConfig;
use serde_json::{json, Value};

fn case_body(id: u16) -> Value {
    let (_, corpus) = trained();
    let id = DiseaseId(id);
    json!({
        "case_text": format!("lesion noted {}", corpus.signature(id).join(" ")),
        "image_features": corpus.prototype(id),
    })
}

fn error_code(v: &Value) -> &str {
    v["error"]["code"].as_str().unwrap()
}

#[tokio::test]
async fn create_validates_and_issues_distinct_ids() {
    let (app, _) = app(engine_with_threshold(0.3), StoreConfig::default());
    let (s1, a) = call(&app, "POST", "/v1/sessions", Some(case_body(3))).await;
    let (s2, b) = call(&app, "POST", "/v1/sessions", Some(case_body(3))).await;
    assert_eq!((s1, s2), (StatusCode::CREATED, StatusCode::CREATED));
    assert_ne!(a["session_id"], b["session_id"]);
    assert_eq!(a["schema_version"], 1);
    assert_eq!(a["level"], 1);
    assert_eq!(a["candidates"], 118);
    assert_eq!(a["status"], "active");

    let mut short = case_body(3);
    short["image_features"].as_array_mut().unwrap().pop();
    let (s, e) = call(&app, "POST", "/v1/sessions", Some(short)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(error_code(&e), "bad_request");
    assert_eq!(e["error"]["detail"]["field"], "image_features");
    assert_eq!(e["error"]["detail"]["found"], 1279);
    assert_eq!(e["schema_version"], 1);

    let mut blank = case_body(3);
    blank["case_text"] = json!("  ");
    let (s, e) = call(&app, "POST", "/v1/sessions", Some(blank)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(e["error"]["detail"]["field"], "case_text");

    let (s, e) = call_raw(&app, "POST", "/v1/sessions", "{\"case_text\": ").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(e["error"]["message"]
        .as_str()
        .unwrap()
        .starts_with("malformed body"));
    let (s, _) = call_raw(
        &app,
        "POST",
        "/v1/sessions",
        "{\"case_text\":\"x\",\"image_features\":[],\"extra\":1}",
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn state_machine_conflicts_and_not_found() {
    let (app, _) = app(engine_with_threshold(50.0), StoreConfig::default());
    let (_, d) = call(&app, "POST", "/v1/sessions", Some(case_body(9))).await;
    let id = d["session_id"].as_str().unwrap().to_string();
    let at = |p: &str| format!("/v1/sessions/{id}{p}");

    let (s, e) = call(&app, "POST", &at("/answer"), Some(json!({"answer": "white"}))).await;
    assert_eq!((s, error_code(&e)), (StatusCode::CONFLICT, "conflict"));

    let (s, step) = call(&app, "POST", &at("/step"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(step["step"]["outcome"], "clarify");
    assert_eq!(step["step"]["top_two"].as_array().unwrap().len(), 2);
    assert!(step["step"]["question"].as_str().unwrap().ends_with('?'));

    let (s, e) = call(&app, "POST", &at("/step"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(e["error"]["detail"]["pending_level"], 1);
    let (s, _) = call(&app, "POST", &at("/finalize"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, e) = call(&app, "POST", &at("/answer"), Some(json!({"answer": "   "}))).await;
    assert_eq!(
        (s, e["error"]["detail"]["field"].as_str()),
        (StatusCode::BAD_REQUEST, Some("answer"))
    );

    let (s, a) = call(
        &app,
        "POST",
        &at("/answer"),
        Some(json!({"answer": "white plaque"})),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(a["accepted"], true);
    assert_eq!(a["top_two"].as_array().unwrap().len(), 2);
    let (_, view) = call(&app, "GET", &at(""), None).await;
    assert!(view["session"]["pending"].is_null());

    let (s, _) = call(&app, "POST", "/v1/sessions/nope/step", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, e) = call(&app, "GET", "/v1/sessions/nope", None).await;
    assert_eq!((s, error_code(&e)), (StatusCode::NOT_FOUND, "not_found"));
    let (s, e) = call(&app, "GET", "/v1/nothing", None).await;
    assert_eq!((s, error_code(&e)), (StatusCode::NOT_FOUND, "not_found"));
    let (s, e) = call(&app, "GET", "/v1/fast", None).await;
    assert_eq!(
        (s, error_code(&e)),
        (StatusCode::METHOD_NOT_ALLOWED, "bad_request")
    );
}

/// Steps to completion answering every question with `answers` in turn.
async fn drive(app: &axum::Router, id: &str, answers: &[String]) -> (Value, usize) {
    let mut used = 0;
    loop {
        let (s, step) = call(app, "POST", &format!("/v1/sessions/{id}/step"), None).await;
        assert_eq!(s, StatusCode::OK, "{step}");
        match step["step"]["outcome"].as_str().unwrap() {
            "clarify" => {
                let uri = format!(
                    "/v1/sessions/{id}/{}",
                    if used < answers.len() { "answer" } else { "waive" }
                );
                let body = answers.get(used).map(|a| json!({ "answer": a }));
                let (s, _) = call(app, "POST", &uri, body).await;
                assert_eq!(s, StatusCode::OK);
                used += 1;
            }
            "confirmed" | "normal_finding" => break,
            _ => {}
        }
    }
    let (s, fin) = call(
        app,
        "POST",
        &format!("/v1/sessions/{id}/finalize"),
        Some(json!({"top_k": 3})),
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{fin}");
    (fin, used)
}

#[tokio::test]
async fn scripted_olp_dialogue_over_http() {
    let (engine, corpus) = trained();
    let (app, _) = app(engine_with_threshold(0.3), StoreConfig::default());
    let (text, features) = corpus.olp_like_case(&engine.taxonomy).unwrap();
    let (_, d) = call(
        &app,
        "POST",
        "/v1/sessions",
        Some(json!({"case_text": text, "image_features": features})),
    )
    .await;
    let id = d["session_id"].as_str().unwrap();
    let answers: Vec<String> = corpus
        .olp_script(&engine.taxonomy)
        .turns
        .iter()
        .map(|t| t.answer.clone())
        .collect();
    let (fin, _) = drive(&app, id, &answers).await;
    assert_eq!(fin["finding"]["kind"], "disease");
    assert_eq!(fin["finding"]["path"].as_array().unwrap().len(), 5);
    let report = fin["report"].as_str().unwrap();
    assert!(report.starts_with("Diagnostic Path: Abnormal → "));
    let first = report.lines().next().unwrap();
    assert_eq!(first.matches(" → ").count(), 4);

    let (s, e) = call(&app, "POST", &format!("/v1/sessions/{id}/step"), None).await;
    assert_eq!((s, error_code(&e)), (StatusCode::CONFLICT, "conflict"));
    let (_, view) = call(&app, "GET", &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(view["session"]["status"], "finalized");
    assert_eq!(view["report"].as_str().unwrap(), report);
}

#[tokio::test]
async fn two_answers_leave_a_two_entry_transcript() {
    let (app, _) = app(engine_with_threshold(50.0), StoreConfig::default());
    let (_, d) = call(&app, "POST", "/v1/sessions", Some(case_body(40))).await;
    let id = d["session_id"].as_str().unwrap().to_string();
    for answer in ["white reticular", "no medications"] {
        let (_, step) = call(&app, "POST", &format!("/v1/sessions/{id}/step"), None).await;
        assert_eq!(step["step"]["outcome"], "clarify");
        call(
            &app,
            "POST",
            &format!("/v1/sessions/{id}/answer"),
            Some(json!({ "answer": answer })),
        )
        .await;
    }
    let (_, view) = call(&app, "GET", &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(view["session"]["transcript"].as_array().unwrap().len(), 2);
    assert_eq!(view["schema_version"], 1);
}

#[tokio::test]
async fn fast_endpoint_is_stateless_and_deterministic() {
    let (app, store) = app(engine_with_threshold(0.3), StoreConfig::default());
    let mut body = case_body(12);
    body["top_k"] = json!(1);
    let (s, a) = call(&app, "POST", "/v1/fast", Some(body.clone())).await;
    assert_eq!(s, StatusCode::OK);
    assert!(a["diagnosis"]["differential"].as_array().unwrap().is_empty());
    let (_, b) = call(&app, "POST", "/v1/fast", Some(body.clone())).await;
    assert_eq!(a, b);
    assert!(store.is_empty());

    body["top_k"] = json!(3);
    let (_, c) = call(&app, "POST", "/v1/fast", Some(body.clone())).await;
    assert_eq!(c["diagnosis"]["differential"].as_array().unwrap().len(), 2);
    let report = c["report"].as_str().unwrap();
    assert!(report.starts_with("Primary Diagnosis: "));
    assert!(report.contains("Differential Diagnosis:"));

    body["top_k"] = json!(0);
    let (s, e) = call(&app, "POST", "/v1/fast", Some(body)).await;
    assert_eq!(
        (s, e["error"]["detail"]["field"].as_str()),
        (StatusCode::BAD_REQUEST, Some("top_k"))
    );
}

#[tokio::test]
async fn read_only_views() {
    let (app, _) = app(engine_with_threshold(0.3), StoreConfig::default());
    let (s, t) = call(&app, "GET", "/v1/taxonomy", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(t["diseases"].as_array().unwrap().len(), 118);
    let (s, a) = call(&app, "GET", "/v1/atlas", None).await;
    assert_eq!(s, StatusCode::OK);
    let points = a["atlas"]["points"].as_array().unwrap();
    assert_eq!(points.len(), 118);
    for p in points {
        let want = match p["zone"].as_u64().unwrap() {
            3 => "circle",
            2 => "triangle",
            _ => "square",
        };
        assert_eq!(p["shape"], want);
    }
    let (s, h) = call(&app, "GET", "/v1/health", None).await;
    assert_eq!((s, h["status"].as_str()), (StatusCode::OK, Some("ok")));
}

#[tokio::test]
async fn atlas_absent_is_not_found() {
    let (e, _) = trained();
    let engine = oraldx_core::engine::Engine::new(
        e.taxonomy.clone(),
        e.fusion.clone(),
        e.model.clone(),
        e.config.clone(),
        None,
    )
    .unwrap();
    let (app, _) = app(std::sync::Arc::new(engine), StoreConfig::default());
    let (s, v) = call(&app, "GET", "/v1/atlas", None).await;
    assert_eq!((s, error_code(&v)), (StatusCode::NOT_FOUND, "not_found"));
}
