//! HTTP routes, request and response bodies, and error mapping.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use oraldx_core::evaluation::AtlasExport;
use oraldx_core::fusion::{FusionError, IMAGE_DIM};
use oraldx_core::reasoning::{
    render_fast, render_standard, ClarificationRequest, Contender, Diagnosis, Finding, ReasoningError,
    SessionState, SessionStatus, StepOutcome,
};
use oraldx_core::taxonomy::{CategorySchema, DiseaseRecord};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::events::EventKind;
use crate::store::{SessionStore, StoreError};
use crate::SCHEMA_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    NotFound,
    Conflict,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
    #[serde(skip)]
    pub status: Option<u16>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub schema_version: u32,
    pub error: ApiError,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            code,
            message: message.into(),
            detail: None,
            status: None,
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = Some(detail);
        self
    }

    fn field(field: &str, message: impl Into<String>) -> Self {
        ApiError::new(ErrorCode::BadRequest, message).with_detail(json!({ "field": field }))
    }

    fn status(&self) -> StatusCode {
        if let Some(s) = self.status.and_then(|s| StatusCode::from_u16(s).ok()) {
            return s;
        }
        match self.code {
            ErrorCode::BadRequest => StatusCode::BAD_REQUEST,
            ErrorCode::NotFound => StatusCode::NOT_FOUND,
            ErrorCode::Conflict => StatusCode::CONFLICT,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        let body = ErrorBody {
            schema_version: SCHEMA_VERSION,
            error: self,
        };
        (status, Json(body)).into_response()
    }
}

impl From<ReasoningError> for ApiError {
    fn from(e: ReasoningError) -> Self {
        use ReasoningError as R;
        let message = e.to_string();
        match e {
            R::Finished | R::NothingPending | R::NotReady(_) => ApiError::new(ErrorCode::Conflict, message),
            R::ClarificationPending(level) => {
                ApiError::new(ErrorCode::Conflict, message).with_detail(json!({ "pending_level": level }))
            }
            R::EmptyCaseText => ApiError::field("case_text", message),
            R::EmptyAnswer => ApiError::field("answer", message),
            R::ZeroTopK => ApiError::field("top_k", message),
            R::Fusion(FusionError::Dimension { .. } | FusionError::NonFiniteInput { .. }) => {
                ApiError::field("image_features", message)
            }
            R::Fusion(FusionError::EmptyText) => ApiError::field("case_text", message),
            _ => ApiError::new(ErrorCode::Internal, message),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(id) => ApiError::new(ErrorCode::NotFound, format!("no session `{id}`"))
                .with_detail(json!({ "session_id": id })),
            StoreError::Reasoning(r) => r.into(),
            other => ApiError::new(ErrorCode::Internal, other.to_string()),
        }
    }
}

type ApiResult<T> = Result<(StatusCode, Json<T>), ApiError>;

fn ok<T>(body: T) -> ApiResult<T> {
    Ok((StatusCode::OK, Json(body)))
}

/// Parses a JSON body; an empty body reads as `T::default()` when allowed.
fn parse<T: DeserializeOwned>(bytes: &[u8], empty: Option<T>) -> Result<T, ApiError> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        if let Some(v) = empty {
            return Ok(v);
        }
    }
    serde_json::from_slice(bytes).map_err(|e| {
        ApiError::new(ErrorCode::BadRequest, format!("malformed body: {e}"))
            .with_detail(json!({ "line": e.line(), "column": e.column() }))
    })
}

fn check_case(case_text: &str, features: &[f64]) -> Result<(), ApiError> {
    if case_text.trim().is_empty() {
        return Err(ApiError::field("case_text", "case_text must not be empty"));
    }
    if features.len() != IMAGE_DIM {
        return Err(ApiError::new(
            ErrorCode::BadRequest,
            format!(
                "image_features must have {IMAGE_DIM} values, got {}",
                features.len()
            ),
        )
        .with_detail(json!({ "field": "image_features", "expected": IMAGE_DIM, "found": features.len() })));
    }
    Ok(())
}

fn check_top_k(top_k: usize) -> Result<(), ApiError> {
    if !(1..=118).contains(&top_k) {
        return Err(ApiError::field(
            "top_k",
            format!("top_k must be in 1..=118, got {top_k}"),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSessionRequest {
    pub case_text: String,
    pub image_features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionDescriptor {
    pub schema_version: u32,
    pub session_id: String,
    pub status: SessionStatus,
    pub level: u8,
    pub candidates: usize,
    pub pending: Option<ClarificationRequest>,
}

impl SessionDescriptor {
    fn of(s: &SessionState) -> Self {
        SessionDescriptor {
            schema_version: SCHEMA_VERSION,
            session_id: s.session_id.clone(),
            status: s.status,
            level: s.current_level,
            candidates: s.candidates.len(),
            pending: s.pending.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResponse {
    pub schema_version: u32,
    pub session_id: String,
    pub status: SessionStatus,
    /// Level the session is at after the step.
    pub level: u8,
    pub candidates: usize,
    pub step: StepOutcome,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerRequest {
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerResponse {
    pub schema_version: u32,
    pub session_id: String,
    pub accepted: bool,
    pub level: u8,
    pub candidates: usize,
    /// Best two outputs of the current level under the refreshed embedding.
    pub top_two: Vec<Contender>,
    /// Log-probability gap between them; absent with a single output.
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinalizeRequest {
    #[serde(default)]
    pub top_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalizeResponse {
    pub schema_version: u32,
    pub session_id: String,
    pub finding: Finding,
    pub report: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub schema_version: u32,
    pub session: SessionState,
    pub report: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FastRequest {
    pub case_text: String,
    pub image_features: Vec<f64>,
    #[serde(default)]
    pub top_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FastResponse {
    pub schema_version: u32,
    pub diagnosis: Diagnosis,
    pub report: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyView {
    pub schema_version: u32,
    pub schema: CategorySchema,
    pub diseases: Vec<DiseaseRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtlasView {
    pub schema_version: u32,
    pub atlas: AtlasExport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub schema_version: u32,
    pub status: String,
    pub sessions: usize,
}

type AppState = Arc<SessionStore>;

/// Runs CPU-bound work off the async executor.
async fn blocking<T: Send + 'static>(
    store: &AppState,
    f: impl FnOnce(&SessionStore) -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    let store = store.clone();
    tokio::task::spawn_blocking(move || f(&store))
        .await
        .map_err(|e| ApiError::new(ErrorCode::Internal, format!("worker failed: {e}")))?
}

async fn create_session(State(store): State<AppState>, body: Bytes) -> ApiResult<SessionDescriptor> {
    let req: CreateSessionRequest = parse(&body, None)?;
    check_case(&req.case_text, &req.image_features)?;
    let state = blocking(
        &store,
        move |s| Ok(s.create(&req.case_text, &req.image_features)?),
    )
    .await?;
    Ok((StatusCode::CREATED, Json(SessionDescriptor::of(&state))))
}

async fn get_session(State(store): State<AppState>, Path(id): Path<String>) -> ApiResult<SessionView> {
    let session = store.get(&id)?;
    let report = session
        .result
        .as_ref()
        .map(|f| render_standard(f, &session.transcript));
    ok(SessionView {
        schema_version: SCHEMA_VERSION,
        session,
        report,
    })
}

async fn step_session(State(store): State<AppState>, Path(id): Path<String>) -> ApiResult<StepResponse> {
    let (outcome, state) = blocking(&store, move |s| {
        Ok(s.mutate(&id, |ctx, state| {
            let outcome = state.step(ctx)?;
            Ok((outcome.clone(), EventKind::Stepped { outcome }))
        })?)
    })
    .await?;
    ok(StepResponse {
        schema_version: SCHEMA_VERSION,
        session_id: state.session_id.clone(),
        status: state.status,
        level: state.current_level,
        candidates: state.candidates.len(),
        step: outcome,
    })
}

async fn answer_session(
    State(store): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<AnswerResponse> {
    let req: AnswerRequest = parse(&body, None)?;
    let (top_two, state) = blocking(&store, move |s| {
        Ok(s.mutate(&id, |ctx, state| {
            state.answer(ctx, &req.answer)?;
            let dist = state.current_distribution(ctx)?;
            let mut order: Vec<usize> = (0..dist.len()).filter(|&i| dist[i] > 0.0).collect();
            order.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
            let top: Vec<Contender> = order
                .iter()
                .take(2)
                .map(|&i| {
                    let (key, display) = ctx.label(state.current_level, i);
                    Contender {
                        key,
                        display,
                        log_prob: dist[i].ln(),
                    }
                })
                .collect();
            Ok((
                top,
                EventKind::Clarified {
                    answer: req.answer.clone(),
                },
            ))
        })?)
    })
    .await?;
    let gap = (top_two.len() == 2).then(|| top_two[0].log_prob - top_two[1].log_prob);
    ok(AnswerResponse {
        schema_version: SCHEMA_VERSION,
        session_id: state.session_id.clone(),
        accepted: true,
        level: state.current_level,
        candidates: state.candidates.len(),
        top_two,
        gap,
    })
}

async fn waive_session(
    State(store): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<SessionDescriptor> {
    let ((), state) = blocking(&store, move |s| {
        Ok(s.mutate(&id, |ctx, state| {
            state.waive(ctx)?;
            Ok(((), EventKind::Waived))
        })?)
    })
    .await?;
    ok(SessionDescriptor::of(&state))
}

async fn finalize_session(
    State(store): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<FinalizeResponse> {
    let req: FinalizeRequest = parse(&body, Some(FinalizeRequest::default()))?;
    let top_k = req.top_k.unwrap_or(store.engine().config.top_k);
    check_top_k(top_k)?;
    let (finding, state) = blocking(&store, move |s| {
        Ok(s.mutate(&id, |ctx, state| {
            let finding = state.finalize(ctx, top_k)?;
            Ok((finding.clone(), EventKind::Finalized { top_k, finding }))
        })?)
    })
    .await?;
    ok(FinalizeResponse {
        schema_version: SCHEMA_VERSION,
        session_id: state.session_id.clone(),
        report: render_standard(&finding, &state.transcript),
        finding,
    })
}

async fn fast_diagnose(State(store): State<AppState>, body: Bytes) -> ApiResult<FastResponse> {
    let req: FastRequest = parse(&body, None)?;
    check_case(&req.case_text, &req.image_features)?;
    let top_k = req.top_k.unwrap_or(store.engine().config.top_k);
    check_top_k(top_k)?;
    let diagnosis = blocking(&store, move |s| {
        let engine = s.engine();
        let embedding = oraldx_core::fusion::embed_case(
            engine.backend(),
            engine.fuser(),
            &req.case_text,
            &req.image_features,
        )
        .map_err(ReasoningError::from)?;
        let ctx = engine.context();
        Ok(oraldx_core::reasoning::run_fast(
            ctx.model,
            embedding.as_slice(),
            ctx.taxonomy,
            top_k,
            &ctx.bands,
        )?)
    })
    .await?;
    ok(FastResponse {
        schema_version: SCHEMA_VERSION,
        report: render_fast(&diagnosis),
        diagnosis,
    })
}

async fn get_taxonomy(State(store): State<AppState>) -> ApiResult<TaxonomyView> {
    let t = &store.engine().taxonomy;
    ok(TaxonomyView {
        schema_version: SCHEMA_VERSION,
        schema: t.schema().clone(),
        diseases: t.diseases().to_vec(),
    })
}

async fn get_atlas(State(store): State<AppState>) -> ApiResult<AtlasView> {
    match &store.engine().atlas {
        Some(atlas) => ok(AtlasView {
            schema_version: SCHEMA_VERSION,
            atlas: atlas.clone(),
        }),
        None => Err(ApiError::new(
            ErrorCode::NotFound,
            "the loaded model has no atlas",
        )),
    }
}

async fn health(State(store): State<AppState>) -> ApiResult<Health> {
    ok(Health {
        schema_version: SCHEMA_VERSION,
        status: "ok".into(),
        sessions: store.len(),
    })
}

async fn no_route() -> ApiError {
    ApiError::new(ErrorCode::NotFound, "no such endpoint")
}

async fn wrong_method() -> ApiError {
    let mut e = ApiError::new(ErrorCode::BadRequest, "method not allowed on this endpoint");
    e.status = Some(405);
    e
}

pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/taxonomy", get(get_taxonomy))
        .route("/v1/atlas", get(get_atlas))
        .route("/v1/fast", post(fast_diagnose))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/step", post(step_session))
        .route("/v1/sessions/{id}/answer", post(answer_session))
        .route("/v1/sessions/{id}/waive", post(waive_session))
        .route("/v1/sessions/{id}/finalize", post(finalize_session))
        .fallback(no_route)
        .method_not_allowed_fallback(wrong_method)
        .with_state(store)
}
