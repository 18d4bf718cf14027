//! HTTP session API.

use std::collections::HashSet;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ontoagent_core::gym::{run_benchmark, Interviewer, MatcherKind, Scenario};
use ontoagent_core::induction::{induce_ontology, InductionError, RequirementDoc};
use ontoagent_core::interview::{InterviewError, SessionState};
use ontoagent_core::{ExperienceOntology, GenerationError, OntologyError, TextBackend};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::config::AppConfig;
use crate::store::{new_session_id, FileStore, SessionRecord, StoreError};
use crate::views::{requirements_view, session_view, step_view, CreatedSessionView};

pub struct AppState {
    pub store: FileStore,
    pub backend: Arc<dyn TextBackend>,
    pub config: AppConfig,
    busy: Mutex<HashSet<String>>,
}

impl AppState {
    pub fn new(store: FileStore, backend: Arc<dyn TextBackend>, config: AppConfig) -> Self {
        Self {
            store,
            backend,
            config,
            busy: Mutex::new(HashSet::new()),
        }
    }
}

/// Marks a session as busy for the lifetime of the guard.
struct BusyGuard<'a> {
    state: &'a AppState,
    id: String,
}

impl<'a> BusyGuard<'a> {
    fn acquire(state: &'a AppState, id: &str) -> Option<Self> {
        let mut busy = state.busy.lock().expect("busy lock");
        busy.insert(id.to_string()).then(|| Self {
            state,
            id: id.to_string(),
        })
    }
}

impl Drop for BusyGuard<'_> {
    fn drop(&mut self) {
        self.state.busy.lock().expect("busy lock").remove(&self.id);
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    path: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            path: None,
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", message)
    }

    fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: Some(path.into()),
            ..Self::new(StatusCode::BAD_REQUEST, "schema_violation", message)
        }
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "not_found",
            format!("{what} `{id}` not found"),
        )
    }

    fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "conflict", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut error = json!({"code": self.code, "message": self.message});
        if let Some(path) = self.path {
            error["path"] = json!(path);
        }
        (self.status, Json(json!({ "error": error }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Immutable(_) => ApiError::conflict(e.to_string()),
            other => ApiError::internal(other.to_string()),
        }
    }
}

impl From<GenerationError> for ApiError {
    fn from(e: GenerationError) -> Self {
        ApiError::new(StatusCode::BAD_GATEWAY, "backend_error", e.to_string())
    }
}

impl From<InterviewError> for ApiError {
    fn from(e: InterviewError) -> Self {
        match e {
            InterviewError::SessionFinished | InterviewError::NotAwaitingAnswer => {
                ApiError::conflict(e.to_string())
            }
            InterviewError::EmptyOntology
            | InterviewError::EmptyDescription
            | InterviewError::EmptyAnswer
            | InterviewError::InvalidConfig(_) => ApiError::bad_request(e.to_string()),
            InterviewError::Generation(g) => g.into(),
            InterviewError::Ontology(o) => ApiError::internal(o.to_string()),
        }
    }
}

fn ontology_error(prefix: &str, e: OntologyError) -> ApiError {
    match e {
        OntologyError::SchemaViolation { path, message } => {
            let path = match path.as_str() {
                "$" | "" => prefix.to_string(),
                p => format!("{prefix}.{p}"),
            };
            ApiError::schema(path, message)
        }
        other => ApiError::bad_request(other.to_string()),
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Err(ApiError::bad_request("request body is empty"));
    }
    let mut de = serde_json::Deserializer::from_slice(body);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { "$".to_string() } else { path };
        ApiError::schema(path, e.into_inner().to_string())
    })?;
    de.end().map_err(|e| ApiError::schema("$", e.to_string()))?;
    Ok(value)
}

async fn blocking<T, F>(work: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(work)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/ontologies", post(create_ontology))
        .route("/ontologies/{id}", get(get_ontology))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/answers", post(post_answer))
        .route("/sessions/{id}/ontology", get(get_session_ontology))
        .route("/sessions/{id}/requirements", get(get_requirements))
        .route("/evaluations", post(create_evaluation))
        .route("/evaluations/{id}", get(get_evaluation))
        .fallback(|| async {
            ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
        })
        .with_state(state)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateOntologyRequest {
    ontology: Option<Value>,
    induce: Option<InduceRequest>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InduceRequest {
    domain_name: String,
    aspects: Vec<String>,
    corpus: Vec<RequirementDoc>,
}

async fn create_ontology(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let request: CreateOntologyRequest = parse_body(&body)?;
    let (onto, log) = match (request.ontology, request.induce) {
        (Some(document), None) => {
            let onto = ExperienceOntology::from_json(&document.to_string())
                .map_err(|e| ontology_error("ontology", e))?;
            (onto, None)
        }
        (None, Some(induce)) => {
            if induce.aspects.is_empty() {
                return Err(ApiError::schema(
                    "induce.aspects",
                    InductionError::EmptyAspectList.to_string(),
                ));
            }
            if induce.corpus.iter().any(|d| d.body.trim().is_empty()) {
                return Err(ApiError::schema("induce.corpus", "document body is empty"));
            }
            let backend = state.backend.clone();
            let outcome = blocking(move || {
                induce_ontology(
                    &induce.domain_name,
                    &induce.corpus,
                    &induce.aspects,
                    backend.as_ref(),
                )
                .map_err(|e| match e {
                    InductionError::Generation(g) => g.into(),
                    other => ApiError::bad_request(other.to_string()),
                })
            })
            .await?;
            let log = outcome.log_jsonl();
            (outcome.ontology, Some(log))
        }
        _ => {
            return Err(ApiError::schema(
                "$",
                "exactly one of `ontology` or `induce` is required",
            ))
        }
    };
    let id = state.store.put_ontology(&onto)?;
    let mut body = json!({
        "ontology_id": id,
        "digest": onto.digest(),
        "aspect_count": onto.aspects.len(),
        "dimension_count": onto.dimension_count(),
        "slot_count": onto.slot_count(),
    });
    if let Some(log) = log {
        body["induction_log"] = json!(log
            .lines()
            .map(|l| serde_json::from_str::<Value>(l).expect("log line is JSON"))
            .collect::<Vec<_>>());
    }
    Ok((StatusCode::CREATED, Json(body)))
}

async fn get_ontology(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<ExperienceOntology>, ApiError> {
    state
        .store
        .get_ontology(&id)?
        .map(Json)
        .ok_or_else(|| ApiError::not_found("ontology", &id))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSessionRequest {
    ontology_id: String,
    initial_description: String,
    max_turns: Option<u32>,
    gate_threshold: Option<u32>,
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let request: CreateSessionRequest = parse_body(&body)?;
    if request.initial_description.trim().is_empty() {
        return Err(ApiError::schema("initial_description", "must not be empty"));
    }
    let mut config = state.config.interview();
    if let Some(t) = request.max_turns {
        if t < 1 {
            return Err(ApiError::schema("max_turns", "must be at least 1"));
        }
        config.max_turns = t;
    }
    if let Some(n) = request.gate_threshold {
        if n < 1 {
            return Err(ApiError::schema("gate_threshold", "must be at least 1"));
        }
        config.gate_threshold = n;
    }
    let onto = state
        .store
        .get_ontology(&request.ontology_id)?
        .ok_or_else(|| ApiError::not_found("ontology", &request.ontology_id))?;

    let worker = state.clone();
    let view = blocking(move || {
        let id = new_session_id();
        let (session, _) = SessionState::start(
            id,
            &onto,
            &request.initial_description,
            config,
            worker.backend.as_ref(),
        )?;
        let mut record = SessionRecord::new(Some(request.ontology_id), session);
        worker.store.save_session(&mut record)?;
        Ok(CreatedSessionView {
            session_id: record.session_id.clone(),
            step: step_view(&record.snapshot),
        })
    })
    .await?;
    Ok((StatusCode::CREATED, Json(view)))
}

fn load_session(state: &AppState, id: &str) -> Result<SessionRecord, ApiError> {
    state
        .store
        .get_session(id)?
        .ok_or_else(|| ApiError::not_found("session", id))
}

async fn get_session(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(session_view(&load_session(&state, &id)?)))
}

async fn get_session_ontology(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(load_session(&state, &id)?.snapshot.onto))
}

async fn get_requirements(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(requirements_view(
        &load_session(&state, &id)?.snapshot,
    )))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnswerRequest {
    text: String,
}

async fn post_answer(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let request: AnswerRequest = parse_body(&body)?;
    let record = load_session(&state, &id)?;
    if record.snapshot.is_finished() {
        return Err(ApiError::conflict(format!("session `{id}` is finished")));
    }
    if request.text.trim().is_empty() {
        return Err(ApiError::schema("text", "must not be empty"));
    }
    let worker = state.clone();
    let view = blocking(move || {
        let Some(_guard) = BusyGuard::acquire(&worker, &id) else {
            return Err(ApiError::conflict(format!(
                "another answer for session `{id}` is being processed"
            )));
        };
        // re-read under the guard so a just-finished answer is seen
        let mut record = load_session(&worker, &id)?;
        let mut next = record.snapshot.clone();
        next.step(&request.text, worker.backend.as_ref())?;
        record.snapshot = next;
        worker.store.save_session(&mut record)?;
        Ok(step_view(&record.snapshot))
    })
    .await?;
    Ok(Json(view))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluationRequest {
    interviewer: InterviewerName,
    ontology_id: Option<String>,
    scenarios: Vec<Scenario>,
    matcher: Option<MatcherKind>,
    max_turns: Option<u32>,
    gate_threshold: Option<u32>,
}

#[derive(Deserialize, Clone, Copy)]
#[serde(rename_all = "lowercase")]
enum InterviewerName {
    Ontoagent,
    Freeform,
}

async fn create_evaluation(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let request: EvaluationRequest = parse_body(&body)?;
    if request.scenarios.is_empty() {
        return Err(ApiError::schema(
            "scenarios",
            "at least one scenario is required",
        ));
    }
    for (i, s) in request.scenarios.iter().enumerate() {
        s.validate()
            .map_err(|e| ApiError::schema(format!("scenarios[{i}]"), e.to_string()))?;
    }
    let mut config = state.config.episode();
    if let Some(m) = request.matcher {
        config.matcher = m;
    }
    if let Some(t) = request.max_turns {
        if t < 1 {
            return Err(ApiError::schema("max_turns", "must be at least 1"));
        }
        config.interview.max_turns = t;
    }
    if let Some(n) = request.gate_threshold {
        if n < 1 {
            return Err(ApiError::schema("gate_threshold", "must be at least 1"));
        }
        config.interview.gate_threshold = n;
    }
    let onto = match (request.interviewer, &request.ontology_id) {
        (InterviewerName::Ontoagent, None) => {
            return Err(ApiError::schema(
                "ontology_id",
                "required for the ontoagent interviewer",
            ))
        }
        (InterviewerName::Ontoagent, Some(id)) => Some(
            state
                .store
                .get_ontology(id)?
                .ok_or_else(|| ApiError::not_found("ontology", id))?,
        ),
        (InterviewerName::Freeform, _) => None,
    };
    let worker = state.clone();
    let (evaluation_id, report) = blocking(move || {
        let interviewer = match &onto {
            Some(o) => Interviewer::OntoAgent(o),
            None => Interviewer::Freeform,
        };
        let run = run_benchmark(
            &request.scenarios,
            interviewer,
            &config,
            worker.backend.as_ref(),
        )
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
        let id = new_session_id();
        let text = run.report.to_json();
        worker.store.put_evaluation(&id, &text, &run.transcripts)?;
        Ok((
            id,
            serde_json::to_value(&run.report).expect("report serializes"),
        ))
    })
    .await?;
    Ok((
        StatusCode::CREATED,
        Json(json!({"evaluation_id": evaluation_id, "report": report})),
    ))
}

async fn get_evaluation(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ApiError> {
    let text = state
        .store
        .get_report(&id)?
        .ok_or_else(|| ApiError::not_found("evaluation", &id))?;
    let report: Value = serde_json::from_str(&text)
        .map_err(|e| ApiError::internal(format!("stored report is corrupt: {e}")))?;
    Ok(Json(report))
}

/// Serves the API until ctrl-c.
pub async fn serve(state: Arc<AppState>, listen: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(listen).await?;
    tracing::info!(address = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
