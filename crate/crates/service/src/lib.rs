//! HTTP facade over a sample corpus: browsing, the annotator queue, verdicts
//! and meta reviews, pipeline runs, curated export and statistics.
//!
//! All corpus mutations go through one lock, so queue assignment is an
//! atomic check-and-assign and concurrent verdicts resolve first-writer-wins.

pub mod assign;
pub mod auth;
mod error;
mod runs;

use std::collections::HashMap;
use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Semaphore;
use uuid::Uuid;

use formalex_core::agent::RoleAgents;
use formalex_core::eval::{EvalOptions, Evaluator};
use formalex_core::lint::{lint, LintConfig, LintSubject};
use formalex_core::pipeline::RefineConfig;
use formalex_core::store::{Category, Corpus, MetaDecision, MetaInput, Payload, Sample, Status};
use formalex_core::store::HumanVerdict;
use formalex_core::templates::Templates;

pub use assign::{Assignment, Assignments};
pub use auth::{Identity, Role, Tokens, TOKENS_ENV, TOKEN_HEADER};
pub use error::ApiError;
pub use runs::{RunRecord, RunStatus};

pub const DEFAULT_PIPELINE_WORKERS: usize = 2;

/// Builds the agents for one pipeline run.
pub type AgentFactory = Arc<dyn Fn() -> Result<RoleAgents, String> + Send + Sync>;

pub struct ServiceConfig {
    pub corpus: PathBuf,
    pub tokens: Tokens,
    /// Directory of built review-ui assets, served for unmatched paths.
    pub ui_dir: Option<PathBuf>,
    pub pipeline_workers: usize,
    /// `None` disables `POST /pipeline/run`.
    pub agents: Option<AgentFactory>,
    pub templates: Templates,
    pub refine: RefineConfig,
}

impl ServiceConfig {
    pub fn new(corpus: impl Into<PathBuf>) -> Self {
        Self {
            corpus: corpus.into(),
            tokens: Tokens::default(),
            ui_dir: None,
            pipeline_workers: DEFAULT_PIPELINE_WORKERS,
            agents: None,
            templates: Templates::default(),
            refine: RefineConfig::default(),
        }
    }
}

pub(crate) struct Store {
    pub corpus: Corpus,
    pub assignments: Assignments,
}

pub struct AppState {
    store: Mutex<Store>,
    tokens: Tokens,
    ui_dir: Option<PathBuf>,
    agents: Option<AgentFactory>,
    templates: Templates,
    refine: RefineConfig,
    workers: Arc<Semaphore>,
    runs: Mutex<HashMap<Uuid, RunRecord>>,
}

#[derive(Debug, thiserror::Error)]
pub enum StartError {
    #[error(transparent)]
    Store(#[from] formalex_core::store::StoreError),
    #[error("assignments: {0}")]
    Assignments(io::Error),
}

impl AppState {
    pub fn open(config: ServiceConfig) -> Result<Arc<Self>, StartError> {
        let corpus = Corpus::open(&config.corpus)?;
        let assignments = Assignments::open(formalex_core::store::sibling(&config.corpus, "assignments.jsonl"))
            .map_err(StartError::Assignments)?;
        Ok(Arc::new(Self {
            store: Mutex::new(Store { corpus, assignments }),
            tokens: config.tokens,
            ui_dir: config.ui_dir,
            agents: config.agents,
            templates: config.templates,
            refine: config.refine,
            workers: Arc::new(Semaphore::new(config.pipeline_workers.max(1))),
            runs: Mutex::new(HashMap::new()),
        }))
    }

    pub(crate) fn store(&self) -> MutexGuard<'_, Store> {
        self.store.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    fn identify(&self, headers: &HeaderMap) -> Result<&Identity, ApiError> {
        self.tokens.lookup(headers).ok_or(ApiError::Unauthorized)
    }

    fn require(&self, headers: &HeaderMap, role: Role) -> Result<&Identity, ApiError> {
        let who = self.identify(headers)?;
        if who.role != role {
            return Err(ApiError::Forbidden(format!("this endpoint requires the {role} role")));
        }
        Ok(who)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let mut app = Router::new()
        .route("/samples", get(list_samples))
        .route("/samples/{id}", get(get_sample))
        .route("/samples/{id}/verdict", post(post_verdict))
        .route("/samples/{id}/meta", post(post_meta))
        .route("/queue", get(my_queue))
        .route("/queue/next", get(queue_next))
        .route("/pipeline/run", post(runs::start_run))
        .route("/pipeline/runs/{id}", get(runs::get_run))
        .route("/export", get(export))
        .route("/stats", get(stats))
        .route("/whoami", get(whoami));
    if let Some(dir) = &state.ui_dir {
        let index = dir.join("index.html");
        app = app.fallback_service(tower_http::services::ServeDir::new(dir).fallback(
            tower_http::services::ServeFile::new(index),
        ));
    }
    app.with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> io::Result<()> {
    axum::serve(listener, router(state)).await
}

/// A server on its own runtime thread, stopped on drop.
pub struct BackgroundServer {
    pub addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<io::Result<()>>>,
}

impl BackgroundServer {
    pub fn start(state: Arc<AppState>, addr: SocketAddr) -> io::Result<Self> {
        let runtime = tokio::runtime::Builder::new_multi_thread().worker_threads(4).enable_all().build()?;
        let listener = runtime.block_on(tokio::net::TcpListener::bind(addr))?;
        let addr = listener.local_addr()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            runtime.block_on(async move {
                axum::serve(listener, router(state))
                    .with_graceful_shutdown(async move {
                        let _ = rx.await;
                    })
                    .await
            })
        });
        Ok(Self { addr, shutdown: Some(tx), thread: Some(thread) })
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }

    pub fn stop(mut self) -> io::Result<()> {
        self.shutdown_inner()
    }

    fn shutdown_inner(&mut self) -> io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        let _ = self.shutdown_inner();
    }
}

/// Parses a JSON request body; anything unusable is a 422.
pub(crate) fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::Unprocessable(format!("malformed request body: {e}")))
}

fn parse_id(raw: &str) -> Result<Uuid, ApiError> {
    Uuid::parse_str(raw).map_err(|_| ApiError::NotFound(format!("no sample with id {raw}")))
}

#[derive(Debug, Deserialize)]
struct ListQuery {
    status: Option<String>,
    article: Option<String>,
    page: Option<usize>,
    per_page: Option<usize>,
}

#[derive(Debug, Serialize)]
struct SampleSummary {
    id: Uuid,
    article: String,
    question: String,
    status: Status,
    label: bool,
    average_score: Option<f64>,
    final_category: Option<Category>,
    assigned_to: Option<String>,
    updated_at: chrono::DateTime<chrono::Utc>,
}

fn summarize(s: &Sample, assignments: &Assignments) -> SampleSummary {
    let average_score = (!s.reports.is_empty())
        .then(|| s.reports.iter().map(|r| r.score as f64).sum::<f64>() / s.reports.len() as f64);
    SampleSummary {
        id: s.id,
        article: s.article.clone(),
        question: s.question.clone(),
        status: s.status,
        label: s.label,
        average_score,
        final_category: s.final_category(),
        assigned_to: assignments.get(s.id).map(|a| a.annotator_id.clone()),
        updated_at: s.updated_at,
    }
}

const MAX_PER_PAGE: usize = 500;

async fn list_samples(State(state): State<Arc<AppState>>, Query(q): Query<ListQuery>) -> Result<Json<Value>, ApiError> {
    let status: Option<Status> = match q.status.as_deref().filter(|s| !s.is_empty()) {
        Some(s) => Some(s.parse().map_err(ApiError::Unprocessable)?),
        None => None,
    };
    let page = q.page.unwrap_or(1).max(1);
    let per_page = q.per_page.unwrap_or(50).clamp(1, MAX_PER_PAGE);
    let store = state.store();
    let matching: Vec<&Sample> = store
        .corpus
        .samples()
        .iter()
        .filter(|s| status.is_none_or(|st| s.status == st))
        .filter(|s| q.article.as_deref().filter(|a| !a.is_empty()).is_none_or(|a| s.article == a))
        .collect();
    let items: Vec<SampleSummary> = matching
        .iter()
        .skip((page - 1) * per_page)
        .take(per_page)
        .map(|s| summarize(s, &store.assignments))
        .collect();
    Ok(Json(json!({ "total": matching.len(), "page": page, "per_page": per_page, "items": items })))
}

/// The full record plus what the review UI renders: the derivation trace of
/// the stored tree and facts, and the lint findings.
pub fn sample_detail(sample: &Sample, assignment: Option<&Assignment>) -> Value {
    let lint_findings = lint(
        LintSubject {
            tree: &sample.rule_tree,
            facts: &sample.facts,
            label: Some(sample.label),
            question: &sample.question,
        },
        &LintConfig::default(),
    );
    let evaluation = Evaluator::new(&sample.rule_tree).and_then(|ev| ev.evaluate(&sample.facts, &EvalOptions::default()));
    let trace = match &evaluation {
        Ok(r) => json!({
            "target": r.target,
            "value": r.value,
            "entries": r.trace,
            "warnings": r.warnings.iter().map(|w| json!({"code": w.code.to_string(), "predicate": w.predicate})).collect::<Vec<_>>(),
            "rendered": r.trace.render(&sample.rule_tree, &r.target),
        }),
        Err(e) => json!({ "error": e.to_string() }),
    };
    json!({
        "sample": sample,
        "final_category": sample.final_category(),
        "trace": trace,
        "findings": lint_findings,
        "assignment": assignment,
    })
}

async fn get_sample(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let id = parse_id(&id)?;
    let store = state.store();
    let sample = store.corpus.get(id).ok_or_else(|| ApiError::NotFound(format!("no sample with id {id}")))?;
    Ok(Json(sample_detail(sample, store.assignments.get(id))))
}

#[derive(Debug, Deserialize)]
struct QueueQuery {
    annotator: Option<String>,
}

fn annotator_for<'a>(state: &'a AppState, headers: &HeaderMap, q: &QueueQuery) -> Result<&'a Identity, ApiError> {
    let who = state.require(headers, Role::Annotator)?;
    if let Some(requested) = q.annotator.as_deref().filter(|a| !a.is_empty()) {
        if requested != who.id {
            return Err(ApiError::Forbidden(format!("token belongs to annotator {}, not {requested}", who.id)));
        }
    }
    Ok(who)
}

async fn queue_next(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Query(q): Query<QueueQuery>,
) -> Result<Json<Value>, ApiError> {
    let who = annotator_for(&state, &headers, &q)?.clone();
    let mut store = state.store();
    let Store { corpus, assignments } = &mut *store;
    let next = corpus
        .samples()
        .iter()
        .find(|s| s.status == Status::Queued && !assignments.is_assigned(s.id))
        .map(|s| s.id);
    let Some(id) = next else {
        return Ok(Json(json!({ "assignment": null, "sample": null, "remaining": 0 })));
    };
    let assignment = assignments.assign(id, &who.id).map_err(|e| ApiError::Internal(e.to_string()))?;
    let remaining = corpus
        .samples()
        .iter()
        .filter(|s| s.status == Status::Queued && !assignments.is_assigned(s.id))
        .count();
    let sample = corpus.get(id).expect("just found");
    tracing::info!(sample = %id, annotator = %who.id, "assigned");
    Ok(Json(json!({
        "assignment": assignment,
        "sample": sample_detail(sample, Some(&assignment)),
        "remaining": remaining,
    })))
}

/// The caller's assignments that still await a verdict.
async fn my_queue(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Query(q): Query<QueueQuery>,
) -> Result<Json<Value>, ApiError> {
    let who = annotator_for(&state, &headers, &q)?.clone();
    let store = state.store();
    let mut open: Vec<&Assignment> = store
        .assignments
        .for_annotator(&who.id)
        .filter(|a| store.corpus.get(a.sample_id).is_some_and(|s| s.status == Status::Queued))
        .collect();
    open.sort_by_key(|a| a.assigned_at);
    let unassigned = store
        .corpus
        .samples()
        .iter()
        .filter(|s| s.status == Status::Queued && !store.assignments.is_assigned(s.id))
        .count();
    Ok(Json(json!({ "annotator": who.id, "open": open, "unassigned": unassigned })))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VerdictBody {
    #[serde(default)]
    annotator_id: Option<String>,
    relevant: bool,
    well_formalized: bool,
    logically_sound: bool,
    category: Category,
    #[serde(default)]
    notes: String,
}

async fn post_verdict(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let who = state.require(&headers, Role::Annotator)?.clone();
    let id = parse_id(&id)?;
    let input: VerdictBody = parse_body(&body)?;
    if input.annotator_id.as_deref().is_some_and(|a| a != who.id) {
        return Err(ApiError::Forbidden("annotator_id does not match the token".into()));
    }
    let mut store = state.store();
    if store.corpus.get(id).is_none() {
        return Err(ApiError::NotFound(format!("no sample with id {id}")));
    }
    match store.assignments.get(id) {
        Some(a) if a.annotator_id == who.id => {}
        Some(_) => return Err(ApiError::NotAssignee(format!("sample {id} is assigned to another annotator"))),
        None => return Err(ApiError::NotAssignee(format!("sample {id} is not assigned to you"))),
    }
    let verdict = HumanVerdict {
        annotator_id: who.id.clone(),
        relevant: input.relevant,
        well_formalized: input.well_formalized,
        logically_sound: input.logically_sound,
        category: input.category,
        notes: input.notes,
        timestamp: chrono::Utc::now(),
    };
    let sample = store.corpus.transition(id, Status::HumanVerified, Payload::Verdict(verdict))?;
    tracing::info!(sample = %id, annotator = %who.id, "verdict recorded");
    Ok(Json(json!({ "sample": sample, "final_category": sample.final_category() })))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaBody {
    decision: MetaDecision,
    #[serde(default)]
    rationale: String,
}

async fn post_meta(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let who = state.require(&headers, Role::Meta)?.clone();
    let id = parse_id(&id)?;
    let input: MetaBody = parse_body(&body)?;
    let mut store = state.store();
    let sample = store.corpus.transition(
        id,
        Status::MetaReviewed,
        Payload::Meta(MetaInput { reviewer_id: who.id.clone(), decision: input.decision, rationale: input.rationale }),
    )?;
    Ok(Json(json!({ "sample": sample, "final_category": sample.final_category() })))
}

async fn export(State(state): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let mut buf = Vec::new();
    let count = {
        let store = state.store();
        store.corpus.write_curated(&mut buf).map_err(|e| ApiError::Internal(e.to_string()))?
    };
    Ok((
        StatusCode::OK,
        [(header::CONTENT_TYPE, "application/x-ndjson".to_string()), (header::HeaderName::from_static("x-record-count"), count.to_string())],
        Body::from(buf),
    )
        .into_response())
}

async fn stats(State(state): State<Arc<AppState>>) -> Json<Value> {
    let stats = state.store().corpus.stats();
    Json(serde_json::to_value(stats).expect("stats always serialize"))
}

async fn whoami(State(state): State<Arc<AppState>>, headers: HeaderMap) -> Result<Json<Identity>, ApiError> {
    Ok(Json(state.identify(&headers)?.clone()))
}
