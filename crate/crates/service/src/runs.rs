//! Asynchronous pipeline runs on a bounded worker pool.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::Json;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use uuid::Uuid;

use formalex_core::pipeline::{refine_loop, Outcome, RefinementHistory};
use formalex_core::store::{Payload, Status};

use crate::{parse_body, ApiError, AppState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Pending,
    Running,
    Accepted,
    Exhausted,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub id: Uuid,
    pub article: String,
    pub status: RunStatus,
    pub sample_id: Option<Uuid>,
    pub history: Option<RefinementHistory>,
    pub error: Option<String>,
    pub created_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    threshold: Option<u32>,
    max_iterations: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunRequest {
    article_ref: String,
    #[serde(default)]
    config: RunConfig,
}

pub(crate) async fn start_run(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    state.identify(&headers)?;
    let request: RunRequest = parse_body(&body)?;
    if request.article_ref.trim().is_empty() {
        return Err(ApiError::Unprocessable("article_ref is empty".into()));
    }
    if request.config.max_iterations == Some(0) {
        return Err(ApiError::Unprocessable("max_iterations must be at least 1".into()));
    }
    let Some(factory) = state.agents.clone() else {
        return Err(ApiError::Unavailable("no agents are configured for pipeline runs".into()));
    };

    let mut config = state.refine.clone();
    if let Some(t) = request.config.threshold {
        config.threshold = t;
    }
    if let Some(n) = request.config.max_iterations {
        config.max_iterations = n;
    }
    let id = Uuid::new_v4();
    let article = request.article_ref.trim().to_string();
    state.runs.lock().expect("runs lock poisoned").insert(
        id,
        RunRecord {
            id,
            article: article.clone(),
            status: RunStatus::Pending,
            sample_id: None,
            history: None,
            error: None,
            created_at: Utc::now(),
            finished_at: None,
        },
    );

    let state2 = state.clone();
    tokio::spawn(async move {
        let state = state2;
        let _permit = state.workers.clone().acquire_owned().await.expect("worker pool never closes");
        update(&state, id, |r| r.status = RunStatus::Running);
        let worker_state = state.clone();
        let worker_article = article.clone();
        let joined = tokio::task::spawn_blocking(move || {
            let agents = factory()?;
            let (sample, history) =
                refine_loop(&worker_article, &config, agents.as_agents(), &worker_state.templates);
            finish(&worker_state, sample, &history)?;
            Ok::<_, String>(history)
        })
        .await;
        let result = joined.unwrap_or_else(|e| Err(format!("pipeline worker panicked: {e}")));
        update(&state, id, |r| {
            r.finished_at = Some(Utc::now());
            match result {
                Ok(history) => {
                    r.status = match history.outcome {
                        Outcome::Accepted { .. } => RunStatus::Accepted,
                        Outcome::Exhausted => RunStatus::Exhausted,
                    };
                    r.sample_id = history.sample_id;
                    r.history = Some(history);
                }
                Err(e) => {
                    r.status = RunStatus::Failed;
                    r.error = Some(e);
                }
            }
        });
    });
    Ok((StatusCode::ACCEPTED, Json(json!({ "run_id": id }))))
}

/// Persists the outcome: the history always, an accepted sample appended and
/// placed in the review queue.
fn finish(
    state: &AppState,
    sample: Option<formalex_core::store::Sample>,
    history: &RefinementHistory,
) -> Result<(), String> {
    let mut store = state.store();
    store.corpus.append_history(history).map_err(|e| e.to_string())?;
    if let Some(sample) = sample {
        let id = store.corpus.append(sample).map_err(|e| e.to_string())?;
        store.corpus.transition(id, Status::Queued, Payload::None).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn update(state: &AppState, id: Uuid, f: impl FnOnce(&mut RunRecord)) {
    if let Some(r) = state.runs.lock().expect("runs lock poisoned").get_mut(&id) {
        f(r);
    }
}

pub(crate) async fn get_run(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<RunRecord>, ApiError> {
    let not_found = || ApiError::NotFound(format!("no pipeline run with id {id}"));
    let run_id = Uuid::parse_str(&id).map_err(|_| not_found())?;
    let runs = state.runs.lock().expect("runs lock poisoned");
    runs.get(&run_id).cloned().map(Json).ok_or_else(not_found)
}
