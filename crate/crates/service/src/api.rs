use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Result, ServiceError};
use crate::render::{payload, QueryPayload};
use crate::session::{CreateSession, CreatedSession, SessionManager, SessionStatus, SessionSummary};
use crate::store::OracleKind;

#[derive(Clone)]
pub struct AppState {
    pub sessions: Arc<SessionManager>,
    /// How long a label request waits for the next query before answering
    /// with `running`.
    pub label_wait: Duration,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRequest {
    pub seq: u64,
    pub label: usize,
}

#[derive(Debug, Serialize)]
pub struct LabelResponse {
    pub status: SessionStatus,
    /// Sequence number of the next query.
    pub seq: u64,
}

#[derive(Debug, Serialize)]
pub struct PendingResponse {
    pub seq: u64,
    #[serde(flatten)]
    pub query: QueryPayload,
}

async fn blocking<R: Send + 'static>(f: impl FnOnce() -> Result<R> + Send + 'static) -> Result<R> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Setup(format!("worker task failed: {e}")))?
}

/// Answers a local-oracle session in the background.
pub fn spawn_local(sessions: Arc<SessionManager>, id: String) {
    tokio::task::spawn_blocking(move || {
        if let Err(e) = sessions.run_local(&id) {
            tracing::warn!(%id, error = %e, "local oracle run stopped");
        }
    });
}

async fn create_session(State(st): State<AppState>, Json(req): Json<CreateSession>) -> Result<impl IntoResponse> {
    let local = req.oracle.unwrap_or(st.sessions.models().default_oracle) == OracleKind::Local;
    let sessions = st.sessions.clone();
    let created: CreatedSession = blocking(move || sessions.create(req)).await?;
    if local {
        spawn_local(st.sessions.clone(), created.session_id.clone());
    }
    Ok((StatusCode::CREATED, Json(created)))
}

async fn get_session(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionSummary>> {
    Ok(Json(st.sessions.summary(&id)?))
}

async fn get_pending(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<PendingResponse>> {
    let sessions = st.sessions.clone();
    blocking(move || {
        let query = sessions.pending(&id)?;
        let models = sessions.models();
        let x = models.codec.decode_one(&query.z)?;
        Ok(Json(PendingResponse {
            seq: query.seq,
            query: payload(&x, models.input_shape(), &models.centers)?,
        }))
    })
    .await
}

async fn post_label(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<LabelRequest>,
) -> Result<Json<LabelResponse>> {
    let sessions = st.sessions.clone();
    let task = {
        let id = id.clone();
        tokio::task::spawn_blocking(move || sessions.submit_label(&id, req.seq, req.label))
    };
    match tokio::time::timeout(st.label_wait, task).await {
        Ok(joined) => {
            let summary = joined.map_err(|e| ServiceError::Setup(format!("worker task failed: {e}")))??;
            Ok(Json(LabelResponse {
                status: summary.status,
                seq: summary.queries as u64,
            }))
        }
        Err(_) => Ok(Json(LabelResponse {
            status: SessionStatus::Running,
            seq: req.seq + 1,
        })),
    }
}

async fn get_trajectory(State(st): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse> {
    let body = st.sessions.trajectory_jsonl(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body))
}

async fn get_classes(State(st): State<AppState>) -> Json<serde_json::Value> {
    let models = st.sessions.models();
    Json(json!({ "n_classes": models.n_classes(), "names": models.class_names }))
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

/// Method and path of every route under `/api/v1`.
pub const ENDPOINTS: [(&str, &str); 7] = [
    ("POST", "/sessions"),
    ("GET", "/sessions/{id}"),
    ("GET", "/sessions/{id}/pending"),
    ("POST", "/sessions/{id}/label"),
    ("GET", "/sessions/{id}/trajectory"),
    ("GET", "/classes"),
    ("GET", "/healthz"),
];

pub fn api_router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/pending", get(get_pending))
        .route("/sessions/{id}/label", post(post_label))
        .route("/sessions/{id}/trajectory", get(get_trajectory))
        .route("/classes", get(get_classes))
        .route("/healthz", get(healthz))
        .with_state(state)
}
