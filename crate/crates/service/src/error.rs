use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown session {0}")]
    NotFound(String),
    #[error("stale query: submitted seq {submitted}, current seq {current}")]
    StaleSeq { submitted: u64, current: u64 },
    #[error("session {0} has no pending query")]
    NoPending(String),
    #[error("session {0} has expired")]
    Expired(String),
    #[error("invalid request: {0}")]
    Validation(String),
    #[error("setup error: {0}")]
    Setup(String),
    #[error(transparent)]
    Engine(#[from] leapfactual::Error),
    #[error("session store: {0}")]
    Io(#[from] std::io::Error),
    #[error("session log: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::StaleSeq { .. } | ServiceError::NoPending(_) => StatusCode::CONFLICT,
            ServiceError::Expired(_) => StatusCode::GONE,
            ServiceError::Validation(_) | ServiceError::Setup(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Engine(leapfactual::Error::LabelRange { .. }) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Engine(_) | ServiceError::Io(_) | ServiceError::Json(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn code(&self) -> &'static str {
        match self {
            ServiceError::NotFound(_) => "not_found",
            ServiceError::StaleSeq { .. } => "stale_seq",
            ServiceError::NoPending(_) => "no_pending_query",
            ServiceError::Expired(_) => "expired",
            ServiceError::Validation(_) | ServiceError::Engine(leapfactual::Error::LabelRange { .. }) => "validation",
            ServiceError::Setup(_) => "setup",
            _ => "internal",
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        (status, Json(json!({ "error": self.code(), "message": self.to_string() }))).into_response()
    }
}
