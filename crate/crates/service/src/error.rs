use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use fairloop_core::session::SessionError;
use serde_json::Value;

use crate::api::{ErrorBody, API_SCHEMA_VERSION};

/// An HTTP error rendered as `{schema_version, code, message, detail}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub detail: Value,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            detail: Value::Null,
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    pub fn baseline_unavailable() -> Self {
        Self::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "baseline_unavailable",
            "baseline artifacts are not loaded",
        )
    }

    pub fn session_not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "session_not_found", format!("no session `{id}`"))
            .with_detail(serde_json::json!({ "session_id": id }))
    }

    pub fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let message = e.to_string();
        match e {
            SessionError::Locked(app) => Self::new(StatusCode::CONFLICT, "application_locked", message)
                .with_detail(serde_json::json!({ "application_id": app })),
            SessionError::UnknownApplication(app) => {
                Self::new(StatusCode::NOT_FOUND, "unknown_application", message)
                    .with_detail(serde_json::json!({ "application_id": app }))
            }
            SessionError::InvalidFeedback(reason) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_feedback", message)
                    .with_detail(serde_json::json!({ "reason": reason }))
            }
            SessionError::EmptyUndo => Self::new(StatusCode::CONFLICT, "empty_undo", message),
            SessionError::Integration(_) => Self::internal(message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            schema_version: API_SCHEMA_VERSION,
            code: self.code.to_string(),
            message: self.message,
            detail: self.detail,
        };
        (self.status, Json(body)).into_response()
    }
}
