use axum::extract::rejection::JsonRejection;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use narrator_core::session::SessionError;
use serde_json::json;

/// JSON error body: `{"error": {"code", "message"}}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn unauthorized() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "Unauthorized", "missing or wrong bearer token")
    }

    pub fn no_session(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "UnknownSession", format!("no session {id}"))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Json(json!({"error": {"code": self.code, "message": self.message}}));
        (self.status, body).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let message = e.to_string();
        let (status, code) = match e {
            SessionError::InvalidSelection(_) => (StatusCode::CONFLICT, "InvalidSelection"),
            SessionError::BlockedWithoutOverride { .. } => {
                (StatusCode::CONFLICT, "BlockedWithoutOverride")
            }
            SessionError::SessionEnded => (StatusCode::CONFLICT, "SessionEnded"),
            SessionError::InvalidTransition { .. } => (StatusCode::CONFLICT, "InvalidTransition"),
            SessionError::InvalidAction(_) => (StatusCode::UNPROCESSABLE_ENTITY, "InvalidAction"),
            SessionError::InvalidConfig(_) => (StatusCode::UNPROCESSABLE_ENTITY, "InvalidConfig"),
            SessionError::UnknownSeedEntry(_) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "UnknownSeedEntry")
            }
            SessionError::BackendUnavailable(_) => {
                (StatusCode::SERVICE_UNAVAILABLE, "BackendUnavailable")
            }
            SessionError::SeedUnavailable => (StatusCode::SERVICE_UNAVAILABLE, "SeedUnavailable"),
            SessionError::InvalidLog(_) => (StatusCode::INTERNAL_SERVER_ERROR, "InvalidLog"),
        };
        Self::new(status, code, message)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "MalformedRequest", e.body_text())
    }
}
