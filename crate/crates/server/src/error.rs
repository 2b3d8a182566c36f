use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

/// Error body returned by every endpoint: `{"code": ..., "message": ...}`.
#[derive(Debug, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    code: &'a str,
    message: &'a str,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    pub fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no session `{id}`"))
    }

    pub fn conflict(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<oprl::Error> for ApiError {
    fn from(e: oprl::Error) -> Self {
        let message = e.to_string();
        match e {
            oprl::Error::UnknownEnvironment(_) => Self::new(StatusCode::BAD_REQUEST, "unknown_environment", message),
            oprl::Error::Config(_) => Self::new(StatusCode::BAD_REQUEST, "invalid_config", message),
            oprl::Error::Json(_) => Self::new(StatusCode::BAD_REQUEST, "invalid_json", message),
            oprl::Error::Input(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_input", message),
            oprl::Error::Io(_) => Self::internal(message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { code: self.code, message: &self.message })).into_response()
    }
}
