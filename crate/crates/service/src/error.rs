use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use rebound_core::adapters::AdapterError;
use rebound_core::session::EditError;
use rebound_core::store::StoreError;
use serde_json::json;

/// An error response: a status code and a message rendered as
/// `{"error": message}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, message)
    }

    pub fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<EditError> for ApiError {
    fn from(e: EditError) -> Self {
        match &e {
            e if e.is_not_found() => Self::not_found(e.to_string()),
            EditError::WrongMode { .. } => Self::conflict(e.to_string()),
            _ => Self::unprocessable(e.to_string()),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Invalid(_) | StoreError::Malformed { .. } => {
                Self::unprocessable(e.to_string())
            }
            _ => Self::internal(e.to_string()),
        }
    }
}

impl From<AdapterError> for ApiError {
    fn from(e: AdapterError) -> Self {
        match &e {
            AdapterError::Write { source, .. }
                if source.kind() == std::io::ErrorKind::AlreadyExists =>
            {
                Self::conflict(e.to_string())
            }
            AdapterError::Read { .. } | AdapterError::Write { .. } => Self::internal(e.to_string()),
            _ => Self::unprocessable(e.to_string()),
        }
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
