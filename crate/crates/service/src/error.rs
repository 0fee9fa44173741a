use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ServiceError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::Validation(_) => StatusCode::BAD_REQUEST,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
        }
    }

    fn parts(&self) -> (&'static str, &str) {
        match self {
            ServiceError::Validation(d) => ("validation", d),
            ServiceError::NotFound(d) => ("not_found", d),
            ServiceError::Conflict(d) => ("conflict", d),
        }
    }
}

impl From<molmimo::Error> for ServiceError {
    fn from(e: molmimo::Error) -> Self {
        ServiceError::Validation(e.to_string())
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let (error, detail) = self.parts();
        (
            self.status(),
            Json(json!({ "error": error, "detail": detail })),
        )
            .into_response()
    }
}
