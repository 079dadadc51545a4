use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use nsdx_core::eval::Stage;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum ReviewError {
    #[error("unknown case `{0}`")]
    NotFound(String),
    #[error("case `{case_id}` is at stage {current:?}; a {submitted} payload is not accepted now")]
    State {
        case_id: String,
        current: Stage,
        submitted: &'static str,
    },
    #[error("invalid payload: {0}")]
    Validation(String),
    #[error("bundle {path}: {message}")]
    Bundle { path: String, message: String },
    #[error(transparent)]
    Core(#[from] nsdx_core::Error),
}

impl ReviewError {
    pub fn status(&self) -> StatusCode {
        match self {
            ReviewError::NotFound(_) => StatusCode::NOT_FOUND,
            ReviewError::State { .. } => StatusCode::CONFLICT,
            ReviewError::Validation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ReviewError::Bundle { .. } | ReviewError::Core(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ReviewError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.to_string() });
        if let ReviewError::State { current, .. } = &self {
            body["stage"] = json!(current);
        }
        (self.status(), Json(body)).into_response()
    }
}
