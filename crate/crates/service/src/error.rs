use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

#[derive(Debug, Clone, PartialEq)]
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

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    pub fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }

    pub fn busy() -> Self {
        Self::new(StatusCode::CONFLICT, "model busy: queue budget exhausted, retry later")
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

impl From<mst_core::Error> for ApiError {
    fn from(e: mst_core::Error) -> Self {
        use mst_core::Error as E;
        let status = match &e {
            E::InvalidProbability(_) => StatusCode::UNPROCESSABLE_ENTITY,
            E::OutOfBounds { .. }
            | E::ZeroLengthSegment { .. }
            | E::ShapeMismatch { .. }
            | E::InvalidInput(_)
            | E::NonFinite(_)
            | E::Json(_)
            | E::PngDecode(_) => StatusCode::BAD_REQUEST,
            E::Detector(_) => StatusCode::BAD_GATEWAY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}
