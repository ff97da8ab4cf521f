use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Request};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use lisennet_api::ApiError;
use lisennet_core::Error;
use serde::de::DeserializeOwned;

/// A failed request: status code plus a JSON [`ApiError`] body.
#[derive(Debug)]
pub struct Failure {
    pub status: StatusCode,
    pub body: ApiError,
}

impl Failure {
    pub fn new(status: StatusCode, kind: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ApiError {
                kind: kind.to_string(),
                message: message.into(),
            },
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

fn kind_of(e: &Error) -> &'static str {
    match e {
        Error::EmptyInput => "empty_input",
        Error::Config(_) => "config",
        Error::Shape { .. } => "shape",
        Error::NegativeMagnitude(_) => "negative_magnitude",
        Error::MissingCache(_) => "missing_cache",
        Error::Diverged { .. } => "diverged",
        Error::UnexpectedEof => "unexpected_eof",
        Error::BadMagic => "bad_magic",
        Error::UnsupportedVersion(_) => "unsupported_version",
        Error::Checksum { .. } => "checksum",
        Error::Header(_) => "header",
        Error::Tensor { .. } => "tensor",
        Error::SampleRate(_) => "sample_rate",
        Error::WavFormat(_) => "wav_format",
        Error::Io(_) => "io",
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Io(_) | Error::MissingCache(_) => StatusCode::INTERNAL_SERVER_ERROR,
            Error::Diverged { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::BAD_REQUEST,
        };
        Self::new(status, kind_of(&e), e.to_string())
    }
}

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::warn!(kind = %self.body.kind, "{}", self.body.message);
        }
        (self.status, Json(self.body)).into_response()
    }
}

/// `Json` extractor whose rejections use the service's error body.
pub struct ApiJson<T>(pub T);

impl<S, T> FromRequest<S> for ApiJson<T>
where
    T: DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = Failure;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Self(v)),
            Err(rej) => {
                let kind = match rej {
                    JsonRejection::JsonDataError(_) => "invalid_body",
                    JsonRejection::JsonSyntaxError(_) => "invalid_json",
                    JsonRejection::MissingJsonContentType(_) => "content_type",
                    _ => "bad_request",
                };
                Err(Failure::new(rej.status(), kind, rej.body_text()))
            }
        }
    }
}
