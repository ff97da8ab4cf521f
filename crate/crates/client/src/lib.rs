//! Async client for the lisennet HTTP/JSON service.

use lisennet_api::{self as api, paths, ApiError};
use reqwest::{Method, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),

    #[error("{} ({status}): {}", .error.kind, .error.message)]
    Api { status: u16, error: ApiError },

    #[error("malformed response: {0}")]
    Decode(String),
}

impl ClientError {
    /// The service's error category, when the service answered.
    pub fn kind(&self) -> Option<&str> {
        match self {
            Self::Api { error, .. } => Some(&error.kind),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base_url` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base_url: impl Into<String>) -> Self {
        let base = base_url.into().trim_end_matches('/').to_string();
        Self {
            base,
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn send<B: Serialize, T: DeserializeOwned>(&self, method: Method, path: &str, body: Option<&B>) -> Result<T> {
        let mut req = self.http.request(method, format!("{}{path}", self.base));
        if let Some(b) = body {
            let bytes = api::to_json(b).map_err(|e| ClientError::Decode(e.to_string()))?;
            req = req.header(reqwest::header::CONTENT_TYPE, "application/json").body(bytes);
        }
        let resp = req.send().await?;
        let status = resp.status();
        let bytes = resp.bytes().await?;
        if !status.is_success() {
            let error = api::from_json::<ApiError>(&bytes).unwrap_or_else(|_| ApiError {
                kind: "http".into(),
                message: String::from_utf8_lossy(&bytes).into_owned(),
            });
            return Err(ClientError::Api {
                status: status.as_u16(),
                error,
            });
        }
        if status == StatusCode::NO_CONTENT {
            return api::from_json(b"null").map_err(|e| ClientError::Decode(e.to_string()));
        }
        api::from_json(&bytes).map_err(|e| ClientError::Decode(e.to_string()))
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        self.send(Method::POST, path, Some(body)).await
    }

    pub async fn health(&self) -> Result<api::Health> {
        self.send::<(), _>(Method::GET, paths::HEALTH, None).await
    }

    pub async fn params(&self, req: &api::ParamsRequest) -> Result<api::ParamsResponse> {
        self.post(paths::PARAMS, req).await
    }

    pub async fn macs(&self, req: &api::MacsRequest) -> Result<api::MacsResponse> {
        self.post(paths::MACS, req).await
    }

    pub async fn enhance(&self, req: &api::EnhanceRequest) -> Result<api::EnhanceResponse> {
        self.post(paths::ENHANCE, req).await
    }

    pub async fn detect(&self, req: &api::DetectRequest) -> Result<api::DetectResponse> {
        self.post(paths::DETECT, req).await
    }

    pub async fn bench_rtf(&self, req: &api::BenchRequest) -> Result<api::BenchResponse> {
        self.post(paths::BENCH_RTF, req).await
    }

    pub async fn gradcheck(&self, req: &api::GradcheckRequest) -> Result<api::GradcheckResponse> {
        self.post(paths::GRADCHECK, req).await
    }

    pub async fn train_micro(&self, req: &api::TrainRequest) -> Result<api::TrainResponse> {
        self.post(paths::TRAIN_MICRO, req).await
    }

    pub async fn open_stream(&self, req: &api::OpenStreamRequest) -> Result<api::OpenStreamResponse> {
        self.post(paths::STREAMS, req).await
    }

    pub async fn push(&self, id: u64, samples: &[f64]) -> Result<api::PushResponse> {
        let body = api::PushRequest {
            samples: samples.to_vec(),
        };
        self.post(&paths::stream_push(id), &body).await
    }

    /// Flushes the stream; the service forgets it afterwards.
    pub async fn finish(&self, id: u64) -> Result<api::FinishResponse> {
        self.send::<(), _>(Method::POST, &paths::stream_finish(id), None).await
    }

    pub async fn close(&self, id: u64) -> Result<()> {
        self.send::<(), ()>(Method::DELETE, &paths::stream(id), None).await
    }
}
