//! HTTP/JSON service over the enhancement engine.
//!
//! Every compute-heavy handler runs on the blocking pool so that slow
//! requests (training, benchmarks) do not stall the async workers.

mod error;
mod handlers;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::AtomicU64;
use std::sync::{Arc, Mutex};

use axum::extract::DefaultBodyLimit;
use axum::routing::{delete, get, post};
use axum::Router;
use lisennet_api::paths;
use lisennet_core::model::Model;
use lisennet_core::runtime::Stream;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

pub use error::{ApiJson, Failure};

/// Largest accepted request body.
pub const BODY_LIMIT: usize = 512 * 1024 * 1024;

/// Upper bound on concurrently open streams.
pub const MAX_STREAMS: usize = 256;

pub struct AppState {
    model: Arc<Model>,
    streams: Mutex<HashMap<u64, Arc<Mutex<Stream>>>>,
    next_stream: AtomicU64,
}

impl AppState {
    /// Service state answering model-less requests with `model`.
    pub fn new(model: Model) -> Arc<Self> {
        Arc::new(Self {
            model: Arc::new(model),
            streams: Mutex::new(HashMap::new()),
            next_stream: AtomicU64::new(1),
        })
    }

    pub fn model(&self) -> &Arc<Model> {
        &self.model
    }

    pub fn open_streams(&self) -> usize {
        self.streams.lock().map(|m| m.len()).unwrap_or(0)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route(paths::HEALTH, get(handlers::health))
        .route(paths::PARAMS, get(handlers::params_default).post(handlers::params))
        .route(paths::MACS, get(handlers::macs_default).post(handlers::macs))
        .route(paths::ENHANCE, post(handlers::enhance))
        .route(paths::DETECT, post(handlers::detect))
        .route(paths::BENCH_RTF, post(handlers::bench_rtf))
        .route(paths::GRADCHECK, post(handlers::gradcheck))
        .route(paths::TRAIN_MICRO, post(handlers::train_micro))
        .route(paths::STREAMS, post(handlers::open_stream))
        .route("/v1/streams/{id}/push", post(handlers::push_stream))
        .route("/v1/streams/{id}/finish", post(handlers::finish_stream))
        .route("/v1/streams/{id}", delete(handlers::close_stream))
        .fallback(handlers::no_route)
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

/// Binds `addr` and serves in a background task; returns the bound address.
pub async fn spawn(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<(SocketAddr, JoinHandle<std::io::Result<()>>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    tracing::info!(%local, "listening");
    Ok((local, tokio::spawn(serve(listener, state))))
}
