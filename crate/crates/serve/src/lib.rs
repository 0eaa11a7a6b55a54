//! HTTP detection endpoint over a trained model and its embedding provider.
//!
//! There is no authentication; run it behind a gateway.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use promptgate_core::embed::{Embedder, ProviderConfig};
use promptgate_core::learn::{load_model, TrainedModel};
use promptgate_core::{Label, ProviderError};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Semaphore;
use tracing::{info, warn};

pub const MAX_BATCH: usize = 256;
pub const DEFAULT_MAX_BODY_BYTES: usize = 65536;
pub const DEFAULT_REQUEST_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("model file {0} does not exist")]
    MissingModel(PathBuf),
    #[error("threshold {0} is outside [0, 1]")]
    Threshold(f64),
    #[error("model was trained on provider {model} but the service uses {provider}")]
    ProviderMismatch { model: String, provider: String },
    #[error("model expects {model} features but the provider produces {provider}")]
    DimensionMismatch { model: usize, provider: usize },
    #[error("model is already loaded")]
    AlreadyLoaded,
    #[error(transparent)]
    Core(#[from] promptgate_core::Error),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub listen_address: SocketAddr,
    pub model_path: PathBuf,
    pub provider: ProviderConfig,
    pub threshold: f64,
    pub max_body_bytes: usize,
    pub request_timeout: Duration,
    /// Answer provider failures with a degraded "malicious" verdict instead
    /// of a 502.
    pub fail_closed: bool,
}

impl ServiceConfig {
    pub fn new(listen_address: SocketAddr, model_path: impl Into<PathBuf>, provider: ProviderConfig) -> Self {
        Self {
            listen_address,
            model_path: model_path.into(),
            provider,
            threshold: 0.5,
            max_body_bytes: DEFAULT_MAX_BODY_BYTES,
            request_timeout: DEFAULT_REQUEST_TIMEOUT,
            fail_closed: false,
        }
    }
}

/// Shared request state. The model slot is filled once and never changes.
pub struct AppState {
    model: OnceLock<TrainedModel>,
    embedder: Arc<dyn Embedder>,
    threshold: f64,
    fail_closed: bool,
    request_timeout: Duration,
    upstream: Semaphore,
    started: Instant,
}

impl AppState {
    /// State with no model yet; health reports "loading" until
    /// [`install`](Self::install) succeeds.
    pub fn loading(embedder: Arc<dyn Embedder>, threshold: f64, max_in_flight: usize) -> Result<Self, ServeError> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(ServeError::Threshold(threshold));
        }
        Ok(Self {
            model: OnceLock::new(),
            embedder,
            threshold,
            fail_closed: false,
            request_timeout: DEFAULT_REQUEST_TIMEOUT,
            upstream: Semaphore::new(max_in_flight.max(1)),
            started: Instant::now(),
        })
    }

    pub fn with_fail_closed(mut self, fail_closed: bool) -> Self {
        self.fail_closed = fail_closed;
        self
    }

    pub fn with_request_timeout(mut self, timeout: Duration) -> Self {
        self.request_timeout = timeout;
        self
    }

    /// Attach the model, refusing one trained on a different embedding space.
    pub fn install(&self, model: TrainedModel) -> Result<(), ServeError> {
        if model.provider_tag != self.embedder.tag() {
            return Err(ServeError::ProviderMismatch {
                model: model.provider_tag,
                provider: self.embedder.tag(),
            });
        }
        if model.feature_dim() != self.embedder.dim() {
            return Err(ServeError::DimensionMismatch {
                model: model.feature_dim(),
                provider: self.embedder.dim(),
            });
        }
        self.model.set(model).map_err(|_| ServeError::AlreadyLoaded)
    }

    pub fn model(&self) -> Option<&TrainedModel> {
        self.model.get()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DetectResponse {
    pub score: Option<f64>,
    pub label: String,
    pub model_tag: String,
    pub provider_tag: String,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degraded: bool,
}

#[derive(Debug, Deserialize)]
struct DetectRequest {
    prompt: String,
}

#[derive(Debug, Deserialize)]
struct BatchRequest {
    prompts: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BatchResponse {
    pub results: Vec<DetectResponse>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model_tag: Option<String>,
    pub provider_tag: String,
    pub uptime_seconds: f64,
}

struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            body: json!({ "error": message.into() }),
        }
    }

    fn bad_prompt(index: Option<usize>) -> Self {
        let mut e = Self::new(StatusCode::BAD_REQUEST, "prompt must be non-empty");
        if let Some(i) = index {
            e.body["index"] = json!(i);
        }
        e
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

pub fn router(state: Arc<AppState>, max_body_bytes: usize) -> Router {
    Router::new()
        .route("/v1/detect", post(detect))
        .route("/v1/detect_batch", post(detect_batch))
        .route("/healthz", get(healthz))
        .layer(DefaultBodyLimit::max(max_body_bytes))
        .with_state(state)
}

async fn healthz(State(state): State<Arc<AppState>>) -> Json<Health> {
    let model = state.model();
    Json(Health {
        status: if model.is_some() { "ok" } else { "loading" }.into(),
        model_tag: model.map(|m| m.family().to_string()),
        provider_tag: state.embedder.tag(),
        uptime_seconds: state.started.elapsed().as_secs_f64(),
    })
}

async fn detect(State(state): State<Arc<AppState>>, Json(req): Json<DetectRequest>) -> Result<Json<DetectResponse>, ApiError> {
    if req.prompt.trim().is_empty() {
        return Err(ApiError::bad_prompt(None));
    }
    let mut results = score_prompts(&state, vec![req.prompt]).await?;
    Ok(Json(results.remove(0)))
}

async fn detect_batch(State(state): State<Arc<AppState>>, Json(req): Json<BatchRequest>) -> Result<Json<BatchResponse>, ApiError> {
    if req.prompts.is_empty() || req.prompts.len() > MAX_BATCH {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            format!("batch must hold 1 to {MAX_BATCH} prompts, got {}", req.prompts.len()),
        ));
    }
    if let Some(i) = req.prompts.iter().position(|p| p.trim().is_empty()) {
        return Err(ApiError::bad_prompt(Some(i)));
    }
    let results = score_prompts(&state, req.prompts).await?;
    Ok(Json(BatchResponse { results }))
}

fn verdict(model: &TrainedModel, provider_tag: &str, threshold: f64, score: Option<f64>) -> DetectResponse {
    let label = match score {
        Some(s) if s < threshold => Label::Benign,
        _ => Label::Malicious,
    };
    DetectResponse {
        score,
        label: label.name().into(),
        model_tag: model.family().to_string(),
        provider_tag: provider_tag.to_string(),
        threshold,
        degraded: score.is_none(),
    }
}

async fn score_prompts(state: &Arc<AppState>, prompts: Vec<String>) -> Result<Vec<DetectResponse>, ApiError> {
    let Some(model) = state.model() else {
        return Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "model is still loading"));
    };
    let count = prompts.len();
    let permit = state
        .upstream
        .acquire()
        .await
        .map_err(|_| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "shutting down"))?;

    let embedder = Arc::clone(&state.embedder);
    let work = tokio::task::spawn_blocking(move || -> Result<Vec<Vec<f64>>, ProviderError> {
        let mut out = Vec::with_capacity(prompts.len());
        for chunk in prompts.chunks(embedder.batch_size().max(1)) {
            out.extend(embedder.embed_batch(chunk)?.into_iter().map(|v| v.into_inner()));
        }
        Ok(out)
    });
    let outcome = tokio::time::timeout(state.request_timeout, work).await;
    drop(permit);

    let provider_tag = state.embedder.tag();
    let failure = match outcome {
        Ok(Ok(Ok(vectors))) => {
            return Ok(vectors
                .iter()
                .map(|v| verdict(model, &provider_tag, state.threshold, Some(model.classifier.score_row(v))))
                .collect());
        }
        Ok(Ok(Err(e))) => (StatusCode::BAD_GATEWAY, format!("embedding provider failed: {e}")),
        Ok(Err(join)) => (StatusCode::INTERNAL_SERVER_ERROR, format!("embedding task failed: {join}")),
        Err(_) => (
            StatusCode::GATEWAY_TIMEOUT,
            format!("embedding did not finish within {:?}", state.request_timeout),
        ),
    };
    warn!(status = %failure.0, error = %failure.1, "detection failed");
    if state.fail_closed {
        return Ok((0..count).map(|_| verdict(model, &provider_tag, state.threshold, None)).collect());
    }
    Err(ApiError::new(failure.0, failure.1))
}

/// Load the model, check it against the provider, then bind and serve until
/// interrupted. Nothing is bound when loading fails.
pub async fn run(config: ServiceConfig) -> Result<(), ServeError> {
    if !config.model_path.is_file() {
        return Err(ServeError::MissingModel(config.model_path));
    }
    let embedder: Arc<dyn Embedder> = Arc::from(config.provider.build()?);
    let state = AppState::loading(embedder, config.threshold, config.provider.max_in_flight)?
        .with_fail_closed(config.fail_closed)
        .with_request_timeout(config.request_timeout);
    let path = config.model_path.clone();
    let model = tokio::task::spawn_blocking(move || load_model(path))
        .await
        .map_err(|e| ServeError::Io(std::io::Error::other(e)))??;
    state.install(model)?;
    let state = Arc::new(state);

    let listener = tokio::net::TcpListener::bind(config.listen_address)
        .await
        .map_err(|source| ServeError::Bind {
            addr: config.listen_address,
            source,
        })?;
    info!(addr = %listener.local_addr()?, model = %config.model_path.display(), "serving");
    axum::serve(listener, router(state, config.max_body_bytes))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
