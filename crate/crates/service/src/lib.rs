//! HTTP JSON front end for conceptual-shift queries.
//!
//! Routes:
//!
//! - `POST /v1/shift` answers one query
//! - `GET /v1/categories` lists the indexed labels
//! - `GET /healthz` liveness
//!
//! The engine is loaded once and shared read-only between handlers. Until it
//! is installed, query and listing routes answer 503 while `/healthz` keeps
//! answering, so a supervisor can start probing before a large index loads.

use std::path::PathBuf;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Request, State};
use axum::http::StatusCode;
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use csp_core::cluster::FORMAT_VERSION;
use csp_core::engine::{Novelty, ShiftConfig, ShiftEngine, ShiftResponse};
use csp_core::ingest::Corpus;
use csp_core::{load_embeddings, load_index, Error, Label, Sketch};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tokio::net::TcpListener;

/// Paths of the three artifacts a service needs.
#[derive(Debug, Clone)]
pub struct ArtifactPaths {
    pub index: PathBuf,
    pub embeddings: PathBuf,
    pub corpus: PathBuf,
}

/// Loads the index, then only the embeddings and corpus categories it needs.
pub fn load_engine(paths: &ArtifactPaths) -> csp_core::Result<ShiftEngine> {
    let index = load_index(&paths.index)?;
    let store = load_embeddings(&paths.embeddings, index.labels())?;
    let limit = index
        .limit_per_category
        .map(|l| usize::try_from(l).unwrap_or(usize::MAX));
    let corpus = Corpus::load_labels(&paths.corpus, index.labels(), limit)?;
    ShiftEngine::new(index, store, corpus, ShiftConfig::default())
}

#[derive(Debug)]
pub struct AppState {
    engine: OnceLock<Arc<ShiftEngine>>,
    started: Instant,
}

impl AppState {
    pub fn empty() -> Arc<Self> {
        Arc::new(Self {
            engine: OnceLock::new(),
            started: Instant::now(),
        })
    }

    pub fn with_engine(engine: ShiftEngine) -> Arc<Self> {
        let state = Self::empty();
        state.install(engine);
        state
    }

    /// Installs the engine. Later calls are ignored.
    pub fn install(&self, engine: ShiftEngine) {
        let _ = self.engine.set(Arc::new(engine));
    }

    pub fn engine(&self) -> Option<&Arc<ShiftEngine>> {
        self.engine.get()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/shift", post(shift))
        .route("/v1/categories", get(categories))
        .route("/healthz", get(healthz))
        .layer(middleware::from_fn(log_request))
        .with_state(state)
}

/// Serves until ctrl-c or SIGTERM.
pub async fn serve(listener: TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown_signal())
        .await
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        if let Ok(mut s) = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate())
        {
            s.recv().await;
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    tracing::info!("shutdown requested");
}

async fn log_request(req: Request, next: Next) -> Response {
    let method = req.method().clone();
    let path = req.uri().path().to_owned();
    let start = Instant::now();
    let response = next.run(req).await;
    tracing::info!(
        %method,
        path,
        status = response.status().as_u16(),
        micros = start.elapsed().as_micros() as u64,
        "request"
    );
    response
}

/// Error body: `{"error_code": ..., "message": ...}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error_code": self.code, "message": self.message });
        (self.status, Json(body)).into_response()
    }
}

fn not_loaded() -> ApiError {
    ApiError::new(
        StatusCode::SERVICE_UNAVAILABLE,
        "not_loaded",
        "index is still loading",
    )
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::UnknownCategory(_) | Error::InvalidLabel(_) => {
                (StatusCode::NOT_FOUND, "unknown_category")
            }
            Error::DegenerateSketch => (StatusCode::UNPROCESSABLE_ENTITY, "degenerate_sketch"),
            Error::EmptySketch | Error::EmptyInput | Error::InvalidSketch(_) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "invalid_strokes")
            }
            Error::MissingVector(_) => (StatusCode::UNPROCESSABLE_ENTITY, "no_vector"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError::new(status, code, format!("{}: {e}", e.code()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShiftRequest {
    pub label: String,
    pub strokes: Vec<Vec<Vec<f64>>>,
    pub novelty: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReply {
    pub target_label: String,
    pub novelty: Novelty,
    pub visual_similarity: f64,
    pub conceptual_similarity: f64,
    pub composite: f64,
    pub fallback_used: bool,
    pub sketch: Vec<[Vec<i32>; 2]>,
    pub request_id: String,
}

impl ShiftReply {
    pub fn new(r: &ShiftResponse, novelty: Novelty, request_id: String) -> Self {
        Self {
            target_label: r.label.to_string(),
            novelty,
            visual_similarity: r.candidate.visual_sim,
            conceptual_similarity: r.candidate.conceptual_sim,
            composite: r.candidate.composite,
            fallback_used: r.fallback_used,
            sketch: r.sketch.to_drawing(),
            request_id,
        }
    }
}

/// Canvas coordinates beyond this magnitude are rejected rather than
/// silently wrapped.
const MAX_COORD: f64 = 1.0e6;

fn request_sketch(label: Label, strokes: &[Vec<Vec<f64>>]) -> Result<Sketch, ApiError> {
    let invalid = |m: String| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_strokes", m);
    if strokes.is_empty() {
        return Err(invalid("strokes must not be empty".into()));
    }
    let mut drawing = Vec::with_capacity(strokes.len());
    for (i, stroke) in strokes.iter().enumerate() {
        let [xs, ys] = stroke.as_slice() else {
            return Err(invalid(format!("stroke {i} must be [xs, ys]")));
        };
        let convert = |vs: &[f64]| {
            vs.iter()
                .map(|&v| {
                    if v.is_finite() && v.abs() <= MAX_COORD {
                        Ok(v.round() as i32)
                    } else {
                        Err(invalid(format!("stroke {i} has coordinate {v}")))
                    }
                })
                .collect::<Result<Vec<i32>, ApiError>>()
        };
        drawing.push([convert(xs)?, convert(ys)?]);
    }
    Ok(Sketch::from_drawing(label, &drawing, "request")?)
}

/// Stable id derived from the request content, so identical requests get
/// identical replies.
pub fn request_id(label: &Label, novelty: Novelty, strokes: &[Vec<Vec<f64>>]) -> String {
    let mut h = Sha256::new();
    h.update(label.as_str().as_bytes());
    h.update([0]);
    h.update(novelty.as_str().as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(strokes).expect("numbers serialize"));
    h.finalize()[..8]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

async fn shift(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> Result<Json<ShiftReply>, ApiError> {
    let value: Value = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_json", e.to_string()))?;
    let req: ShiftRequest = serde_json::from_value(value)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string()))?;
    let novelty: Novelty = req.novelty.parse().map_err(|_| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "bad_novelty",
            format!(
                "novelty must be low, intermediate or high, got {:?}",
                req.novelty
            ),
        )
    })?;
    let engine = state.engine().ok_or_else(not_loaded)?;
    let label = Label::new(&req.label)?;
    if !engine.index().contains(&label) {
        return Err(Error::UnknownCategory(label.to_string()).into());
    }
    let sketch = request_sketch(label.clone(), &req.strokes)?;
    let response = engine.conceptual_shift(&sketch, novelty)?;
    Ok(Json(ShiftReply::new(
        &response,
        novelty,
        request_id(&label, novelty, &req.strokes),
    )))
}

async fn categories(State(state): State<Arc<AppState>>) -> Result<Json<Value>, ApiError> {
    let engine = state.engine().ok_or_else(not_loaded)?;
    let index = engine.index();
    Ok(Json(json!({
        "categories": index.labels().map(Label::as_str).collect::<Vec<_>>(),
        "k": index.k(),
        "extractor": index.extractor,
    })))
}

async fn healthz(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "index_version": state.engine().map(|_| FORMAT_VERSION),
        "uptime_seconds": state.started.elapsed().as_secs_f64(),
    }))
}
