//! HTTP front end: upload models, launch runs, poll them and fetch archives.
//!
//! Routes (JSON in, JSON out):
//!
//! | method | path                 | success |
//! |--------|----------------------|---------|
//! | GET    | `/health`            | 200     |
//! | POST   | `/models`            | 201     |
//! | GET    | `/models/{id}`       | 200     |
//! | POST   | `/models/{id}/runs`  | 202     |
//! | GET    | `/runs/{id}`         | 200     |
//! | GET    | `/runs/{id}/archive` | 200     |
//!
//! Runs wait in `pending` until one of `workers` slots is free.

mod runs;

use std::collections::HashMap;
use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use boxfront_core::boxalgo::RunConfig;
use boxfront_core::domain::{inconsistent_bounds, validate_model, ModelSpec, Objective, ObjectiveBound, Violation};
use boxfront_core::ingest::{self, ModelSources, Source};
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

pub use runs::{RunHandle, RunState};
use runs::RunEntry;

/// Settings read from the environment or the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    pub workers: usize,
    pub persist: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { bind: SocketAddr::from(([127, 0, 0, 1], 8080)), workers: 2, persist: None }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{var}: {message}")]
    Env { var: &'static str, message: String },
}

impl ServiceConfig {
    /// `BOXFRONT_BIND`, `BOXFRONT_WORKERS` and `BOXFRONT_PERSIST_DIR`, each
    /// falling back to the default when unset.
    pub fn from_env() -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        if let Ok(v) = std::env::var("BOXFRONT_BIND") {
            cfg.bind = v.parse().map_err(|e: std::net::AddrParseError| ConfigError::Env {
                var: "BOXFRONT_BIND",
                message: e.to_string(),
            })?;
        }
        if let Ok(v) = std::env::var("BOXFRONT_WORKERS") {
            cfg.workers = match v.parse::<usize>() {
                Ok(n) if n > 0 => n,
                _ => {
                    return Err(ConfigError::Env {
                        var: "BOXFRONT_WORKERS",
                        message: format!("expected a positive integer, got `{v}`"),
                    })
                }
            };
        }
        if let Ok(v) = std::env::var("BOXFRONT_PERSIST_DIR") {
            if !v.is_empty() {
                cfg.persist = Some(PathBuf::from(v));
            }
        }
        Ok(cfg)
    }
}

struct StoredModel {
    spec: ModelSpec,
    notes: Vec<String>,
}

pub struct AppState {
    models: RwLock<HashMap<String, Arc<StoredModel>>>,
    runs: RwLock<HashMap<String, Arc<RunEntry>>>,
    slots: Arc<Semaphore>,
    persist: Option<PathBuf>,
}

impl AppState {
    pub fn new(workers: usize, persist: Option<PathBuf>) -> Arc<Self> {
        Arc::new(Self {
            models: RwLock::new(HashMap::new()),
            runs: RwLock::new(HashMap::new()),
            slots: Arc::new(Semaphore::new(workers.max(1))),
            persist,
        })
    }
}

/// Error body: `{"error": kind, "message": ..., "violations": [...]}`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
}

fn error(status: StatusCode, kind: &str, message: impl Into<String>, violations: Vec<Violation>) -> Response {
    (status, Json(ApiError { error: kind.into(), message: message.into(), violations })).into_response()
}

fn new_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

/// Model upload. Texts use the same formats as the files read by the CLI.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelUpload {
    pub assets_csv: String,
    #[serde(default)]
    pub correlation_csv: Option<String>,
    #[serde(default)]
    pub calibration_toml: Option<String>,
    #[serde(default)]
    pub reference_csv: Option<String>,
    #[serde(default)]
    pub constraints_toml: Option<String>,
}

impl ModelUpload {
    pub fn sources(&self) -> ModelSources {
        let src = |name: &str, t: &Option<String>| t.as_ref().map(|t| Source::new(name, t.clone()));
        ModelSources {
            assets: Source::new("assets_csv", self.assets_csv.clone()),
            correlation: src("correlation_csv", &self.correlation_csv),
            calibration: src("calibration_toml", &self.calibration_toml),
            reference: src("reference_csv", &self.reference_csv),
            constraints: src("constraints_toml", &self.constraints_toml),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSummary {
    pub id: String,
    pub model_hash: String,
    pub assets: Vec<String>,
    pub objectives: Vec<Objective>,
    pub notes: Vec<String>,
    pub spec: ModelSpec,
}

fn summary(id: &str, m: &StoredModel) -> ModelSummary {
    ModelSummary {
        id: id.to_string(),
        model_hash: ingest::model_hash(&m.spec),
        assets: m.spec.universe.names.clone(),
        objectives: m.spec.active_objectives.clone(),
        notes: m.notes.clone(),
        spec: m.spec.clone(),
    }
}

async fn create_model(State(st): State<Arc<AppState>>, body: Result<Json<ModelUpload>, axum::extract::rejection::JsonRejection>) -> Response {
    let Json(upload) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, "bad_request", e.body_text(), Vec::new()),
    };
    match ingest::load_model(&upload.sources()) {
        Ok(loaded) => {
            let id = new_id();
            let stored = Arc::new(StoredModel { spec: loaded.spec, notes: loaded.notes });
            let body = summary(&id, &stored);
            st.models.write().unwrap().insert(id, stored);
            (StatusCode::CREATED, Json(body)).into_response()
        }
        Err(e) => {
            let violations = e.violations().to_vec();
            let kind = if violations.is_empty() { "parse_error" } else { "invalid_model" };
            error(StatusCode::BAD_REQUEST, kind, e.to_string(), violations)
        }
    }
}

async fn get_model(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    match st.models.read().unwrap().get(&id) {
        Some(m) => Json(summary(&id, m)).into_response(),
        None => error(StatusCode::NOT_FOUND, "not_found", format!("no model `{id}`"), Vec::new()),
    }
}

/// Run launch. `bounds` are added to the model's own bounds; `objectives`
/// replaces its active set.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRequest {
    #[serde(default)]
    pub config: RunConfig,
    #[serde(default)]
    pub bounds: Vec<ObjectiveBound>,
    #[serde(default)]
    pub objectives: Option<Vec<Objective>>,
}

async fn create_run(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<RunRequest>, axum::extract::rejection::JsonRejection>,
) -> Response {
    let Some(model) = st.models.read().unwrap().get(&id).cloned() else {
        return error(StatusCode::NOT_FOUND, "not_found", format!("no model `{id}`"), Vec::new());
    };
    let Json(req) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, "bad_request", e.body_text(), Vec::new()),
    };
    let mut spec = model.spec.with_bounds(&req.bounds);
    if let Some(msg) = inconsistent_bounds(&spec.objective_bounds) {
        return error(StatusCode::CONFLICT, "inconsistent_bounds", msg, Vec::new());
    }
    if let Some(o) = &req.objectives {
        spec = spec.with_objectives(o);
        let violations = validate_model(&spec);
        if !violations.is_empty() {
            return error(StatusCode::BAD_REQUEST, "invalid_model", "objective selection rejected", violations);
        }
    }
    if let Err(e) = req.config.validate() {
        return error(StatusCode::BAD_REQUEST, "invalid_config", e.to_string(), Vec::new());
    }
    let entry = Arc::new(RunEntry::new(new_id(), id, spec, req.config));
    st.runs.write().unwrap().insert(entry.id.clone(), entry.clone());
    runs::launch(st.clone(), entry.clone());
    (StatusCode::ACCEPTED, Json(entry.handle())).into_response()
}

fn find_run(st: &AppState, id: &str) -> Option<Arc<RunEntry>> {
    st.runs.read().unwrap().get(id).cloned()
}

async fn get_run(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    match find_run(&st, &id) {
        Some(r) => Json(r.handle()).into_response(),
        None => error(StatusCode::NOT_FOUND, "not_found", format!("no run `{id}`"), Vec::new()),
    }
}

async fn get_archive(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    match find_run(&st, &id) {
        Some(r) => ([(header::CONTENT_TYPE, "application/json")], r.artifact().to_json()).into_response(),
        None => error(StatusCode::NOT_FOUND, "not_found", format!("no run `{id}`"), Vec::new()),
    }
}

async fn health() -> &'static str {
    "ok"
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/models", post(create_model))
        .route("/models/{id}", get(get_model))
        .route("/models/{id}/runs", post(create_run))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/archive", get(get_archive))
        .with_state(state)
}

/// Binds `cfg.bind` and serves until `shutdown` resolves.
pub async fn serve(cfg: ServiceConfig, shutdown: impl Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
    if let Some(dir) = &cfg.persist {
        tokio::fs::create_dir_all(dir).await?;
    }
    let listener = tokio::net::TcpListener::bind(cfg.bind).await?;
    log::info!("listening on {} with {} workers", listener.local_addr()?, cfg.workers);
    let app = router(AppState::new(cfg.workers, cfg.persist));
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await
}

/// Resolves on Ctrl-C or, on Unix, SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    log::info!("shutting down");
}
