//! HTTP API over a loaded model: structure, runs and sensitivity sweeps.
//!
//! The model is immutable after load and requests carry their own overrides,
//! so handlers share nothing mutable.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use mtair_core::io::report::decode_override;
use mtair_core::{
    build_run_report, build_sensitivity_run, model_structure, serialize_report, to_canonical_json, CompiledModel, Error,
    ModelGraph, RunRequest, SensitivityRequest, ValueKind, ENGINE_VERSION,
};
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use tower_http::cors::CorsLayer;

pub const DEFAULT_SAMPLE_CAP: u64 = 200_000;
pub const DEFAULT_SAMPLES: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServerConfig {
    pub max_samples: u64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            max_samples: DEFAULT_SAMPLE_CAP,
        }
    }
}

#[derive(Clone)]
struct AppState {
    model: Arc<CompiledModel>,
    /// Serialized once; the model never changes.
    structure: Arc<String>,
    config: ServerConfig,
}

pub fn app(model: CompiledModel) -> Router {
    app_with(model, ServerConfig::default())
}

pub fn app_with(model: CompiledModel, config: ServerConfig) -> Router {
    let structure = to_canonical_json(&model_structure(model.graph()));
    let state = AppState {
        model: Arc::new(model),
        structure: Arc::new(structure),
        config,
    };
    Router::new()
        .route("/api/model", get(get_model))
        .route("/api/run", post(post_run))
        .route("/api/sensitivity", post(post_sensitivity))
        .route("/api/health", get(get_health))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Binds `addr` and serves until the process exits.
pub async fn serve(model: CompiledModel, config: ServerConfig, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, app_with(model, config)).await
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>, field: Option<String>) -> Self {
        ApiError {
            status: status.as_u16(),
            code: code.to_string(),
            message: message.into(),
            field,
        }
    }

    fn from_core(e: &Error, field: Option<String>) -> Self {
        let status = match e {
            Error::NodeNotFound(_) | Error::KindMismatch(_) | Error::TargetNotBool(_) | Error::UnknownPreset(_) => {
                StatusCode::BAD_REQUEST
            }
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self::new(status, e.code(), e.to_string(), field)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let body = to_canonical_json(&serde_json::json!({ "error": self }));
        (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
    }
}

fn json_body(text: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], text).into_response()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunBody {
    #[serde(default)]
    overrides: BTreeMap<String, Json>,
    #[serde(default)]
    preset: Option<String>,
    #[serde(default = "default_samples")]
    samples: u64,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    targets: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SensitivityBody {
    target: String,
    #[serde(default)]
    cruxes: Option<Vec<String>>,
    #[serde(default)]
    overrides: BTreeMap<String, Json>,
    #[serde(default)]
    preset: Option<String>,
    #[serde(default = "default_samples")]
    samples: u64,
    #[serde(default)]
    seed: u64,
}

fn default_samples() -> u64 {
    DEFAULT_SAMPLES
}

fn parse_body<T: for<'de> Deserialize<'de>>(bytes: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| {
        let msg = e.to_string();
        // serde names the offending field in backticks for unknown and missing fields.
        let field = msg.split('`').nth(1).map(str::to_string);
        ApiError::new(StatusCode::BAD_REQUEST, "BAD_REQUEST", msg, field)
    })
}

fn check_samples(samples: u64, cap: u64) -> Result<(), ApiError> {
    let field = Some("samples".to_string());
    if samples == 0 {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "INVALID_SAMPLES", "samples must be at least 1", field));
    }
    if samples > cap {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "SAMPLES_OVER_CAP",
            format!("samples {samples} exceeds the server cap of {cap}"),
            field,
        ));
    }
    Ok(())
}

/// Checks the preset and every override so errors name the offending field.
fn check_overrides(graph: &ModelGraph, preset: Option<&str>, overrides: &BTreeMap<String, Json>) -> Result<(), ApiError> {
    if let Some(name) = preset {
        if !graph.presets.contains_key(name) {
            return Err(ApiError::from_core(&Error::UnknownPreset(name.into()), Some("preset".into())));
        }
    }
    for (raw, literal) in overrides {
        decode_override(graph, raw, literal).map_err(|e| ApiError::from_core(&e, Some(format!("overrides.{raw}"))))?;
    }
    Ok(())
}

fn unknown_target(raw: &str, field: &str) -> ApiError {
    ApiError::from_core(&Error::NodeNotFound(raw.into()), Some(field.into())).with_status(StatusCode::NOT_FOUND)
}

impl ApiError {
    fn with_status(mut self, status: StatusCode) -> Self {
        self.status = status.as_u16();
        self
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, Error> + Send + 'static) -> Result<T, ApiError> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(|e| ApiError::from_core(&e, None)),
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", e.to_string(), None)),
    }
}

async fn get_model(State(state): State<AppState>) -> Response {
    json_body(state.structure.as_str().to_owned())
}

async fn get_health() -> Response {
    json_body(to_canonical_json(&serde_json::json!({ "status": "ok", "engine_version": ENGINE_VERSION })))
}

async fn post_run(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let body: RunBody = parse_body(&body)?;
    let graph = state.model.graph();
    check_samples(body.samples, state.config.max_samples)?;
    check_overrides(graph, body.preset.as_deref(), &body.overrides)?;
    for t in body.targets.iter().flatten() {
        if graph.node_by_str(t).is_none() {
            return Err(unknown_target(t, "targets"));
        }
    }
    let request = RunRequest {
        samples: body.samples,
        seed: body.seed,
        preset: body.preset,
        overrides: body.overrides,
        targets: body.targets,
    };
    let model = state.model.clone();
    let report = blocking(move || build_run_report(&model, &request)).await?;
    Ok(json_body(serialize_report(&report)))
}

async fn post_sensitivity(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let body: SensitivityBody = parse_body(&body)?;
    let graph = state.model.graph();
    check_samples(body.samples, state.config.max_samples)?;
    match graph.node_by_str(&body.target) {
        None => return Err(unknown_target(&body.target, "target")),
        Some(n) if n.value_kind != ValueKind::Bool => {
            return Err(ApiError::from_core(&Error::TargetNotBool(body.target.clone()), Some("target".into())))
        }
        Some(_) => {}
    }
    for c in body.cruxes.iter().flatten() {
        match graph.node_by_str(c).map(|n| &n.value_kind) {
            None => return Err(ApiError::from_core(&Error::NodeNotFound(c.clone()), Some("cruxes".into()))),
            Some(ValueKind::Bool | ValueKind::Category { .. }) => {}
            Some(k) => {
                let e = Error::KindMismatch(format!("crux `{c}` must be bool or category, got {}", k.tag()));
                return Err(ApiError::from_core(&e, Some("cruxes".into())));
            }
        }
    }
    check_overrides(graph, body.preset.as_deref(), &body.overrides)?;
    let request = SensitivityRequest {
        target: body.target,
        cruxes: body.cruxes,
        samples: body.samples,
        seed: body.seed,
        preset: body.preset,
        overrides: body.overrides,
    };
    let model = state.model.clone();
    let run = blocking(move || build_sensitivity_run(&model, &request)).await?;
    Ok(json_body(to_canonical_json(&run)))
}
