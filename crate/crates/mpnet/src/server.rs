//! HTTP JSON service over a directory of saved pipelines.
//!
//! | Route            | Body                  | Reply                      |
//! |------------------|-----------------------|----------------------------|
//! | `GET /materials` |                       | `[MaterialInfo]`           |
//! | `GET /models`    |                       | `[ModelInfo]`              |
//! | `POST /predict`  | `PredictRequest`      | `PredictResponse`          |
//! | `POST /processmap` | `ProcessMapRequest` | `{grid, p_axis, v_axis}`   |
//! | `POST /reload`   |                       | `{models, skipped}`        |
//!
//! Malformed bodies get 400, unknown models or materials 404.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use anyhow::Context;
use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use meltpoolnet::materials::Registry;
use meltpoolnet::pipeline::{decision_boundary_grid, Pipeline};
use serde::Serialize;

use crate::api::{self, ErrorBody, ModelInfo, PredictRequest, ProcessMapRequest, MAX_RESOLUTION};

pub type Models = BTreeMap<String, Arc<Pipeline>>;

#[derive(Debug, Default, Serialize)]
pub struct LoadReport {
    pub models: Vec<String>,
    /// Name and reason for each model left out.
    pub skipped: Vec<(String, String)>,
}

/// Reads every `*.json` pipeline in `dir`, keyed by file stem. Models that
/// cannot be served are skipped; unreadable files fail the whole load.
pub fn load_models(dir: &Path) -> anyhow::Result<(Models, LoadReport)> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut models = Models::new();
    let mut report = LoadReport::default();
    for p in paths {
        let name = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let pipeline = Pipeline::load(&p).with_context(|| format!("loading model {}", p.display()))?;
        match api::check_servable(&pipeline) {
            Ok(()) => {
                report.models.push(name.clone());
                models.insert(name, Arc::new(pipeline));
            }
            Err(why) => {
                log::warn!("not serving {name}: {why}");
                report.skipped.push((name, why));
            }
        }
    }
    Ok((models, report))
}

/// Immutable model snapshot behind an atomically swapped pointer.
pub struct ModelStore {
    dir: Option<PathBuf>,
    current: RwLock<Arc<Models>>,
}

impl ModelStore {
    pub fn from_dir(dir: impl Into<PathBuf>) -> anyhow::Result<(ModelStore, LoadReport)> {
        let dir = dir.into();
        let (models, report) = load_models(&dir)?;
        Ok((
            ModelStore {
                dir: Some(dir),
                current: RwLock::new(Arc::new(models)),
            },
            report,
        ))
    }

    /// A fixed set of models; `/reload` is refused.
    pub fn fixed(models: Models) -> ModelStore {
        ModelStore {
            dir: None,
            current: RwLock::new(Arc::new(models)),
        }
    }

    pub fn snapshot(&self) -> Arc<Models> {
        self.current.read().expect("model lock").clone()
    }

    pub fn reload(&self) -> anyhow::Result<LoadReport> {
        let dir = self.dir.as_ref().context("this server was started without a model directory")?;
        let (models, report) = load_models(dir)?;
        *self.current.write().expect("model lock") = Arc::new(models);
        Ok(report)
    }
}

#[derive(Clone)]
pub struct AppState {
    pub registry: Arc<Registry>,
    pub store: Arc<ModelStore>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: self.message })).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(r.status(), r.body_text())
    }
}

impl From<meltpoolnet::Error> for ApiError {
    fn from(e: meltpoolnet::Error) -> Self {
        use meltpoolnet::Error as E;
        let status = match &e {
            E::UnknownMaterial { .. } => StatusCode::NOT_FOUND,
            E::FeatureAvailability(_)
            | E::MissingThermal(_)
            | E::Coverage { .. }
            | E::Domain(_)
            | E::Argument(_)
            | E::Encoding { .. }
            | E::Kind(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn model(models: &Models, name: &str) -> Result<Arc<Pipeline>, ApiError> {
    models
        .get(name)
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown model `{name}`")))
}

async fn get_materials(State(s): State<AppState>) -> Json<Vec<api::MaterialInfo>> {
    Json(api::materials(&s.registry))
}

async fn get_models(State(s): State<AppState>) -> Json<Vec<ModelInfo>> {
    let models = s.store.snapshot();
    Json(models.iter().map(|(n, p)| ModelInfo::of(n, p)).collect())
}

async fn post_predict(
    State(s): State<AppState>,
    body: Result<Json<serde_json::Value>, JsonRejection>,
) -> ApiResult<api::PredictResponse> {
    let Json(value) = body?;
    let req = PredictRequest::from_value(value).map_err(|m| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, m))?;
    for (name, v) in [("power_w", req.input.power_w), ("velocity_m_s", req.input.velocity_m_s)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(ApiError::bad_request(format!("{name}: must be > 0, got {v}")));
        }
    }
    let pipeline = model(&s.store.snapshot(), &req.model)?;
    s.registry.lookup_material(&req.input.material)?;
    Ok(Json(api::predict(&pipeline, &req.input, &s.registry)?))
}

async fn post_processmap(
    State(s): State<AppState>,
    body: Result<Json<ProcessMapRequest>, JsonRejection>,
) -> ApiResult<api::ProcessMapResponse> {
    let Json(req) = body?;
    if req.resolution == 0 || req.resolution > MAX_RESOLUTION {
        return Err(ApiError::bad_request(format!(
            "resolution: must lie in 1..={MAX_RESOLUTION}, got {}",
            req.resolution
        )));
    }
    let pipeline = model(&s.store.snapshot(), &req.model)?;
    s.registry.lookup_material(&req.material)?;
    let registry = s.registry.clone();
    let map = tokio::task::spawn_blocking(move || {
        decision_boundary_grid(
            &pipeline,
            &req.base_record(),
            &registry,
            (req.p_range[0], req.p_range[1]),
            (req.v_range[0], req.v_range[1]),
            req.resolution,
        )
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(map))
}

async fn post_reload(State(s): State<AppState>) -> ApiResult<LoadReport> {
    let store = s.store.clone();
    let report = tokio::task::spawn_blocking(move || store.reload())
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("{e:#}")))?;
    Ok(Json(report))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/materials", get(get_materials))
        .route("/models", get(get_models))
        .route("/predict", post(post_predict))
        .route("/processmap", post(post_processmap))
        .route("/reload", post(post_reload))
        .with_state(state)
}

pub async fn serve(state: AppState, addr: SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}
