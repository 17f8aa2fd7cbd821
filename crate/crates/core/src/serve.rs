//! JSON-over-HTTP access to one immutable fitted model.
//!
//! `GET /api/meta` describes the model, `POST /api/predict` scores up to
//! [`MAX_PROFILES`] patient profiles on a horizon grid, `GET /healthz` is a
//! liveness probe, and any other path falls through to an optional directory
//! of static files. The handlers are plain functions of `(model, request)` and
//! are usable without a running server.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::data::{CovariateEntry, FieldError, PatientProfile};
use crate::error::{Error, Result};
use crate::estimator::{FittedModel, MODEL_FORMAT_VERSION};
use crate::evaluation::{effect_trajectory, predict_encoded, EffectTrajectory, Prediction, RangePolicy};

pub const MAX_PROFILES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRange {
    pub l_min: f64,
    pub l_max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Meta {
    pub format_version: u32,
    pub link: &'static str,
    pub grid: GridRange,
    pub covariates: Vec<CovariateEntry>,
    /// Columns of the encoded design, intercept excluded.
    pub design_columns: Vec<String>,
    pub max_profiles: usize,
}

pub fn handle_meta(model: &FittedModel) -> Meta {
    Meta {
        format_version: MODEL_FORMAT_VERSION,
        link: model.link.name(),
        grid: GridRange { l_min: model.grid.min(), l_max: model.grid.max(), points: model.grid.len() },
        covariates: model.schema.entries().to_vec(),
        design_columns: model.schema.design_names().to_vec(),
        max_profiles: MAX_PROFILES,
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRequest {
    pub profiles: Vec<PatientProfile>,
    pub grid: Vec<f64>,
    /// Also return every design column's cumulative-effect trajectory.
    #[serde(default)]
    pub effects: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfilePrediction {
    pub profile: usize,
    pub points: Vec<Prediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictResponse {
    pub predictions: Vec<ProfilePrediction>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub effects: Option<Vec<EffectTrajectory>>,
}

/// A rejected request: HTTP status plus field-level messages.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub error: String,
    pub fields: Vec<FieldError>,
}

impl ApiError {
    fn bad_request(error: impl Into<String>, fields: Vec<FieldError>) -> Self {
        Self { status: 400, error: error.into(), fields }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::BAD_REQUEST);
        (status, Json(self)).into_response()
    }
}

pub fn handle_predict(model: &FittedModel, request: &PredictRequest) -> std::result::Result<PredictResponse, ApiError> {
    if request.profiles.len() > MAX_PROFILES {
        return Err(ApiError {
            status: 413,
            error: format!("at most {MAX_PROFILES} profiles per request, got {}", request.profiles.len()),
            fields: vec![],
        });
    }
    let mut fields = Vec::new();
    if request.profiles.is_empty() {
        fields.push(FieldError { field: "profiles".into(), message: "at least one profile is required".into() });
    }
    if request.grid.is_empty() {
        fields.push(FieldError { field: "grid".into(), message: "at least one horizon is required".into() });
    }
    let (lo, hi) = (model.grid.min(), model.grid.max());
    for (i, &l) in request.grid.iter().enumerate() {
        if !(l.is_finite() && l >= lo && l <= hi) {
            fields.push(FieldError {
                field: format!("grid[{i}]"),
                message: format!("horizon {l} is outside the model range [{lo}, {hi}]"),
            });
        }
    }
    let mut designs = Vec::with_capacity(request.profiles.len());
    for (i, profile) in request.profiles.iter().enumerate() {
        match model.schema.encode_profile(profile) {
            Ok(z) => designs.push(z),
            Err(e) => fields.push(FieldError { field: format!("profiles[{i}].{}", e.field), message: e.message }),
        }
    }
    if !fields.is_empty() {
        return Err(ApiError::bad_request("invalid prediction request", fields));
    }

    let internal = |e: Error| ApiError { status: 500, error: e.to_string(), fields: vec![] };
    let predictions = designs
        .iter()
        .enumerate()
        .map(|(i, z)| {
            let points = request
                .grid
                .iter()
                .map(|&l| predict_encoded(model, z, l, RangePolicy::Strict))
                .collect::<Result<Vec<_>>>()
                .map_err(internal)?;
            Ok(ProfilePrediction { profile: i, points })
        })
        .collect::<std::result::Result<Vec<_>, ApiError>>()?;
    let effects = if request.effects {
        let names = std::iter::once("(Intercept)".to_string()).chain(model.schema.design_names().iter().cloned());
        Some(
            names
                .map(|name| effect_trajectory(model, &name, &request.grid, RangePolicy::Strict))
                .collect::<Result<Vec<_>>>()
                .map_err(internal)?,
        )
    } else {
        None
    };
    Ok(PredictResponse { predictions, effects })
}

async fn meta_route(State(model): State<Arc<FittedModel>>) -> Json<Meta> {
    Json(handle_meta(&model))
}

async fn predict_route(State(model): State<Arc<FittedModel>>, body: Bytes) -> Response {
    let request: PredictRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return ApiError::bad_request(format!("malformed request body: {e}"), vec![]).into_response(),
    };
    match handle_predict(&model, &request) {
        Ok(resp) => Json(resp).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn health_route() -> &'static str {
    "ok"
}

/// Routes over a shared model, with `static_dir` served for unmatched paths.
pub fn router(model: Arc<FittedModel>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/meta", get(meta_route))
        .route("/api/predict", post(predict_route))
        .route("/healthz", get(health_route))
        .with_state(model);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServeConfig {
    pub model_path: PathBuf,
    pub static_dir: Option<PathBuf>,
    pub port: u16,
}

/// Read the model once; an empty path or unreadable file is a configuration error.
pub fn load_model(path: &Path) -> Result<FittedModel> {
    if path.as_os_str().is_empty() {
        return Err(Error::InvalidInput("a model path is required to start the service".into()));
    }
    FittedModel::from_json(&std::fs::read_to_string(path)?)
}

/// Bind `127.0.0.1:port` and serve until interrupted.
pub async fn serve(config: ServeConfig) -> Result<()> {
    let model = Arc::new(load_model(&config.model_path)?);
    if let Some(dir) = &config.static_dir {
        if !dir.is_dir() {
            return Err(Error::InvalidInput(format!("static directory {} does not exist", dir.display())));
        }
    }
    let app = router(model, config.static_dir.as_deref());
    let listener = tokio::net::TcpListener::bind(SocketAddr::from(([127, 0, 0, 1], config.port))).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
