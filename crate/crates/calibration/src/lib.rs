//! HTTP service behind the participant console: environment scenes,
//! playback frames, preference and switch submissions, and the calibrated
//! risk weight and per-participant stubbornness scales.
//!
//! Routes (JSON in and out):
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/environments` | scene summaries |
//! | GET | `/environments/{id}` | one summary |
//! | GET | `/playback/{env}/{option}?step=k` | team position at frame `k` |
//! | POST | `/sessions/{sid}/preferences` | store percentages, return model shares |
//! | POST | `/sessions/{sid}/switch` | store a switch step, return the eta estimate |
//! | GET | `/calibration` | aggregate summary |

pub mod catalog;
pub mod fit;
pub mod store;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cotransport::coordination::{eta_from_switch, CoordinationConfig};
use cotransport::geometry::Environment;
use cotransport::CalibrationError;
use serde::{Deserialize, Serialize};

use crate::catalog::{CatalogEntry, EnvironmentSummary};
use crate::fit::{default_grid, fit_risk_weight, FitTarget, RiskWeightFit};
use crate::store::{SessionRecord, Store, StoreError, SwitchEvent};

/// Percentages must sum to 100 within this many points.
pub const PERCENT_TOLERANCE: f64 = 0.5;

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    /// phi0, risk weight, parameter box, grid and step length used for
    /// model shares and discomfort replay.
    pub coordination: CoordinationConfig,
    /// Environments whose records enter the risk-weight fit.
    pub fit_envs: Vec<String>,
    pub fit_grid: Vec<f64>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            coordination: CoordinationConfig::default(),
            fit_envs: ["env1", "env2", "env3"].map(String::from).to_vec(),
            fit_grid: default_grid(),
        }
    }
}

pub struct AppState {
    pub config: ServiceConfig,
    pub catalog: Vec<CatalogEntry>,
    pub store: Store,
}

impl AppState {
    pub fn new(config: ServiceConfig, envs: Vec<Environment>, store: Store) -> Self {
        Self {
            config,
            catalog: envs.into_iter().map(CatalogEntry::new).collect(),
            store,
        }
    }

    fn entry(&self, id: &str) -> Result<&CatalogEntry, ApiError> {
        self.catalog
            .iter()
            .find(|e| e.id == id)
            .ok_or_else(|| ApiError::NotFound(format!("unknown environment {id:?}")))
    }

    fn option_of(&self, entry: &CatalogEntry, option: u32) -> Result<usize, ApiError> {
        entry
            .option_index(option)
            .ok_or_else(|| ApiError::NotFound(format!("{} has no option {option}", entry.id)))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Range(String),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{0}")]
    Internal(String),
}

#[derive(Serialize, Deserialize)]
pub struct ErrorBody {
    pub kind: String,
    pub error: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind) = match &self {
            ApiError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ApiError::Validation(_) => (StatusCode::UNPROCESSABLE_ENTITY, "validation"),
            ApiError::Range(_) => (StatusCode::RANGE_NOT_SATISFIABLE, "range"),
            ApiError::Calibration(_) => (StatusCode::UNPROCESSABLE_ENTITY, "calibration"),
            ApiError::Store(_) | ApiError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        let body = ErrorBody {
            kind: kind.to_string(),
            error: self.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

type Shared = Arc<AppState>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/environments", get(list_environments))
        .route("/environments/{id}", get(get_environment))
        .route("/playback/{env}/{option}", get(playback))
        .route("/sessions/{sid}/preferences", post(post_preferences))
        .route("/sessions/{sid}/switch", post(post_switch))
        .route("/calibration", get(calibration))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(Arc::new(state))).await
}

/// Runs model computations off the async workers.
async fn blocking<T: Send + 'static>(
    state: &Shared,
    f: impl FnOnce(&AppState) -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    let state = state.clone();
    tokio::task::spawn_blocking(move || f(&state))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn list_environments(State(state): State<Shared>) -> Json<Vec<EnvironmentSummary>> {
    Json(state.catalog.iter().map(CatalogEntry::summary).collect())
}

async fn get_environment(State(state): State<Shared>, Path(id): Path<String>) -> Result<Json<EnvironmentSummary>, ApiError> {
    Ok(Json(state.entry(&id)?.summary()))
}

#[derive(Deserialize)]
pub struct StepQuery {
    pub step: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Frame {
    pub env: String,
    pub option: u32,
    pub step: usize,
    pub last_step: usize,
    pub position: [f64; 2],
}

async fn playback(
    State(state): State<Shared>,
    Path((env, option)): Path<(String, u32)>,
    Query(q): Query<StepQuery>,
) -> Result<Json<Frame>, ApiError> {
    blocking(&state, move |s| {
        let entry = s.entry(&env)?;
        s.option_of(entry, option)?;
        let frames = entry
            .replay(option, &s.config.coordination)
            .ok_or_else(|| ApiError::Internal(format!("{env} option {option} cannot be replayed")))?;
        let last_step = frames.len() - 1;
        let frame = frames
            .get(q.step)
            .ok_or_else(|| ApiError::Range(format!("step {} outside 0..={last_step}", q.step)))?;
        Ok(Json(Frame {
            env,
            option,
            step: q.step,
            last_step,
            position: frame.position,
        }))
    })
    .await
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PreferenceSubmission {
    pub env: String,
    #[serde(default)]
    pub participant: Option<String>,
    /// In label order.
    pub percentages: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PreferenceResponse {
    pub record: SessionRecord,
    /// Model shares in percent, label order.
    pub model: Vec<f64>,
}

async fn post_preferences(
    State(state): State<Shared>,
    Path(sid): Path<String>,
    Json(body): Json<PreferenceSubmission>,
) -> Result<Json<PreferenceResponse>, ApiError> {
    blocking(&state, move |s| {
        let entry = s.entry(&body.env)?;
        let p = &body.percentages;
        if p.len() != entry.options.len() {
            return Err(ApiError::Validation(format!(
                "{} percentages for {} options",
                p.len(),
                entry.options.len()
            )));
        }
        if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(ApiError::Validation("percentages must be finite and non-negative".into()));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 100.0).abs() > PERCENT_TOLERANCE {
            return Err(ApiError::Validation(format!("percentages sum to {sum}, not 100")));
        }
        let model = entry.model(&s.config.coordination).probs.iter().map(|x| 100.0 * x).collect();
        let record = s.store.update(&sid, body.participant.as_deref(), &body.env, |r| {
            r.percentages = Some(body.percentages.clone())
        })?;
        Ok(Json(PreferenceResponse { record, model }))
    })
    .await
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SwitchSubmission {
    pub env: String,
    #[serde(default)]
    pub participant: Option<String>,
    /// Label number of the option shown.
    pub option: u32,
    /// `None` when the participant followed to the end.
    pub step: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchOutcome {
    Estimated,
    ImmediateSwitch,
    FollowedToEnd,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SwitchResponse {
    pub record: SessionRecord,
    pub outcome: SwitchOutcome,
    pub g: Option<f64>,
    pub eta: Option<f64>,
}

async fn post_switch(
    State(state): State<Shared>,
    Path(sid): Path<String>,
    Json(body): Json<SwitchSubmission>,
) -> Result<Json<SwitchResponse>, ApiError> {
    blocking(&state, move |s| {
        let phi0 = s.config.coordination.phi0;
        if !(phi0 > 0.0 && phi0 < 1.0) {
            return Err(CalibrationError::UndefinedEta(phi0).into());
        }
        let entry = s.entry(&body.env)?;
        s.option_of(entry, body.option)?;
        let frames = entry
            .replay(body.option, &s.config.coordination)
            .ok_or_else(|| ApiError::Internal(format!("{} option {} cannot be replayed", body.env, body.option)))?;
        let (outcome, g, eta) = match body.step {
            None => (SwitchOutcome::FollowedToEnd, None, None),
            Some(k) => {
                let frame = frames
                    .get(k)
                    .ok_or_else(|| ApiError::Range(format!("step {k} outside 0..={}", frames.len() - 1)))?;
                match eta_from_switch(frame.g, phi0) {
                    Ok(eta) => (SwitchOutcome::Estimated, Some(frame.g), Some(eta)),
                    Err(CalibrationError::ImmediateSwitch) => (SwitchOutcome::ImmediateSwitch, Some(frame.g), None),
                    Err(e) => return Err(e.into()),
                }
            }
        };
        let event = SwitchEvent {
            option: body.option,
            step: body.step,
            g,
            eta,
        };
        let record = s
            .store
            .update(&sid, body.participant.as_deref(), &body.env, |r| r.record_switch(event))?;
        Ok(Json(SwitchResponse { record, outcome, g, eta }))
    })
    .await
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EnvironmentAggregate {
    pub env: String,
    pub records: usize,
    pub mean_percentages: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EtaEntry {
    pub session_id: String,
    pub participant: String,
    pub env: String,
    pub option: u32,
    pub eta: f64,
}

#[derive(Debug, Serialize)]
pub struct CalibrationSummary {
    pub records: usize,
    pub environments: Vec<EnvironmentAggregate>,
    pub etas: Vec<EtaEntry>,
    /// Absent when no fitting environment has preference records.
    pub risk_weight_fit: Option<RiskWeightFit>,
}

async fn calibration(State(state): State<Shared>) -> Result<Json<CalibrationSummary>, ApiError> {
    blocking(&state, |s| Ok(Json(summarize(s)))).await
}

pub fn summarize(s: &AppState) -> CalibrationSummary {
    let records = s.store.records();
    let mut sums: BTreeMap<&str, (usize, Vec<f64>)> = BTreeMap::new();
    for r in &records {
        if let Some(p) = &r.percentages {
            let e = sums.entry(&r.env_id).or_insert_with(|| (0, vec![0.0; p.len()]));
            e.0 += 1;
            e.1.iter_mut().zip(p).for_each(|(a, b)| *a += b);
        }
    }
    let environments: Vec<EnvironmentAggregate> = sums
        .into_iter()
        .map(|(env, (n, total))| EnvironmentAggregate {
            env: env.to_string(),
            records: n,
            mean_percentages: total.iter().map(|t| t / n as f64).collect(),
        })
        .collect();
    let etas = records
        .iter()
        .flat_map(|r| {
            r.switches.iter().filter_map(|e| {
                e.eta.map(|eta| EtaEntry {
                    session_id: r.session_id.clone(),
                    participant: r.participant.clone(),
                    env: r.env_id.clone(),
                    option: e.option,
                    eta,
                })
            })
        })
        .collect();
    let targets: Vec<FitTarget> = environments
        .iter()
        .filter(|a| s.config.fit_envs.contains(&a.env))
        .filter_map(|a| {
            let entry = s.catalog.iter().find(|e| e.id == a.env)?;
            Some(FitTarget {
                pairs: entry.pairs(),
                human: a.mean_percentages.clone(),
            })
        })
        .collect();
    let cfg = &s.config.coordination;
    CalibrationSummary {
        records: records.len(),
        environments,
        etas,
        risk_weight_fit: fit_risk_weight(&targets, &s.config.fit_grid, &cfg.param_box, cfg.grid_n),
    }
}
