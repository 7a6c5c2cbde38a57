//! Minimal HTTP submission service.
//!
//! `POST /submissions` validates, scores against the hidden reference,
//! persists and returns the report; `GET /leaderboard` and
//! `GET /submissions/{id}` read the store. Every body is JSON.

use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};

use glossbench_core::dataset::load_dataset;
use glossbench_core::Dataset;

use crate::leaderboard::build_leaderboard;
use crate::score::{MetricsConfig, Scorer};
use crate::store::Store;
use crate::submission::Submission;
use crate::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub reference_path: PathBuf,
    pub store_path: PathBuf,
    #[serde(default = "default_bind")]
    pub bind: String,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}

impl ServiceConfig {
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Ok(serde_json::from_str(&crate::read_file(path)?)?)
    }
}

pub struct AppState {
    reference: Dataset,
    scorer: Scorer,
    store: Mutex<Store>,
}

impl AppState {
    pub fn new(reference: Dataset, scorer: Scorer, store: Store) -> Self {
        Self {
            reference,
            scorer,
            store: Mutex::new(store),
        }
    }

    pub fn from_config(cfg: &ServiceConfig) -> Result<Self> {
        let reference = load_dataset(&cfg.reference_path)?;
        let scorer = Scorer::new(cfg.metrics.clone())?;
        let store = Store::open(&cfg.store_path)?;
        Ok(Self::new(reference, scorer, store))
    }
}

fn json(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn error(status: StatusCode, msg: impl std::fmt::Display) -> Response {
    json(status, serde_json::json!({ "error": msg.to_string() }).to_string())
}

fn lock(state: &AppState) -> std::sync::MutexGuard<'_, Store> {
    state.store.lock().unwrap_or_else(|p| p.into_inner())
}

async fn post_submission(State(state): State<Arc<AppState>>, body: String) -> Response {
    let sub = match Submission::from_json_str(&body) {
        Ok(s) => s,
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    if lock(&state).contains(&sub.id) {
        return error(StatusCode::CONFLICT, format!("submission \"{}\" already exists", sub.id));
    }
    let worker = Arc::clone(&state);
    let scored = tokio::task::spawn_blocking(move || {
        let report = worker.scorer.score(&sub, &worker.reference);
        (sub, report)
    })
    .await;
    let (sub, report) = match scored {
        Ok((sub, Ok(report))) => (sub, report),
        Ok((_, Err(HarnessError::InvalidSubmission(v)))) => return json(StatusCode::BAD_REQUEST, v.to_json()),
        Ok((_, Err(e))) => return error(StatusCode::BAD_REQUEST, e),
        Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, e),
    };
    let body = report.to_json();
    match lock(&state).append(sub, report) {
        Ok(_) => json(StatusCode::OK, body),
        Err(e @ HarnessError::Duplicate(_)) => error(StatusCode::CONFLICT, e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn get_leaderboard(State(state): State<Arc<AppState>>) -> Response {
    let reports = lock(&state).reports();
    json(StatusCode::OK, build_leaderboard(&reports).to_json())
}

async fn get_submission(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Response {
    match lock(&state).get(&id) {
        Some(rec) => json(StatusCode::OK, rec.report.to_json()),
        None => error(StatusCode::NOT_FOUND, format!("no submission \"{id}\"")),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/submissions", post(post_submission))
        .route("/submissions/{id}", get(get_submission))
        .route("/leaderboard", get(get_leaderboard))
        .with_state(state)
}

/// Runs the service until the process is stopped.
pub async fn serve(cfg: ServiceConfig) -> anyhow::Result<()> {
    let state = Arc::new(AppState::from_config(&cfg)?);
    let listener = tokio::net::TcpListener::bind(&cfg.bind).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}
