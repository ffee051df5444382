//! HTTP API for annotation frontends.
//!
//! ```text
//! GET  /campaigns/{id}/next?annotator=ID   next unlabelled assigned item
//! POST /campaigns/{id}/labels              store one label
//! GET  /campaigns/{id}/progress            per-annotator counts
//! GET  /campaigns/{id}/report              current report (warns if partial)
//! ```

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{
    progress, AnnotateError, AnnotationRecord, Campaign, ConsensusRule, IncompletePolicy, ItemView,
    Label, LabelStore, Report,
};

pub struct CampaignEntry {
    pub campaign: Campaign,
    pub store: LabelStore,
}

#[derive(Clone)]
pub struct AppState {
    campaigns: Arc<BTreeMap<String, Arc<CampaignEntry>>>,
    rule: ConsensusRule,
}

impl AppState {
    pub fn new(entries: Vec<CampaignEntry>, rule: ConsensusRule) -> AppState {
        AppState {
            campaigns: Arc::new(
                entries
                    .into_iter()
                    .map(|e| (e.campaign.campaign_id.clone(), Arc::new(e)))
                    .collect(),
            ),
            rule,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
    pub message: String,
}

struct Failure(StatusCode, ApiError);

impl Failure {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Failure {
        Failure(status, ApiError { error: code.into(), message: message.into() })
    }
}

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

impl From<AnnotateError> for Failure {
    fn from(e: AnnotateError) -> Failure {
        let (status, code) = match &e {
            AnnotateError::DuplicateLabel { .. } => (StatusCode::CONFLICT, "DUPLICATE_LABEL"),
            AnnotateError::UnassignedItem { .. } => (StatusCode::FORBIDDEN, "UNASSIGNED_ITEM"),
            AnnotateError::UnknownItem(_) => (StatusCode::NOT_FOUND, "UNKNOWN_ITEM"),
            AnnotateError::LabelKindMismatch(_) => (StatusCode::UNPROCESSABLE_ENTITY, "LABEL_KIND_MISMATCH"),
            AnnotateError::IncompleteCampaign { .. } => (StatusCode::CONFLICT, "INCOMPLETE_CAMPAIGN"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL"),
        };
        Failure::new(status, code, e.to_string())
    }
}

fn entry(state: &AppState, id: &str) -> Result<Arc<CampaignEntry>, Failure> {
    state
        .campaigns
        .get(id)
        .cloned()
        .ok_or_else(|| Failure::new(StatusCode::NOT_FOUND, "UNKNOWN_CAMPAIGN", format!("no campaign {id}")))
}

#[derive(Debug, Deserialize)]
pub struct NextQuery {
    pub annotator: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NextResponse {
    pub done: bool,
    pub remaining: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub item: Option<ItemView>,
}

/// Body of `POST /labels`. The server stamps the time when none is given.
#[derive(Debug, Serialize, Deserialize)]
pub struct LabelSubmission {
    pub item_id: String,
    pub annotator_id: String,
    pub label: Label,
    #[serde(default)]
    pub timestamp: Option<DateTime<Utc>>,
}

async fn next_item(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<NextQuery>,
) -> Result<Json<NextResponse>, Failure> {
    let e = entry(&state, &id)?;
    if !e.campaign.annotators.contains(&q.annotator) {
        return Err(Failure::new(
            StatusCode::NOT_FOUND,
            "UNKNOWN_ANNOTATOR",
            format!("{} is not an annotator of {id}", q.annotator),
        ));
    }
    let records = e.store.records();
    let pending: Vec<&str> = e
        .campaign
        .assigned(&q.annotator)
        .into_iter()
        .filter(|item| !records.iter().any(|r| r.annotator_id == q.annotator && r.item_id == *item))
        .collect();
    let item = pending.first().and_then(|i| e.campaign.item(i)).map(|i| i.view());
    Ok(Json(NextResponse { done: pending.is_empty(), remaining: pending.len(), item }))
}

async fn post_label(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(sub): Json<LabelSubmission>,
) -> Result<(StatusCode, Json<AnnotationRecord>), Failure> {
    let e = entry(&state, &id)?;
    let rec = AnnotationRecord {
        item_id: sub.item_id,
        annotator_id: sub.annotator_id,
        label: sub.label,
        timestamp: sub.timestamp.unwrap_or_else(Utc::now),
    };
    let stored = rec.clone();
    tokio::task::spawn_blocking(move || e.store.record_label(&e.campaign, rec))
        .await
        .map_err(|err| Failure::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", err.to_string()))??;
    Ok((StatusCode::CREATED, Json(stored)))
}

async fn get_progress(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<super::Progress>, Failure> {
    let e = entry(&state, &id)?;
    Ok(Json(progress(&e.campaign, &e.store.records())))
}

async fn get_report(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Report>, Failure> {
    let e = entry(&state, &id)?;
    let report = Report::build(&e.campaign, &e.store.records(), state.rule, IncompletePolicy::Warn)?;
    Ok(Json(report))
}

/// API routes, plus static files from `ui_dir` for every other path.
pub fn router(state: AppState, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/campaigns/{id}/next", get(next_item))
        .route("/campaigns/{id}/labels", post(post_label))
        .route("/campaigns/{id}/progress", get(get_progress))
        .route("/campaigns/{id}/report", get(get_report))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

/// Serve until Ctrl-C.
pub async fn serve(state: AppState, addr: SocketAddr, ui_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("annotation server listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state, ui_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
