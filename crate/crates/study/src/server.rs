//! HTTP surface. Rater-facing responses only ever mention labels A and B;
//! method names appear solely in the admin tally.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::error::StudyError;
use crate::manifest::StudyManifest;
use crate::tally::{tally, TallyResult};
use crate::votes::{Choice, VoteLog, VoteRecord, VOTE_LOG_FILE};

pub const ADMIN_TOKEN_HEADER: &str = "x-admin-token";

/// A loaded study: immutable manifest plus its serialized vote writer.
#[derive(Debug)]
pub struct Study {
    pub manifest: StudyManifest,
    log: Mutex<VoteLog>,
}

impl Study {
    pub fn new(manifest: StudyManifest, log: VoteLog) -> Self {
        Study {
            manifest,
            log: Mutex::new(log),
        }
    }

    /// Loads `dir/manifest.json` and replays `dir/votes.jsonl`.
    pub fn open(dir: &Path) -> crate::Result<Self> {
        let manifest = StudyManifest::load(dir)?;
        let log = VoteLog::open(&dir.join(VOTE_LOG_FILE))?;
        Ok(Study::new(manifest, log))
    }

    fn log(&self) -> std::sync::MutexGuard<'_, VoteLog> {
        self.log.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    pub fn tally(&self) -> crate::Result<TallyResult> {
        tally(&self.manifest, self.log().votes())
    }

    pub fn record(&self, vote: VoteRecord) -> crate::Result<()> {
        if self.manifest.item(&vote.item_id).is_none() {
            return Err(StudyError::UnknownItem(vote.item_id));
        }
        self.log().append(vote)
    }
}

struct AppState {
    studies: HashMap<String, Arc<Study>>,
    admin_token: String,
}

type Shared = Arc<AppState>;

pub fn router(studies: Vec<Study>, admin_token: String) -> Router {
    let studies = studies
        .into_iter()
        .map(|s| (s.manifest.study_id.clone(), Arc::new(s)))
        .collect();
    Router::new()
        .route("/study/{id}/next", get(next_item))
        .route("/study/{id}/vote", post(vote))
        .route("/study/{id}/tally", get(get_tally))
        .route("/study/{id}/item/{item}/{slot}", get(item_file))
        .with_state(Arc::new(AppState {
            studies,
            admin_token,
        }))
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

impl From<StudyError> for ApiError {
    fn from(e: StudyError) -> Self {
        let status = match e {
            StudyError::UnknownItem(_) => StatusCode::NOT_FOUND,
            StudyError::DuplicateVote { .. } => StatusCode::CONFLICT,
            StudyError::NoVotes => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            log::error!("{e}");
            return ApiError(status, "internal error".into());
        }
        ApiError(status, e.to_string())
    }
}

fn study(state: &AppState, id: &str) -> Result<Arc<Study>, ApiError> {
    state
        .studies
        .get(id)
        .cloned()
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown study `{id}`")))
}

#[derive(Deserialize)]
struct NextQuery {
    rater: String,
}

#[derive(Debug, Serialize)]
struct Progress {
    voted: usize,
    total: usize,
}

#[derive(Debug, Serialize)]
struct NextItem {
    done: bool,
    progress: Progress,
    #[serde(skip_serializing_if = "Option::is_none")]
    item_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    image_url: Option<String>,
    #[serde(rename = "map_A_url", skip_serializing_if = "Option::is_none")]
    map_a_url: Option<String>,
    #[serde(rename = "map_B_url", skip_serializing_if = "Option::is_none")]
    map_b_url: Option<String>,
}

async fn next_item(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<NextQuery>,
) -> Result<Json<NextItem>, ApiError> {
    if q.rater.is_empty() {
        return Err(ApiError(StatusCode::BAD_REQUEST, "rater must not be empty".into()));
    }
    let study = study(&state, &id)?;
    let items = &study.manifest.items;
    let order = study.manifest.rater_order(&q.rater);
    let (next, voted) = {
        let log = study.log();
        let voted = items.iter().filter(|i| log.has_voted(&q.rater, &i.item_id)).count();
        (order.into_iter().find(|&i| !log.has_voted(&q.rater, &items[i].item_id)), voted)
    };
    let progress = Progress {
        voted,
        total: items.len(),
    };
    let url = |item: &str, slot: &str| Some(format!("/study/{id}/item/{item}/{slot}"));
    Ok(Json(match next {
        None => NextItem {
            done: true,
            progress,
            item_id: None,
            image_url: None,
            map_a_url: None,
            map_b_url: None,
        },
        Some(i) => {
            let item = &items[i].item_id;
            NextItem {
                done: false,
                progress,
                item_id: Some(item.clone()),
                image_url: url(item, "image"),
                map_a_url: url(item, "A"),
                map_b_url: url(item, "B"),
            }
        }
    }))
}

#[derive(Deserialize)]
struct VoteRequest {
    rater_id: String,
    item_id: String,
    choice: Choice,
    #[serde(default)]
    session_id: Option<String>,
}

async fn vote(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<VoteRequest>,
) -> Result<impl IntoResponse, ApiError> {
    if req.rater_id.is_empty() {
        return Err(ApiError(StatusCode::BAD_REQUEST, "rater_id must not be empty".into()));
    }
    let study = study(&state, &id)?;
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0);
    let record = VoteRecord {
        study_id: id,
        session_id: req.session_id.unwrap_or_else(|| req.rater_id.clone()),
        rater_id: req.rater_id,
        item_id: req.item_id.clone(),
        choice: req.choice,
        timestamp,
    };
    // The fsync blocks, so keep it off the async workers.
    tokio::task::spawn_blocking(move || study.record(record))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(serde_json::json!({ "status": "recorded", "item_id": req.item_id })))
}

async fn get_tally(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
) -> Result<Json<TallyResult>, ApiError> {
    let presented = headers
        .get(ADMIN_TOKEN_HEADER)
        .and_then(|v| v.to_str().ok())
        .or_else(|| {
            headers
                .get(header::AUTHORIZATION)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.strip_prefix("Bearer "))
        });
    if state.admin_token.is_empty() || presented != Some(state.admin_token.as_str()) {
        return Err(ApiError(StatusCode::UNAUTHORIZED, "admin token required".into()));
    }
    Ok(Json(study(&state, &id)?.tally()?))
}

async fn item_file(
    State(state): State<Shared>,
    UrlPath((id, item_id, slot)): UrlPath<(String, String, String)>,
) -> Result<impl IntoResponse, ApiError> {
    let study = study(&state, &id)?;
    let item = study
        .manifest
        .item(&item_id)
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown item `{item_id}`")))?;
    let m = &study.manifest;
    let path = match slot.as_str() {
        "image" => m.image_dir.join(&item.image_ref),
        "A" => m.map_dir.join(&item.map_a_ref),
        "B" => m.map_dir.join(&item.map_b_ref),
        _ => return Err(ApiError(StatusCode::NOT_FOUND, format!("unknown slot `{slot}`"))),
    };
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|e| {
            log::error!("{}: {e}", path.display());
            ApiError(StatusCode::NOT_FOUND, "file unavailable".into())
        })?;
    Ok(([(header::CONTENT_TYPE, "image/png"), (header::CACHE_CONTROL, "no-store")], bytes))
}
