//! HTTP API for the answer loop.
//!
//! Readers share the knowledge base through a read lock. Writers take the
//! write lock, apply the answer to a copy, persist the copy and only then
//! swap it in, so a failed write leaves both memory and disk unchanged.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::Serialize;
use tokio::sync::RwLock;
use tower_http::services::ServeDir;

use vqg_core::kb::{AcquisitionStats, AnswerSubmission, KbRecord, KnowledgeBase};
use vqg_core::proposal::Region;
use vqg_core::taxonomy::Taxonomy;
use vqg_core::{Error, Image};

pub struct AppState {
    kb: RwLock<KnowledgeBase>,
    kb_path: PathBuf,
    taxonomy: Option<Taxonomy>,
}

impl AppState {
    pub fn new(kb: KnowledgeBase, kb_path: PathBuf, taxonomy: Option<Taxonomy>) -> Arc<Self> {
        Arc::new(Self {
            kb: RwLock::new(kb),
            kb_path,
            taxonomy,
        })
    }

    pub async fn snapshot(&self) -> KnowledgeBase {
        self.kb.read().await.clone()
    }
}

/// JSON error body: `{"error": {"code": ..., "message": ...}}`.
pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.to_string(),
            message: message.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidInput(_) | Error::Json(_) => StatusCode::BAD_REQUEST,
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::Conflict(_) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({"error": {"code": self.code, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

/// Payload of `GET /api/next`.
#[derive(Debug, Serialize)]
pub struct NextQuestion {
    pub record_id: String,
    /// `null` when the record has no stored image.
    pub image_url: Option<String>,
    pub image_width: Option<u32>,
    pub image_height: Option<u32>,
    pub region: Region,
    pub question: String,
    pub target_word: String,
    pub record: KbRecord,
}

pub fn router(state: Arc<AppState>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/next", get(next))
        .route("/api/answer", post(answer))
        .route("/api/stats", get(stats))
        .route("/api/image/{id}", get(image))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

async fn next(State(state): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let record = {
        let kb = state.kb.read().await;
        match kb.next_unanswered() {
            Some(r) => r.clone(),
            None => return Ok(StatusCode::NO_CONTENT.into_response()),
        }
    };
    let dims = match &record.image_path {
        Some(p) => {
            let p = p.clone();
            tokio::task::spawn_blocking(move || Image::load(p).ok().map(|i| (i.width(), i.height())))
                .await
                .ok()
                .flatten()
        }
        None => None,
    };
    let body = NextQuestion {
        record_id: record.id().to_string(),
        image_url: record
            .image_path
            .as_ref()
            .map(|_| format!("/api/image/{}", record.id())),
        image_width: dims.map(|d| d.0),
        image_height: dims.map(|d| d.1),
        region: record.question.region,
        question: record.question.question.clone(),
        target_word: record.question.target_word.clone(),
        record,
    };
    Ok(Json(body).into_response())
}

async fn answer(
    State(state): State<Arc<AppState>>,
    body: Result<Json<AnswerSubmission>, JsonRejection>,
) -> Result<Json<KbRecord>, ApiError> {
    let Json(sub) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_input", e.body_text()))?;
    let mut kb = state.kb.write().await;
    let mut updated = kb.clone();
    let record = updated.ingest_answer(&sub, Utc::now())?.clone();
    let path = state.kb_path.clone();
    let to_save = updated.clone();
    tokio::task::spawn_blocking(move || to_save.save(path))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    *kb = updated;
    Ok(Json(record))
}

async fn stats(State(state): State<Arc<AppState>>) -> Json<AcquisitionStats> {
    Json(state.kb.read().await.stats(state.taxonomy.as_ref()))
}

async fn image(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let path = {
        let kb = state.kb.read().await;
        let record = kb
            .get(&id)
            .ok_or_else(|| Error::NotFound(format!("no record '{id}'")))?;
        record
            .image_path
            .clone()
            .ok_or_else(|| Error::NotFound(format!("record '{id}' has no image")))?
    };
    let bytes = tokio::task::spawn_blocking(move || Image::load(&path).and_then(|i| i.to_png_bytes()))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(|e| match e {
            Error::Io { .. } => ApiError::new(StatusCode::NOT_FOUND, "not_found", e.to_string()),
            other => other.into(),
        })?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}
