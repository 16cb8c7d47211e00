//! Caption-review HTTP API.
//!
//! | method | path | success |
//! |---|---|---|
//! | GET | `/api/captions/pending?worker=<id>&limit=<n>` | 200, item array |
//! | POST | `/api/ratings` | 201, stored rating |
//! | POST | `/api/aggregate` | 200, verdict array |
//! | GET | `/api/stats` | 200 |
//! | GET | `/api/health` | 200 |
//!
//! Errors are `{"error": <kind>, "message": <text>}`. Anything else falls
//! through to the static UI bundle when one is configured.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chartmeta::review::{RatingSubmission, ReviewError, ReviewStore};
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;
use tower_http::trace::TraceLayer;

pub const DEFAULT_PENDING_LIMIT: usize = 20;

pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            kind,
            message: message.into(),
        }
    }
}

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        let (status, kind) = match &e {
            ReviewError::UnknownCard(_) => (StatusCode::NOT_FOUND, "UnknownCard"),
            ReviewError::DuplicateRating { .. } => (StatusCode::CONFLICT, "DuplicateRating"),
            ReviewError::ScoreOutOfRange { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "ScoreOutOfRange"),
            ReviewError::UnknownWorker(_) => (StatusCode::FORBIDDEN, "UnknownWorker"),
            ReviewError::InvalidConfig(_) | ReviewError::Card(_) | ReviewError::Store(_) => {
                tracing::error!(error = %e, "review store failure");
                (StatusCode::INTERNAL_SERVER_ERROR, "Internal")
            }
        };
        ApiError::new(status, kind, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "BadRequest", e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "BadRequest", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.kind, "message": self.message }))).into_response()
    }
}

type AppState = Arc<ReviewStore>;

#[derive(Deserialize)]
struct PendingQuery {
    worker: String,
    limit: Option<usize>,
}

async fn pending(
    State(store): State<AppState>,
    query: Result<Query<PendingQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(q) = query?;
    let items = store.list_pending(&q.worker, q.limit.unwrap_or(DEFAULT_PENDING_LIMIT))?;
    Ok(Json(items).into_response())
}

async fn submit(
    State(store): State<AppState>,
    body: Result<Json<RatingSubmission>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(sub) = body?;
    let rating = tokio::task::spawn_blocking(move || store.submit(sub))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))??;
    tracing::info!(card = %rating.card_id, worker = %rating.worker_id, "rating stored");
    Ok((StatusCode::CREATED, Json(rating)).into_response())
}

async fn aggregate(State(store): State<AppState>) -> Result<Response, ApiError> {
    let verdicts = tokio::task::spawn_blocking(move || store.aggregate_verdicts())
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))??;
    Ok(Json(verdicts).into_response())
}

async fn stats(State(store): State<AppState>) -> Response {
    Json(store.stats()).into_response()
}

async fn health(State(store): State<AppState>) -> Response {
    Json(json!({ "status": "ok", "cards": store.card_count() })).into_response()
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such route")
}

pub fn router(store: Arc<ReviewStore>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/captions/pending", get(pending))
        .route("/api/ratings", post(submit))
        .route("/api/aggregate", post(aggregate))
        .route("/api/stats", get(stats))
        .route("/api/health", get(health))
        .with_state(store);
    let app = match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true)),
        None => api.fallback(not_found),
    };
    app.layer(TraceLayer::new_for_http())
}
