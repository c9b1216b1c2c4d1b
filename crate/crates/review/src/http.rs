//! HTTP+JSON API over a [`ReviewStore`].
//!
//! | method | path                          |                                   |
//! |--------|-------------------------------|-----------------------------------|
//! | GET    | `/api/items`                  | `?state=&subtask=&source=&page=&page_size=` |
//! | GET    | `/api/items/{id}`             | item, edit history, decision count |
//! | POST   | `/api/items/{id}/decision`    | body: [`DecisionRequest`]         |
//! | GET    | `/api/stats`                  | counts per state and subtask      |
//! | GET    | `/api/export`                 | accepted and edited items         |
//!
//! Everything else falls through to the static UI directory, if one is set.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use nepkit::{QaItem, ReviewAction, ReviewDecision, ReviewState, Violation};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::store::{Filter, ReviewError, ReviewStore, DEFAULT_PAGE_SIZE};

pub const DEFAULT_PORT: u16 = 7870;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub action: ReviewAction,
    #[serde(default)]
    pub edited_item: Option<QaItem>,
    #[serde(default)]
    pub reviewer: String,
    /// State the reviewer saw; a mismatch answers 409 so the UI can refresh.
    #[serde(default)]
    pub expected_state: Option<ReviewState>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
}

pub struct ApiError(StatusCode, ErrorBody);

impl ApiError {
    fn bad_request(msg: impl Into<String>) -> Self {
        Self(
            StatusCode::BAD_REQUEST,
            ErrorBody {
                error: msg.into(),
                violations: Vec::new(),
            },
        )
    }
}

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        let status = match &e {
            ReviewError::UnknownItem(_) => StatusCode::NOT_FOUND,
            ReviewError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ReviewError::Conflict { .. } => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let violations = match &e {
            ReviewError::Invalid(v) => v.clone(),
            _ => Vec::new(),
        };
        Self(
            status,
            ErrorBody {
                error: e.to_string(),
                violations,
            },
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

#[derive(Debug, Default, Deserialize)]
struct ListQuery {
    state: Option<String>,
    subtask: Option<String>,
    source: Option<String>,
    page: Option<usize>,
    page_size: Option<usize>,
}

fn parse_opt<T: std::str::FromStr<Err = String>>(v: &Option<String>) -> Result<Option<T>, ApiError> {
    match v.as_deref().map(str::trim) {
        None | Some("") => Ok(None),
        Some(s) => s.parse().map(Some).map_err(ApiError::bad_request),
    }
}

type Shared = Arc<ReviewStore>;

async fn list_items(State(store): State<Shared>, Query(q): Query<ListQuery>) -> Result<impl IntoResponse, ApiError> {
    let filter = Filter {
        state: parse_opt(&q.state)?,
        subtask: parse_opt(&q.subtask)?,
        source: parse_opt(&q.source)?,
    };
    let page = store.list(&filter, q.page.unwrap_or(0), q.page_size.unwrap_or(DEFAULT_PAGE_SIZE));
    Ok(Json(page))
}

async fn get_item(State(store): State<Shared>, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    store
        .get(&id)
        .map(Json)
        .ok_or_else(|| ReviewError::UnknownItem(id).into())
}

async fn post_decision(
    State(store): State<Shared>,
    Path(id): Path<String>,
    Json(req): Json<DecisionRequest>,
) -> Result<impl IntoResponse, ApiError> {
    let decision = ReviewDecision {
        item_id: id,
        action: req.action,
        edited_item: req.edited_item,
        reviewer: if req.reviewer.trim().is_empty() {
            "anonymous".into()
        } else {
            req.reviewer
        },
        at: Utc::now(),
    };
    let expected = req.expected_state;
    let item = tokio::task::spawn_blocking(move || store.submit(decision, expected))
        .await
        .map_err(|e| {
            ApiError(
                StatusCode::INTERNAL_SERVER_ERROR,
                ErrorBody {
                    error: e.to_string(),
                    violations: Vec::new(),
                },
            )
        })??;
    Ok(Json(item))
}

async fn stats(State(store): State<Shared>) -> impl IntoResponse {
    Json(store.stats())
}

async fn export(State(store): State<Shared>) -> impl IntoResponse {
    Json(store.export_accepted())
}

pub fn router(store: Shared, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/items", get(list_items))
        .route("/api/items/{id}", get(get_item))
        .route("/api/items/{id}/decision", post(post_decision))
        .route("/api/stats", get(stats))
        .route("/api/export", get(export))
        .with_state(store);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until the process is stopped.
pub async fn serve(
    listener: tokio::net::TcpListener,
    store: Shared,
    static_dir: Option<PathBuf>,
) -> std::io::Result<()> {
    let addr: SocketAddr = listener.local_addr()?;
    log::info!("review service listening on http://{addr}");
    axum::serve(listener, router(store, static_dir)).await
}
