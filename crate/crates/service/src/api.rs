//! HTTP API under `/api/v1`. Errors are JSON `{"error": code, "detail": text}`.

use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use doorcount_core::store::{build_report, SnapshotStore};
use serde::Deserialize;
use serde_json::json;

use crate::service::{ControlAction, ControlError, Shared};
use crate::status::ServiceStatus;

pub const DEFAULT_EVENT_PAGE: usize = 100;
pub const MAX_EVENT_PAGE: usize = 1000;
/// One minute, in microseconds.
pub const DEFAULT_REPORT_BUCKET_US: u64 = 60_000_000;

pub fn router(shared: Arc<Shared>) -> Router {
    Router::new()
        .route("/api/v1/status", get(status))
        .route("/api/v1/counts", get(counts))
        .route("/api/v1/events", get(events))
        .route("/api/v1/control", post(control))
        .route("/api/v1/report", get(report))
        .route("/api/v1/snapshots/{id}", get(snapshot))
        .fallback(|| async {
            ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
        })
        .with_state(shared)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    detail: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, detail: impl Into<String>) -> Self {
        Self {
            status,
            code,
            detail: detail.into(),
        }
    }

    fn bad_request(code: &'static str, detail: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, detail)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({ "error": self.code, "detail": self.detail })),
        )
            .into_response()
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        Self::bad_request("bad_query", e.body_text())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::bad_request("bad_body", e.body_text())
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn status(State(s): State<Arc<Shared>>) -> impl IntoResponse {
    Json(ServiceStatus::clone(&s.status()))
}

async fn counts(State(s): State<Arc<Shared>>) -> impl IntoResponse {
    Json(s.status().counts)
}

#[derive(Deserialize)]
struct EventsQuery {
    #[serde(default)]
    since_seq: u64,
    limit: Option<usize>,
}

async fn events(
    State(s): State<Arc<Shared>>,
    q: Result<Query<EventsQuery>, QueryRejection>,
) -> ApiResult<impl IntoResponse> {
    let Query(q) = q?;
    let limit = q.limit.unwrap_or(DEFAULT_EVENT_PAGE);
    if limit == 0 || limit > MAX_EVENT_PAGE {
        return Err(ApiError::bad_request(
            "bad_limit",
            format!("limit must be in 1..={MAX_EVENT_PAGE}"),
        ));
    }
    Ok(Json(s.events_since(q.since_seq, limit)))
}

#[derive(Deserialize)]
struct ControlRequest {
    action: String,
}

async fn control(
    State(s): State<Arc<Shared>>,
    body: Result<Json<ControlRequest>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let Json(req) = body?;
    let action: ControlAction = req
        .action
        .parse()
        .map_err(|e: String| ApiError::bad_request("unknown_action", e))?;
    match s.control(action).await {
        Ok(st) => Ok(Json(ServiceStatus::clone(&st))),
        Err(e @ ControlError::SourceExhausted) => Err(ApiError::new(
            StatusCode::CONFLICT,
            "source_exhausted",
            e.to_string(),
        )),
        Err(e @ ControlError::ClearFailed(_)) => Err(ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "clear_failed",
            e.to_string(),
        )),
        Err(e @ ControlError::ShutDown) => Err(ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "shutting_down",
            e.to_string(),
        )),
    }
}

/// All times in microseconds. `to` defaults to just past the newest event.
#[derive(Deserialize)]
struct ReportQuery {
    #[serde(default)]
    from: u64,
    to: Option<u64>,
    bucket: Option<u64>,
}

async fn report(
    State(s): State<Arc<Shared>>,
    q: Result<Query<ReportQuery>, QueryRejection>,
) -> ApiResult<impl IntoResponse> {
    let Query(q) = q?;
    let events = s.all_events();
    let to = q.to.unwrap_or_else(|| {
        let last_event = events.last().map_or(0, |e| e.timestamp_us);
        last_event.max(s.status().counts.timestamp_us).max(q.from) + 1
    });
    let bucket = q.bucket.unwrap_or(DEFAULT_REPORT_BUCKET_US);
    build_report(&events, q.from, to, bucket)
        .map(Json)
        .map_err(|e| ApiError::bad_request("bad_report_window", e.to_string()))
}

async fn snapshot(State(s): State<Arc<Shared>>, Path(id): Path<String>) -> ApiResult<Response> {
    let id: u64 = id.parse().map_err(|_| {
        ApiError::bad_request("bad_snapshot_id", format!("{id:?} is not a snapshot id"))
    })?;
    let not_found = || {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "unknown_snapshot",
            format!("no snapshot {id}"),
        )
    };
    let dir = s.snapshot_dir().ok_or_else(not_found)?;
    let store = SnapshotStore::open(dir).map_err(|e| {
        ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "snapshot_io",
            e.to_string(),
        )
    })?;
    match store.load(id) {
        Ok(Some(bytes)) => {
            Ok(([(header::CONTENT_TYPE, "image/x-portable-graymap")], bytes).into_response())
        }
        Ok(None) => Err(not_found()),
        Err(e) => Err(ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "snapshot_io",
            e.to_string(),
        )),
    }
}
