use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use groundkit::dataset::Split;
use groundkit::AnnotationRecord;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::store::{RecordUpdate, Store, StoreError};

pub const DEFAULT_PAGE: usize = 100;
pub const MAX_PAGE: usize = 1000;

/// Error body: `{"error": kind, "message": text}` plus `field` for
/// validation errors and `current_version` for conflicts.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            body: json!({"error": "validation", "field": field.into(), "message": message.into()}),
        }
    }

    fn not_found(what: &str) -> Self {
        Self {
            status: StatusCode::NOT_FOUND,
            body: json!({"error": "not_found", "message": format!("unknown image {what:?}")}),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(id) => Self::not_found(&id),
            StoreError::Conflict { current, .. } => Self {
                status: StatusCode::CONFLICT,
                body: json!({"error": "conflict", "message": e.to_string(), "current_version": current}),
            },
            StoreError::Validation { ref field, ref reason } => Self::validation(field.clone(), reason.clone()),
            other => {
                tracing::error!(error = %other, "store failure");
                Self {
                    status: StatusCode::INTERNAL_SERVER_ERROR,
                    body: json!({"error": "internal", "message": other.to_string()}),
                }
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Records go out in the same shape as a regions.jsonl line.
fn record_response(record: &AnnotationRecord) -> ApiResult<Response> {
    let line = groundkit::dataset::io::to_line(record).map_err(|e| ApiError::validation("record", e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], line).into_response())
}

#[derive(Debug, Deserialize)]
pub struct ListQuery {
    split: Option<String>,
    offset: Option<usize>,
    limit: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Page {
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    pub items: Vec<crate::store::ImageSummary>,
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({"status": "ok"}))
}

async fn list_images(State(store): State<Arc<Store>>, Query(q): Query<ListQuery>) -> ApiResult<Json<Page>> {
    let split = match q.split.as_deref() {
        None | Some("") => None,
        Some(s) => Some(
            s.parse::<Split>()
                .map_err(|_| ApiError::validation("split", format!("unknown split {s:?}")))?,
        ),
    };
    let offset = q.offset.unwrap_or(0);
    let limit = q.limit.unwrap_or(DEFAULT_PAGE).min(MAX_PAGE);
    let (total, items) = store.list(split, offset, limit);
    Ok(Json(Page {
        total,
        offset,
        limit,
        items,
    }))
}

async fn get_record(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult<Response> {
    record_response(&store.get(&id)?)
}

async fn put_record(State(store): State<Arc<Store>>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let mut value: serde_json::Value =
        serde_json::from_slice(&body).map_err(|e| ApiError::validation("body", e.to_string()))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| ApiError::validation("body", "expected a JSON object"))?;
    // fields a client may echo back from GET
    match obj.remove("schema_version") {
        None => {}
        Some(v) if v.as_u64() == Some(groundkit::dataset::SCHEMA_VERSION) => {}
        Some(v) => {
            return Err(ApiError::validation(
                "schema_version",
                format!("unsupported version {v}"),
            ))
        }
    }
    obj.remove("version");
    if let Some(body_id) = obj.remove("image_id") {
        if body_id.as_str() != Some(id.as_str()) {
            return Err(ApiError::validation("image_id", "does not match the URL"));
        }
    }
    let update: RecordUpdate = serde_path_to_error::deserialize(value)
        .map_err(|e| ApiError::validation(e.path().to_string(), e.into_inner().to_string()))?;
    let stored = store.put(&id, update).await?;
    record_response(&stored)
}

fn content_type(path: &std::path::Path) -> &'static str {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    match ext.as_str() {
        "jpg" | "jpeg" => "image/jpeg",
        "png" => "image/png",
        "gif" => "image/gif",
        "webp" => "image/webp",
        "tif" | "tiff" => "image/tiff",
        "bmp" => "image/bmp",
        _ => "application/octet-stream",
    }
}

async fn image_file(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult<Response> {
    let path = store.image_file(&id).ok_or_else(|| ApiError::not_found(&id))?;
    let bytes = tokio::fs::read(&path).await.map_err(|_| ApiError::not_found(&id))?;
    let len = bytes.len();
    let mut resp = Response::new(Body::from(bytes));
    let headers = resp.headers_mut();
    headers.insert(header::CONTENT_TYPE, HeaderValue::from_static(content_type(&path)));
    headers.insert(header::CONTENT_LENGTH, HeaderValue::from(len));
    Ok(resp)
}

async fn progress(State(store): State<Arc<Store>>) -> Json<crate::store::Progress> {
    Json(store.progress())
}

/// The REST API. `get` routes also answer `HEAD` with headers only.
pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/images", get(list_images))
        .route("/api/images/:id", get(get_record).put(put_record))
        .route("/api/images/:id/file", get(image_file))
        .route("/api/progress", get(progress))
        .with_state(store)
}

/// Serves until `shutdown` resolves, then finishes in-flight requests.
pub async fn serve(
    listener: tokio::net::TcpListener,
    store: Arc<Store>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let addr: SocketAddr = listener.local_addr()?;
    tracing::info!(%addr, images = store.len(), "annotation service listening");
    axum::serve(listener, router(store))
        .with_graceful_shutdown(shutdown)
        .await
}
