//! The annotation service's edit cycle without opening a socket: import
//! refined regions, fetch a record, save a correction, then watch a stale
//! save get rejected with 409.
//!
//! ```text
//! cargo run -p groundkit-service --example edit_round_trip
//! ```
//!
//! To serve over HTTP use `groundkit serve --data DIR --import regions.jsonl`.

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request};
use groundkit::{AnnotationRecord, BBox, Region};
use groundkit_service::{router, Store};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &axum::Router, method: Method, uri: &str, body: Option<Value>) -> (u16, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json");
    let req = req
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status().as_u16();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

#[tokio::main]
async fn main() {
    let dir = tempfile::tempdir().unwrap();
    let boy = Region::new(BBox::new(0.30, 0.20, 0.62, 0.96).unwrap(), "boy", Some(0.35));
    let records = vec![AnnotationRecord::new("print-0001", "two women, a boy", vec![boy])];
    Store::import(dir.path(), &records, None).unwrap();
    let app = router(Arc::new(Store::open(dir.path(), None).unwrap()));

    let (_, page) = call(&app, Method::GET, "/api/images", None).await;
    println!("GET /api/images -> {page}");

    let (_, rec) = call(&app, Method::GET, "/api/images/print-0001", None).await;
    println!("GET record -> {rec}");

    // the annotator adds the two women the model missed
    let mut regions = rec["regions"].clone();
    regions
        .as_array_mut()
        .unwrap()
        .push(json!({"box": [0.02, 0.10, 0.30, 0.98], "phrase": "women"}));
    let edit = json!({"expected_version": rec["version"], "caption": rec["caption"], "regions": regions});
    let (status, saved) = call(&app, Method::PUT, "/api/images/print-0001", Some(edit.clone())).await;
    println!("PUT -> {status} version {}", saved["version"]);

    // a second tab still holding version 0
    let (status, err) = call(&app, Method::PUT, "/api/images/print-0001", Some(edit)).await;
    println!("stale PUT -> {status} {err}");

    let (_, progress) = call(&app, Method::GET, "/api/progress", None).await;
    println!("GET /api/progress -> {progress}");
}
