use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use groundkit::dataset::{ManifestEntry, Split};
use groundkit::{AnnotationRecord, BBox, Region};
use groundkit_service::{router, Store};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn region(phrase: &str, conf: Option<f64>) -> Region {
    Region::new(BBox::new(0.1, 0.2, 0.5, 0.9).unwrap(), phrase, conf)
}

/// Five images a..e; b and d are in the test split, the rest in train.
/// Image files exist for a (jpg) and b (png).
fn setup(dir: &Path) -> Router {
    let images = dir.join("images");
    std::fs::create_dir_all(&images).unwrap();
    std::fs::write(images.join("a.jpg"), b"\xff\xd8jpeg bytes").unwrap();
    std::fs::write(images.join("b.png"), b"\x89PNG bytes").unwrap();
    std::fs::write(dir.join("outside.txt"), b"secret").unwrap();

    let ids = ["a", "b", "c", "d", "e"];
    let records: Vec<AnnotationRecord> = ids
        .iter()
        .map(|id| AnnotationRecord::new(*id, "two women, a boy", vec![region("boy", Some(0.35))]))
        .collect();
    let manifest: Vec<ManifestEntry> = ids
        .iter()
        .map(|id| {
            let ext = if *id == "b" { "png" } else { "jpg" };
            let mut e = ManifestEntry::new(*id, format!("{id}.{ext}"));
            e.split = if matches!(*id, "b" | "d") {
                Split::Test
            } else {
                Split::Train
            };
            e
        })
        .chain(std::iter::once({
            let mut e = ManifestEntry::new("sneaky", "../outside.txt");
            e.split = Split::Train;
            e
        }))
        .collect();
    let data = dir.join("data");
    Store::import(&data, &records, Some(&manifest)).unwrap();
    router(Arc::new(Store::open(&data, Some(&images)).unwrap()))
}

async fn call(
    app: &Router,
    method: Method,
    uri: &str,
    body: Option<Value>,
) -> (StatusCode, axum::http::HeaderMap, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(serde_json::to_vec(&b).unwrap())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, headers, bytes)
}

async fn get_json(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (s, _, b) = call(app, Method::GET, uri, None).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

fn edit(version: u64, regions: Value) -> Value {
    json!({"expected_version": version, "caption": "two women, a boy", "regions": regions})
}

#[tokio::test]
async fn health() {
    let dir = tempfile::tempdir().unwrap();
    let app = setup(dir.path());
    assert_eq!(
        get_json(&app, "/api/health").await,
        (StatusCode::OK, json!({"status": "ok"}))
    );
}

#[tokio::test]
async fn listing_pages_and_filters() {
    let dir = tempfile::tempdir().unwrap();
    let app = setup(dir.path());
    let (s, page) = get_json(&app, "/api/images?limit=2").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(page["total"], 5);
    let ids: Vec<&str> = page["items"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["image_id"].as_str().unwrap())
        .collect();
    assert_eq!(ids, ["a", "b"]);
    assert_eq!(page["items"][0]["region_count"], 1);
    assert_eq!(page["items"][0]["annotated"], false);

    let (_, page) = get_json(&app, "/api/images?offset=2&limit=2").await;
    let ids: Vec<&str> = page["items"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["image_id"].as_str().unwrap())
        .collect();
    assert_eq!(ids, ["c", "d"]);

    let (_, page) = get_json(&app, "/api/images?split=test").await;
    assert_eq!(page["total"], 2);
    assert!(page["items"].as_array().unwrap().iter().all(|i| i["split"] == "test"));

    let (s, body) = get_json(&app, "/api/images?split=training").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(body["field"], "split");
}

#[tokio::test]
async fn empty_store_lists_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(Arc::new(Store::open(dir.path(), None).unwrap()));
    let (_, page) = get_json(&app, "/api/images").await;
    assert_eq!(page["total"], 0);
    assert_eq!(page["items"], json!([]));
    let (_, p) = get_json(&app, "/api/progress").await;
    assert_eq!((p["total"].as_u64(), p["annotated"].as_u64()), (Some(0), Some(0)));
}

#[tokio::test]
async fn get_put_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let app = setup(dir.path());
    let (s, rec) = get_json(&app, "/api/images/a").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(rec["version"], 0);
    assert_eq!(rec["schema_version"], 1);

    let regions = json!([
        {"box": [0.1, 0.2, 0.30000000000000004, 0.9], "phrase": "building or temple", "confidence": null},
        {"box": [0.5, 0.5, 0.9, 0.9], "phrase": "travelers", "confidence": null},
        {"box": [0.5, 0.5, 0.9, 0.9], "phrase": "porters", "confidence": 0.123_456_789_012_345_68},
    ]);
    let (s, _, put_body) = call(&app, Method::PUT, "/api/images/a", Some(edit(0, regions.clone()))).await;
    assert_eq!(s, StatusCode::OK);
    let stored: Value = serde_json::from_slice(&put_body).unwrap();
    assert_eq!(stored["version"], 1);
    assert_eq!(stored["regions"], regions);

    let (s, _, get_body) = call(&app, Method::GET, "/api/images/a", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(get_body, put_body);

    // echoing a GET body back with expected_version is accepted
    let mut echoed: Value = serde_json::from_slice(&get_body).unwrap();
    echoed["expected_version"] = json!(1);
    echoed["caption"] = json!("edited caption");
    let (s, _, b) = call(&app, Method::PUT, "/api/images/a", Some(echoed)).await;
    assert_eq!(s, StatusCode::OK, "{}", String::from_utf8_lossy(&b));
    assert_eq!(get_json(&app, "/api/images/a").await.1["version"], 2);
}

#[tokio::test]
async fn stale_version_conflicts() {
    let dir = tempfile::tempdir().unwrap();
    let app = setup(dir.path());
    let r = json!([{"box": [0.1, 0.1, 0.2, 0.2], "phrase": "boy", "confidence": null}]);
    assert_eq!(
        call(&app, Method::PUT, "/api/images/b", Some(edit(0, r.clone())))
            .await
            .0,
        StatusCode::OK
    );
    let (s, _, body) = call(&app, Method::PUT, "/api/images/b", Some(edit(0, r))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let body: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(body["error"], "conflict");
    assert_eq!(body["current_version"], 1);
}

#[tokio::test]
async fn validation_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let app = setup(dir.path());
    let cases = [
        (
            json!([{"box": [0.5, 0.1, 0.2, 0.4], "phrase": "boy", "confidence": null}]),
            "regions[0].box",
        ),
        (
            json!([{"box": [0.1, 0.1, 0.2, 0.2], "phrase": "ok", "confidence": null},
                {"box": [0.1, 0.1, 0.2, 0.2], "phrase": "  ", "confidence": null}]),
            "regions[1].phrase",
        ),
        (
            json!([{"box": [0.1, 0.1, 0.2, 0.2], "phrase": "boy", "confidence": 1.5}]),
            "regions[0].confidence",
        ),
        (
            json!([{"box": [0.1, 0.1, 0.2], "phrase": "boy", "confidence": null}]),
            "regions[0].box",
        ),
    ];
    for (regions, field) in cases {
        let (s, _, body) = call(&app, Method::PUT, "/api/images/c", Some(edit(0, regions))).await;
        assert_eq!(s, StatusCode::BAD_REQUEST);
        let body: Value = serde_json::from_slice(&body).unwrap();
        assert_eq!(body["field"], field, "{body}");
    }
    let (s, _, _) = call(
        &app,
        Method::PUT,
        "/api/images/c",
        Some(json!({"caption": "x", "regions": []})),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let mut wrong_id = edit(0, json!([]));
    wrong_id["image_id"] = json!("d");
    assert_eq!(
        call(&app, Method::PUT, "/api/images/c", Some(wrong_id)).await.0,
        StatusCode::BAD_REQUEST
    );
    // nothing was written
    assert_eq!(get_json(&app, "/api/images/c").await.1["version"], 0);
}

#[tokio::test]
async fn unknown_ids_are_not_found() {
    let dir = tempfile::tempdir().unwrap();
    let app = setup(dir.path());
    assert_eq!(get_json(&app, "/api/images/zzz").await.0, StatusCode::NOT_FOUND);
    assert_eq!(
        call(&app, Method::PUT, "/api/images/zzz", Some(edit(0, json!([]))))
            .await
            .0,
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        call(&app, Method::GET, "/api/images/zzz/file", None).await.0,
        StatusCode::NOT_FOUND
    );
}

#[tokio::test]
async fn image_bytes_and_head() {
    let dir = tempfile::tempdir().unwrap();
    let app = setup(dir.path());
    let (s, h, b) = call(&app, Method::GET, "/api/images/a/file", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(h["content-type"], "image/jpeg");
    assert_eq!(b, b"\xff\xd8jpeg bytes");

    let (s, h, b) = call(&app, Method::HEAD, "/api/images/b/file", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(h["content-type"], "image/png");
    assert_eq!(h["content-length"], "10");
    assert!(b.is_empty());

    // listed in the manifest but no file on disk
    assert_eq!(
        call(&app, Method::GET, "/api/images/c/file", None).await.0,
        StatusCode::NOT_FOUND
    );
}

#[tokio::test]
async fn traversal_never_escapes() {
    let dir = tempfile::tempdir().unwrap();
    let app = setup(dir.path());
    for uri in [
        "/api/images/sneaky/file",
        "/api/images/..%2Foutside.txt/file",
        "/api/images/..%2F..%2Fetc%2Fpasswd/file",
        "/api/images/%2E%2E/file",
    ] {
        let (s, _, b) = call(&app, Method::GET, uri, None).await;
        assert_eq!(s, StatusCode::NOT_FOUND, "{uri}");
        assert!(!String::from_utf8_lossy(&b).contains("secret"));
    }
}

#[tokio::test]
async fn progress_tracks_edits() {
    let dir = tempfile::tempdir().unwrap();
    let app = setup(dir.path());
    let (_, p) = get_json(&app, "/api/progress").await;
    assert_eq!(p["annotated"], 0);
    assert_eq!(p["total"], 5);
    for id in ["a", "b", "d"] {
        let uri = format!("/api/images/{id}");
        assert_eq!(
            call(&app, Method::PUT, &uri, Some(edit(0, json!([])))).await.0,
            StatusCode::OK
        );
    }
    // a second edit of the same image does not count twice
    assert_eq!(
        call(&app, Method::PUT, "/api/images/a", Some(edit(1, json!([]))))
            .await
            .0,
        StatusCode::OK
    );
    let (_, p) = get_json(&app, "/api/progress").await;
    assert_eq!(p["annotated"], 3);
    let per: u64 = p["per_split"]
        .as_object()
        .unwrap()
        .values()
        .map(|s| s["total"].as_u64().unwrap())
        .sum();
    assert_eq!(per, 5);
    assert_eq!(p["per_split"]["test"]["annotated"], 2);
    let (_, page) = get_json(&app, "/api/images?split=test").await;
    assert!(page["items"].as_array().unwrap().iter().all(|i| i["annotated"] == true));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_writers_one_wins() {
    let dir = tempfile::tempdir().unwrap();
    let app = setup(dir.path());
    for round in 0..10u64 {
        let tasks: Vec<_> = (0..8)
            .map(|w| {
                let app = app.clone();
                tokio::spawn(async move {
                    let r = json!([{"box": [0.1, 0.1, 0.2, 0.2], "phrase": format!("writer {w}"), "confidence": null}]);
                    call(&app, Method::PUT, "/api/images/e", Some(edit(round, r))).await.0
                })
            })
            .collect();
        let mut statuses = Vec::new();
        for t in tasks {
            statuses.push(t.await.unwrap());
        }
        assert_eq!(statuses.iter().filter(|s| **s == StatusCode::OK).count(), 1);
        assert_eq!(statuses.iter().filter(|s| **s == StatusCode::CONFLICT).count(), 7);
    }
    assert_eq!(get_json(&app, "/api/images/e").await.1["version"], 10);
}

#[tokio::test]
async fn edits_are_logged_and_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let app = setup(dir.path());
    let r = json!([{"box": [0.1, 0.1, 0.2, 0.2], "phrase": "travelers", "confidence": null},
                   {"box": [0.1, 0.1, 0.2, 0.2], "phrase": "porters", "confidence": null}]);
    let (_, _, put_body) = call(&app, Method::PUT, "/api/images/d", Some(edit(0, r))).await;
    drop(app);

    let data = dir.path().join("data");
    let store = Store::open(&data, Some(&dir.path().join("images"))).unwrap();
    let log = store.edit_log().unwrap();
    assert_eq!(log.len(), 1);
    assert_eq!((log[0].prior_version, log[0].new_version), (0, 1));
    assert_eq!(log[0].diff.regions_added + log[0].diff.regions_modified, 2);
    let app = router(Arc::new(store));
    let (_, _, get_body) = call(&app, Method::GET, "/api/images/d", None).await;
    assert_eq!(get_body, put_body);

    // re-importing does not clobber edits
    let fresh = AnnotationRecord::new("d", "pseudo", vec![region("boy", Some(0.3))]);
    assert_eq!(Store::import(&data, &[fresh], None).unwrap(), 0);
    assert_eq!(Store::open(&data, None).unwrap().get("d").unwrap().version, 1);
}
