mod common;

use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use common::*;
use http_body_util::BodyExt;
use leapfactual::transport::parse_trajectory_jsonl;
use leapfactual_service::session::SessionManager;
use leapfactual_service::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

fn app(dir: &std::path::Path, assets: Option<std::path::PathBuf>) -> Router {
    let sessions = Arc::new(SessionManager::open(toy_models(), dir, None).unwrap());
    router(
        AppState {
            sessions,
            label_wait: Duration::from_secs(30),
        },
        assets,
    )
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, String) {
    let builder = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => builder.header("content-type", "application/json").body(Body::from(v.to_string())),
        None => builder.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn json_call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, text) = call(app, method, uri, body).await;
    (status, serde_json::from_str(&text).unwrap_or(Value::Null))
}

#[tokio::test]
async fn health_classes_and_index() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), None);
    let (status, body) = json_call(&app, "GET", "/api/v1/healthz", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    let (_, body) = json_call(&app, "GET", "/api/v1/classes", None).await;
    assert_eq!(body["n_classes"], 4);
    assert_eq!(body["names"].as_array().unwrap().len(), 4);
    let (status, text) = call(&app, "GET", "/", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(text.contains("/api/v1"));
}

#[tokio::test]
async fn static_assets_are_served_from_a_directory() {
    let dir = tempfile::tempdir().unwrap();
    let assets = tempfile::tempdir().unwrap();
    std::fs::write(assets.path().join("index.html"), "<p>ui</p>").unwrap();
    std::fs::write(assets.path().join("app.js"), "let x = 1;").unwrap();
    let app = app(dir.path(), Some(assets.path().to_path_buf()));
    assert_eq!(call(&app, "GET", "/", None).await.1, "<p>ui</p>");
    assert_eq!(call(&app, "GET", "/app.js", None).await.1, "let x = 1;");
    assert_eq!(call(&app, "GET", "/api/v1/healthz", None).await.0, StatusCode::OK);
}

#[tokio::test]
async fn human_session_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), None);
    let (status, created) = json_call(
        &app,
        "POST",
        "/api/v1/sessions",
        Some(json!({ "source_inline": [-0.3, -0.2], "target_label": 3 })),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    let id = created["session_id"].as_str().unwrap().to_string();
    let base = format!("/api/v1/sessions/{id}");

    let (status, summary) = json_call(&app, "GET", &base, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(summary["status"], "awaiting_label");
    let (_, text) = call(&app, "GET", &format!("{base}/trajectory"), None).await;
    assert_eq!(parse_trajectory_jsonl(text.as_bytes()).unwrap().len(), 1);

    let (status, first) = json_call(&app, "GET", &format!("{base}/pending"), None).await;
    assert_eq!(status, StatusCode::OK);
    let (_, again) = json_call(&app, "GET", &format!("{base}/pending"), None).await;
    assert_eq!(first, again);
    assert_eq!(first["seq"], 0);
    assert_eq!(first["kind"], "point");
    assert_eq!(first["payload"]["centers"].as_array().unwrap().len(), 4);

    let (status, err) = json_call(&app, "POST", &format!("{base}/label"), Some(json!({ "seq": 0, "label": 4 }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["error"], "validation");

    let mut seq = 0;
    loop {
        let (status, pending) = json_call(&app, "GET", &format!("{base}/pending"), None).await;
        if status == StatusCode::CONFLICT {
            break;
        }
        assert_eq!(pending["seq"], seq);
        let z: Vec<f64> = serde_json::from_value(pending["payload"]["z"].clone()).unwrap();
        let label = (z[0] > 0.0) as usize + 2 * (z[1] > 0.0) as usize;
        let (status, resp) =
            json_call(&app, "POST", &format!("{base}/label"), Some(json!({ "seq": seq, "label": label }))).await;
        assert_eq!(status, StatusCode::OK);
        assert!(resp["seq"].as_u64().unwrap() > seq);
        let (status, err) =
            json_call(&app, "POST", &format!("{base}/label"), Some(json!({ "seq": seq, "label": label }))).await;
        assert_eq!(status, StatusCode::CONFLICT, "{err}");
        seq = resp["seq"].as_u64().unwrap();
    }
    let (_, summary) = json_call(&app, "GET", &base, None).await;
    assert_eq!(summary["status"], "done");
    assert_eq!(summary["final_label"], 3);
    let (_, text) = call(&app, "GET", &format!("{base}/trajectory"), None).await;
    let records = parse_trajectory_jsonl(text.as_bytes()).unwrap();
    let last = records.last().unwrap();
    assert!(last.z[0] > 0.0 && last.z[1] > 0.0, "{last:?}");
}

#[tokio::test]
async fn local_session_runs_to_done_without_queries() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), None);
    let (_, created) = json_call(
        &app,
        "POST",
        "/api/v1/sessions",
        Some(json!({ "source_inline": [0.2, -0.3], "target_label": 2, "oracle": "local", "mode": "ce" })),
    )
    .await;
    let base = format!("/api/v1/sessions/{}", created["session_id"].as_str().unwrap());
    let mut status = Value::Null;
    for _ in 0..200 {
        status = json_call(&app, "GET", &base, None).await.1["status"].clone();
        if status == "done" {
            break;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    assert_eq!(status, "done");
    let (_, summary) = json_call(&app, "GET", &base, None).await;
    assert_eq!(summary["inject_leaps"], 0);
    let (code, _) = json_call(&app, "POST", &format!("{base}/label"), Some(json!({ "seq": 0, "label": 0 }))).await;
    assert_eq!(code, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn request_errors_map_to_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), None);
    assert_eq!(call(&app, "GET", "/api/v1/sessions/nope", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "GET", "/api/v1/sessions/nope/pending", None).await.0, StatusCode::NOT_FOUND);
    let bad_field = json!({ "source_inline": [0.0, 0.0], "target_label": 1, "colour": "red" });
    assert_eq!(call(&app, "POST", "/api/v1/sessions", Some(bad_field)).await.0, StatusCode::UNPROCESSABLE_ENTITY);
    let bad_target = json!({ "source_inline": [0.0, 0.0], "target_label": 9 });
    let (status, body) = json_call(&app, "POST", "/api/v1/sessions", Some(bad_target)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "validation");
    let bad_config = json!({ "source_inline": [0.0, 0.0], "target_label": 1, "config": { "euler_steps": 0 } });
    assert_eq!(call(&app, "POST", "/api/v1/sessions", Some(bad_config)).await.0, StatusCode::UNPROCESSABLE_ENTITY);
}
