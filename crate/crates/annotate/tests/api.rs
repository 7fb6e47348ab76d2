use std::path::Path;
use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use seatrack_annotate::{router, Session, SessionOptions};
use seatrack_core::synth::{generate, preset, Preset, SceneConfig};

fn app(dir: &Path) -> Router {
    let seq = generate(
        "api",
        &SceneConfig {
            frame_count: 5,
            ..preset(Preset::Clutter, 3)
        },
    )
    .unwrap();
    let manifest = seq.write_to_dir(dir).unwrap();
    let session = Session::open(
        manifest,
        SessionOptions {
            annotations: Some(dir.join("edited.json")),
            ..Default::default()
        },
    )
    .unwrap();
    router(Arc::new(Mutex::new(session)), None)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => req
            .header("content-type", "application/json")
            .body(Body::from(v.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call(app, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

#[tokio::test]
async fn sequence_and_frame_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (s, v) = call_json(&app, "GET", "/api/sequence", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["name"], "api");
    assert_eq!(v["frame_count"], 5);
    let (s, v) = call_json(&app, "GET", "/api/frames/0", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["boxes"], json!([]));
    let (s, v) = call_json(&app, "GET", "/api/frames/5", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert!(v["error"].as_str().unwrap().contains("frame 5"));
}

#[tokio::test]
async fn image_is_png() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (s, bytes) = call(&app, "GET", "/api/frames/2/image", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(&bytes[..8], b"\x89PNG\r\n\x1a\n");
    let (s, _) = call(&app, "GET", "/api/frames/9/image", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn edit_session_then_save() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let frame0 = json!({"boxes": [
        {"id": 1, "x": 10.0, "y": 10.0, "w": 20.0, "h": 20.0},
        {"id": 2, "x": 100.0, "y": 50.0, "w": 20.0, "h": 20.0}
    ]});
    let (s, _) = call_json(&app, "PUT", "/api/frames/0", Some(frame0)).await;
    assert_eq!(s, StatusCode::OK);

    let (s, v) = call_json(&app, "POST", "/api/frames/0/preassign", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(v["error"].is_string());

    // frame 1: same boxes nudged, plus one far away
    let frame1 = json!({"boxes": [
        {"id": 70, "x": 101.0, "y": 51.0, "w": 20.0, "h": 20.0},
        {"id": 71, "x": 12.0, "y": 9.0, "w": 20.0, "h": 20.0},
        {"id": 72, "x": 250.0, "y": 200.0, "w": 20.0, "h": 20.0}
    ]});
    call_json(&app, "PUT", "/api/frames/1", Some(frame1)).await;
    let (s, proposal) = call_json(&app, "POST", "/api/frames/1/preassign", None).await;
    assert_eq!(s, StatusCode::OK);
    let ids: Vec<u64> = proposal["boxes"].as_array().unwrap().iter().map(|b| b["id"].as_u64().unwrap()).collect();
    assert_eq!(ids, vec![2, 1, 73]);

    // accept the proposal
    let (s, _) = call_json(&app, "PUT", "/api/frames/1", Some(json!({"boxes": proposal["boxes"]}))).await;
    assert_eq!(s, StatusCode::OK);

    let (s, v) = call_json(&app, "PATCH", "/api/frames/1/boxes/73", Some(json!({"new_id": 1}))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert!(v["error"].as_str().unwrap().contains("already"));
    let (s, _) = call_json(&app, "PATCH", "/api/frames/1/boxes/99", Some(json!({"new_id": 5}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, v) = call_json(&app, "PATCH", "/api/frames/1/boxes/73", Some(json!({"new_id": 3}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["id"], 3);

    let (s, v) = call_json(&app, "DELETE", "/api/frames/1/boxes/1", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["boxes"].as_array().unwrap().len(), 2);
    let (s, _) = call_json(&app, "DELETE", "/api/frames/1/boxes/1", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (s, _) = call_json(&app, "POST", "/api/save", None).await;
    assert_eq!(s, StatusCode::OK);
    let saved = seatrack_core::io::read_annotations(dir.path().join("edited.json")).unwrap();
    let ids: Vec<u64> = saved.frames[1].boxes.iter().map(|b| b.id).collect();
    assert_eq!(ids, vec![2, 3]);
    assert_eq!(saved.frames[0].boxes.len(), 2);
    let (_, v) = call_json(&app, "GET", "/api/sequence", None).await;
    assert_eq!(v["dirty"], false);
}

#[tokio::test]
async fn duplicate_ids_in_put_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let body = json!({"boxes": [
        {"id": 4, "x": 0.0, "y": 0.0, "w": 5.0, "h": 5.0},
        {"id": 4, "x": 50.0, "y": 0.0, "w": 5.0, "h": 5.0}
    ]});
    let (s, _) = call_json(&app, "PUT", "/api/frames/2", Some(body)).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (_, v) = call_json(&app, "GET", "/api/frames/2", None).await;
    assert_eq!(v["boxes"], json!([]));
    call_json(&app, "POST", "/api/save", None).await;
    let saved = seatrack_core::io::read_annotations(dir.path().join("edited.json")).unwrap();
    assert!(saved.frames.iter().all(|f| f.boxes.is_empty()));
}
