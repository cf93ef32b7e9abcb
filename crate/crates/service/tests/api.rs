use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use repcl::sim::{self, SimParams};
use repcl::ClockConfig;
use repcl_service::{router, router_with_state, AppState, ServiceConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

const LISTING: &str = include_str!("../../cli/tests/data/listing.txt");

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    send(app, req.body(body).unwrap()).await
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

async fn create_inline(app: &Router, text: &str) -> Value {
    let (st, v) = call(app, Method::POST, "/sessions", Some(json!({ "trace": text, "name": "listing" }))).await;
    assert_eq!(st, StatusCode::CREATED, "{v}");
    v
}

fn keys(frontier: &Value) -> Vec<u64> {
    frontier.as_array().unwrap().iter().map(|e| e["key"].as_u64().unwrap()).collect()
}

#[tokio::test]
async fn health_and_unknown_session() {
    let app = router(&ServiceConfig::default());
    let (st, v) = call(&app, Method::GET, "/healthz", None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["status"], "ok");
    for (m, path) in [
        (Method::GET, "/sessions/nope/state"),
        (Method::POST, "/sessions/nope/reset"),
    ] {
        let (st, v) = call(&app, m, path, None).await;
        assert_eq!(st, StatusCode::NOT_FOUND);
        assert_eq!(v["code"], "unknown_session");
    }
    let (st, _) = call(&app, Method::POST, "/sessions/nope/choose", Some(json!({"event_key": 0}))).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn drive_through_the_listing() {
    let app = router(&ServiceConfig::default());
    let d = create_inline(&app, LISTING).await;
    assert_eq!(d["total"], 13);
    assert_eq!(d["replayed_count"], 0);
    assert_eq!(d["done"], false);
    assert_eq!(d["trace_name"], "listing");
    let id = d["session_id"].as_str().unwrap().to_string();
    let (_, fresh) = call(&app, Method::GET, &format!("/sessions/{id}/state"), None).await;
    assert_eq!(fresh["replayed"].as_array().unwrap().len(), 0);
    assert_eq!(fresh["nodes"].as_array().unwrap().len(), 5);

    // Always take the first frontier entry; the listing order comes out.
    let mut order = Vec::new();
    let mut d = d;
    while d["done"] == false {
        let k = keys(&d["frontier"])[0];
        let (st, next) = call(&app, Method::POST, &format!("/sessions/{id}/choose"), Some(json!({"event_key": k}))).await;
        assert_eq!(st, StatusCode::OK, "{next}");
        order.push(k);
        d = next;
        let (_, s) = call(&app, Method::GET, &format!("/sessions/{id}/state"), None).await;
        assert_eq!(s["replayed"].as_array().unwrap().len(), order.len());
    }
    assert_eq!(order, [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 12, 11]);
    assert!(d["frontier"].as_array().unwrap().is_empty());
    let (_, s) = call(&app, Method::GET, &format!("/sessions/{id}/state"), None).await;
    let lanes = s["lanes"].as_object().unwrap();
    assert_eq!(lanes["10.1.1.2"], json!([3, 10, 12]));

    // Reset returns to the fresh snapshot, twice over.
    for _ in 0..2 {
        let (st, r) = call(&app, Method::POST, &format!("/sessions/{id}/reset"), None).await;
        assert_eq!(st, StatusCode::OK);
        assert_eq!(r["replayed_count"], 0);
    }
    let (_, again) = call(&app, Method::GET, &format!("/sessions/{id}/state"), None).await;
    assert_eq!(again, fresh);
}

#[tokio::test]
async fn non_frontier_choice_is_a_conflict() {
    let app = router(&ServiceConfig::default());
    let d = create_inline(&app, LISTING).await;
    let id = d["session_id"].as_str().unwrap();
    assert_eq!(keys(&d["frontier"]), [0]);
    // RECV of 4 needs its SEND and earlier events on its node.
    let (st, v) = call(&app, Method::POST, &format!("/sessions/{id}/choose"), Some(json!({"event_key": 4}))).await;
    assert_eq!(st, StatusCode::CONFLICT);
    assert_eq!(v["code"], "not_in_frontier");
    assert!(v["violated_constraint"]["kind"].is_string(), "{v}");
    assert!(v["violated_constraint"]["predecessor"].is_u64(), "{v}");
    let (st, v) = call(&app, Method::POST, &format!("/sessions/{id}/choose"), Some(json!({"event_key": 99}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_eq!(v["code"], "unknown_event");
    let (st, _) = call(&app, Method::POST, &format!("/sessions/{id}/choose"), Some(json!({"key": 1}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    call(&app, Method::POST, &format!("/sessions/{id}/choose"), Some(json!({"event_key": 0}))).await;
    let (st, v) = call(&app, Method::POST, &format!("/sessions/{id}/choose"), Some(json!({"event_key": 0}))).await;
    assert_eq!(st, StatusCode::CONFLICT);
    assert_eq!(v["violated_constraint"]["kind"], "already_replayed");
}

#[tokio::test]
async fn parse_failure_names_the_line() {
    let app = router(&ServiceConfig::default());
    let mut text = LISTING.lines().take(3).collect::<Vec<_>>().join("\n");
    text.push_str("\n[(EventID=x, nonsense\n");
    let (st, v) = call(&app, Method::POST, "/sessions", Some(json!({ "trace": text }))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_eq!(v["code"], "parse_error");
    assert_eq!(v["line"], 4);
    assert!(v["message"].as_str().unwrap().contains("line 4"));
    let (st, v) = call(&app, Method::POST, "/sessions", Some(json!({}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_eq!(v["code"], "bad_request");
}

#[tokio::test]
async fn multipart_upload_and_independent_sessions() {
    let app = router(&ServiceConfig::default());
    let mut p = SimParams::new(ClockConfig::new(4, 6, 50).unwrap());
    p.ticks = 400;
    p.alpha_pct = 5.0;
    let trace = sim::run(&p).unwrap().trace;
    let bytes = trace.to_binary().unwrap();
    let boundary = "XyZbound";
    let mut body = format!(
        "--{boundary}\r\nContent-Disposition: form-data; name=\"trace\"; filename=\"run.bin\"\r\nContent-Type: application/octet-stream\r\n\r\n"
    )
    .into_bytes();
    body.extend(&bytes);
    body.extend(format!("\r\n--{boundary}--\r\n").into_bytes());
    let upload = || {
        Request::builder()
            .method(Method::POST)
            .uri("/sessions")
            .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={boundary}"))
            .body(Body::from(body.clone()))
            .unwrap()
    };
    let (st, a) = send(&app, upload()).await;
    assert_eq!(st, StatusCode::CREATED, "{a}");
    assert_eq!(a["trace_name"], "run.bin");
    assert_eq!(a["total"], trace.len());
    let (_, b) = send(&app, upload()).await;
    assert_ne!(a["session_id"], b["session_id"]);
    let (ida, idb) = (a["session_id"].as_str().unwrap(), b["session_id"].as_str().unwrap());
    let k = keys(&a["frontier"])[0];
    call(&app, Method::POST, &format!("/sessions/{ida}/choose"), Some(json!({"event_key": k}))).await;
    let (_, sa) = call(&app, Method::GET, &format!("/sessions/{ida}/state"), None).await;
    let (_, sb) = call(&app, Method::GET, &format!("/sessions/{idb}/state"), None).await;
    assert_eq!(sa["replayed_count"], 1);
    assert_eq!(sb["replayed_count"], 0);
    let (_, h) = call(&app, Method::GET, "/healthz", None).await;
    assert_eq!(h["sessions"], 2);
}

#[tokio::test]
async fn same_choices_give_same_snapshots() {
    let app = router(&ServiceConfig::default());
    let mut snaps = Vec::new();
    for _ in 0..2 {
        let d = create_inline(&app, LISTING).await;
        let id = d["session_id"].as_str().unwrap().to_string();
        for k in [0, 2, 1, 3] {
            call(&app, Method::POST, &format!("/sessions/{id}/choose"), Some(json!({"event_key": k}))).await;
        }
        let (_, mut s) = call(&app, Method::GET, &format!("/sessions/{id}/state"), None).await;
        s.as_object_mut().unwrap().remove("session_id");
        snaps.push(s);
    }
    assert_eq!(snaps[0], snaps[1]);
}

#[tokio::test]
async fn server_side_paths_stay_inside_the_trace_dir() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("traces")).unwrap();
    std::fs::write(dir.path().join("traces/listing.txt"), LISTING).unwrap();
    std::fs::write(dir.path().join("secret.txt"), LISTING).unwrap();
    let cfg = ServiceConfig { trace_dir: Some(dir.path().join("traces")), ..Default::default() };
    let app = router(&cfg);
    let (st, v) = call(&app, Method::POST, "/sessions", Some(json!({"path": "listing.txt"}))).await;
    assert_eq!(st, StatusCode::CREATED, "{v}");
    assert_eq!(v["trace_name"], "listing.txt");
    for bad in ["../secret.txt", "/etc/passwd", "./listing.txt"] {
        let (st, v) = call(&app, Method::POST, "/sessions", Some(json!({"path": bad}))).await;
        assert_eq!(st, StatusCode::BAD_REQUEST, "{bad}: {v}");
        assert_eq!(v["code"], "bad_path");
    }
    let (st, _) = call(&app, Method::POST, "/sessions", Some(json!({"path": "missing.txt"}))).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    let app = router(&ServiceConfig::default());
    let (st, v) = call(&app, Method::POST, "/sessions", Some(json!({"path": "listing.txt"}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_eq!(v["code"], "no_trace_dir");
}

#[tokio::test]
async fn idle_sessions_are_evicted() {
    let cfg = ServiceConfig { ttl: Some(Duration::from_millis(50)), ..Default::default() };
    let state = AppState::new(&cfg);
    let app = router_with_state(&cfg, state.clone());
    let d = create_inline(&app, LISTING).await;
    let id = d["session_id"].as_str().unwrap();
    assert_eq!(state.evict_idle(), 0);
    tokio::time::sleep(Duration::from_millis(120)).await;
    assert_eq!(state.evict_idle(), 1);
    let (st, _) = call(&app, Method::GET, &format!("/sessions/{id}/state"), None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn static_bundle_is_served() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<html>ui</html>").unwrap();
    let cfg = ServiceConfig { static_dir: Some(dir.path().to_path_buf()), ..Default::default() };
    let app = router(&cfg);
    let resp = app.clone().oneshot(Request::get("/").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let body = resp.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(&body[..], b"<html>ui</html>");
    let (st, _) = call(&app, Method::GET, "/healthz", None).await;
    assert_eq!(st, StatusCode::OK);
}
