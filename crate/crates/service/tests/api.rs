use std::path::PathBuf;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use boxfront_service::{router, AppState, ServiceConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn data(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name);
    std::fs::read_to_string(p).unwrap()
}

fn bundled_upload() -> Value {
    json!({
        "assets_csv": data("table1_assets.csv"),
        "correlation_csv": data("synthetic_correlation.csv"),
        "calibration_toml": data("synthetic_calibration.toml"),
        "reference_csv": data("table2_reference.csv"),
    })
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(serde_json::to_vec(&v).unwrap())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, b) = call(app, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

async fn upload(app: &Router) -> String {
    let (s, v) = call_json(app, "POST", "/models", Some(bundled_upload())).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    v["id"].as_str().unwrap().to_string()
}

async fn wait(app: &Router, run: &str) -> Value {
    for _ in 0..600 {
        let (s, v) = call_json(app, "GET", &format!("/runs/{run}"), None).await;
        assert_eq!(s, StatusCode::OK);
        if v["state"] == "done" || v["state"] == "failed" {
            return v;
        }
        tokio::time::sleep(Duration::from_millis(100)).await;
    }
    panic!("run {run} did not finish");
}

fn app(workers: usize, persist: Option<PathBuf>) -> Router {
    router(AppState::new(workers, persist))
}

#[tokio::test]
async fn health() {
    let (s, b) = call(&app(1, None), "GET", "/health", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(b, b"ok");
}

#[tokio::test]
async fn model_upload_and_lookup() {
    let app = app(1, None);
    let (s, v) = call_json(&app, "POST", "/models", Some(bundled_upload())).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["assets"].as_array().unwrap().len(), 13);
    assert_eq!(v["objectives"], json!(["return", "volatility", "solvency", "distance"]));
    assert_eq!(v["model_hash"].as_str().unwrap().len(), 64);
    let id = v["id"].as_str().unwrap();
    let (s, again) = call_json(&app, "GET", &format!("/models/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(again, v);
    let (s, e) = call_json(&app, "GET", "/models/nope", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(e["error"], "not_found");
}

#[tokio::test]
async fn bad_uploads_are_rejected() {
    let app = app(1, None);
    let (s, e) = call_json(&app, "POST", "/models", Some(json!({"assets_csv": "asset,weight_pct\nA,x\n"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(e["error"], "parse_error");
    assert!(e["message"].as_str().unwrap().contains("assets_csv"));

    let negative = "asset,weight_pct,return_pct,volatility_pct\nA,50,1,-2\nB,50,3,4\n";
    let (s, e) = call_json(&app, "POST", "/models", Some(json!({"assets_csv": negative}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(e["error"], "invalid_model");
    assert!(!e["violations"].as_array().unwrap().is_empty());

    let (s, e) = call_json(&app, "POST", "/models", Some(json!({"assets": "x"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(e["error"], "bad_request");
}

#[tokio::test]
async fn run_requests_are_validated() {
    let app = app(1, None);
    let id = upload(&app).await;
    let runs = format!("/models/{id}/runs");
    let (s, _) = call_json(&app, "POST", "/models/nope/runs", Some(json!({}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let conflict = json!({"bounds": [
        {"objective": "return", "op": ">=", "value": 0.05},
        {"objective": "return", "op": "<=", "value": 0.02},
    ]});
    let (s, e) = call_json(&app, "POST", &runs, Some(conflict)).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(e["error"], "inconsistent_bounds");
    let (s, e) = call_json(&app, "POST", &runs, Some(json!({"objectives": ["return"]}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(e["error"], "invalid_model");
    let (s, e) = call_json(&app, "POST", &runs, Some(json!({"config": {"maxit": 0}}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(e["error"], "invalid_config");
    let (s, _) = call_json(&app, "GET", "/runs/nope", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call_json(&app, "GET", "/runs/nope/archive", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn run_completes_and_persists() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(1, Some(dir.path().to_path_buf()));
    let id = upload(&app).await;
    let (s, h) = call_json(&app, "POST", &format!("/models/{id}/runs"), Some(json!({}))).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    assert_eq!(h["model_id"], id.as_str());
    assert_eq!(h["progress"]["maxit"], 10);
    let run = h["id"].as_str().unwrap().to_string();
    let done = wait(&app, &run).await;
    assert_eq!(done["state"], "done", "{done}");
    assert_eq!(done["progress"]["completed"], 10);
    assert_eq!(done["records"], 14);
    let (s, body) = call(&app, "GET", &format!("/runs/{run}/archive"), None).await;
    assert_eq!(s, StatusCode::OK);
    let art: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(art["records"].as_array().unwrap().len(), 14);
    assert_eq!(art["termination"], "completed");
    assert!(art["error"].is_null());
    let saved = std::fs::read(dir.path().join(format!("{run}.json"))).unwrap();
    assert_eq!(saved, body);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn infeasible_run_fails_with_detail() {
    let app = app(2, None);
    let id = upload(&app).await;
    let req = json!({"bounds": [{"objective": "return", "op": ">=", "value": 0.09}]});
    let (s, h) = call_json(&app, "POST", &format!("/models/{id}/runs"), Some(req)).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let run = h["id"].as_str().unwrap().to_string();
    let done = wait(&app, &run).await;
    assert_eq!(done["state"], "failed");
    assert!(done["error"].as_str().unwrap().contains("no feasible"), "{done}");
    let (_, art) = call_json(&app, "GET", &format!("/runs/{run}/archive"), None).await;
    assert_eq!(art["error"]["kind"], "infeasible");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn queued_runs_all_finish_with_identical_archives() {
    let app = app(1, None);
    let id = upload(&app).await;
    let req = json!({"config": {"maxit": 3}});
    let mut ids = Vec::new();
    for _ in 0..3 {
        let (s, h) = call_json(&app, "POST", &format!("/models/{id}/runs"), Some(req.clone())).await;
        assert_eq!(s, StatusCode::ACCEPTED);
        assert!(h["state"] == "pending" || h["state"] == "running");
        ids.push(h["id"].as_str().unwrap().to_string());
    }
    let mut bodies = Vec::new();
    for run in &ids {
        assert_eq!(wait(&app, run).await["state"], "done");
        bodies.push(call(&app, "GET", &format!("/runs/{run}/archive"), None).await.1);
    }
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
}

#[tokio::test]
async fn serve_binds_and_shuts_down() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ServiceConfig {
        bind: "127.0.0.1:0".parse().unwrap(),
        workers: 1,
        persist: Some(dir.path().join("artifacts")),
    };
    boxfront_service::serve(cfg, async {}).await.unwrap();
    assert!(dir.path().join("artifacts").is_dir());
}

#[test]
fn config_defaults() {
    let c = ServiceConfig::default();
    assert_eq!(c.workers, 2);
    assert_eq!(c.bind.port(), 8080);
}
