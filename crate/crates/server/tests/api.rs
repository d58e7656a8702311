use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use mtair_core::{parse_model_document, shipped_model, CompiledModel, ENGINE_VERSION};
use mtair_server::{app, app_with, ServerConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

fn not_app() -> Router {
    let graph = parse_model_document(include_str!("fixtures/not.mtair.json")).unwrap();
    app(CompiledModel::new(&graph).unwrap())
}

async fn call(app: &Router, method: &str, path: &str, body: Option<Value>) -> (StatusCode, String) {
    let req = Request::builder().method(method).uri(path).header("content-type", "application/json");
    let req = req.body(body.map_or(Body::empty(), |b| Body::from(b.to_string()))).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

fn parse(text: &str) -> Value {
    serde_json::from_str(text).unwrap()
}

fn summary<'a>(report: &'a Value, node: &str) -> &'a Value {
    report["summaries"].as_array().unwrap().iter().find(|s| s["node"] == node).unwrap()
}

#[tokio::test]
async fn model_lists_two_nodes_and_one_output() {
    let app = not_app();
    let (status, body) = call(&app, "GET", "/api/model", None).await;
    assert_eq!(status, StatusCode::OK);
    let v = parse(&body);
    assert_eq!(v["nodes"].as_array().unwrap().len(), 2);
    assert_eq!(v["outputs"], json!(["b"]));
    assert_eq!(v["horizon"], json!({"start": 2022, "end": 2100}));
    let (_, again) = call(&app, "GET", "/api/model", None).await;
    assert_eq!(body, again);
}

#[tokio::test]
async fn shipped_model_exposes_the_four_presets() {
    let app = app(CompiledModel::new(&shipped_model()).unwrap());
    let (status, body) = call(&app, "GET", "/api/model", None).await;
    assert_eq!(status, StatusCode::OK);
    let v = parse(&body);
    let names: Vec<&str> = v["presets"].as_object().unwrap().keys().map(String::as_str).collect();
    for name in ["Christiano", "Hanson", "Skeptic", "Yudkowsky"] {
        assert!(names.contains(&name), "{names:?}");
    }
    let node = v["nodes"].as_array().unwrap().iter().find(|n| n["id"] == "takeoff.breakthroughs").unwrap();
    for key in ["kind", "value_kind", "parents", "doc", "tags", "paper_ref", "placeholder"] {
        assert!(node.get(key).is_some(), "{key}");
    }
}

#[tokio::test]
async fn forced_value_gives_zero() {
    let app = not_app();
    let body = json!({"overrides": {"a": true}, "seed": 7, "samples": 1000});
    let (status, text) = call(&app, "POST", "/api/run", Some(body.clone())).await;
    assert_eq!(status, StatusCode::OK, "{text}");
    let v = parse(&text);
    assert_eq!(summary(&v, "b")["probability_true"], json!(0.0));
    assert_eq!(v["config"]["seed"], json!(7));
    assert_eq!(v["config"]["overrides"], json!({"a": true}));
    assert!(summary(&v, "b").get("std_error").is_some());
    let (_, again) = call(&app, "POST", "/api/run", Some(body)).await;
    assert_eq!(text, again);
}

#[tokio::test]
async fn requests_are_stateless() {
    let app = not_app();
    let plain = json!({"seed": 3, "samples": 500});
    let (_, first) = call(&app, "POST", "/api/run", Some(plain.clone())).await;
    call(&app, "POST", "/api/run", Some(json!({"overrides": {"a": false}, "seed": 3, "samples": 500}))).await;
    call(&app, "POST", "/api/sensitivity", Some(json!({"target": "b", "seed": 9, "samples": 100}))).await;
    let (_, second) = call(&app, "POST", "/api/run", Some(plain)).await;
    assert_eq!(first, second);
}

#[tokio::test]
async fn sensitivity_of_not_model() {
    let app = not_app();
    let (status, text) = call(&app, "POST", "/api/sensitivity", Some(json!({"target": "b", "cruxes": ["a"], "samples": 200, "seed": 1}))).await;
    assert_eq!(status, StatusCode::OK, "{text}");
    let v = parse(&text);
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["crux"], "a");
    assert_eq!(rows[0]["delta"], json!(-1.0));
    assert_eq!(v["config"]["seed"], json!(1));
}

#[tokio::test]
async fn error_statuses_and_fields() {
    let app = not_app();
    let cases = [
        ("/api/run", json!({"overrides": {"zz": true}}), 400, "NODE_NOT_FOUND", "overrides.zz"),
        ("/api/run", json!({"overrides": {"a": 3}}), 400, "KIND_MISMATCH", "overrides.a"),
        ("/api/run", json!({"preset": "Nobody"}), 400, "UNKNOWN_PRESET", "preset"),
        ("/api/run", json!({"samples": 200_001}), 422, "SAMPLES_OVER_CAP", "samples"),
        ("/api/run", json!({"samples": 0}), 400, "INVALID_SAMPLES", "samples"),
        ("/api/run", json!({"targets": ["nope"]}), 404, "NODE_NOT_FOUND", "targets"),
        ("/api/run", json!({"sampels": 10}), 400, "BAD_REQUEST", "sampels"),
        ("/api/sensitivity", json!({"target": "nope"}), 404, "NODE_NOT_FOUND", "target"),
        ("/api/sensitivity", json!({"samples": 10}), 400, "BAD_REQUEST", "target"),
        ("/api/sensitivity", json!({"target": "b", "cruxes": ["x"]}), 400, "NODE_NOT_FOUND", "cruxes"),
    ];
    for (path, body, status, code, field) in cases {
        let (got, text) = call(&app, "POST", path, Some(body.clone())).await;
        assert_eq!(got.as_u16(), status, "{body}: {text}");
        let v = parse(&text);
        assert_eq!(v["error"]["code"], code, "{body}");
        assert_eq!(v["error"]["field"], field, "{body}");
        assert!(v["error"]["message"].as_str().unwrap().len() > 3);
    }
}

#[tokio::test]
async fn configurable_cap() {
    let graph = parse_model_document(include_str!("fixtures/not.mtair.json")).unwrap();
    let app = app_with(CompiledModel::new(&graph).unwrap(), ServerConfig { max_samples: 10 });
    let (status, _) = call(&app, "POST", "/api/run", Some(json!({"samples": 11}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&app, "POST", "/api/run", Some(json!({"samples": 10}))).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn health_reports_engine_version() {
    let (status, text) = call(&not_app(), "GET", "/api/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(parse(&text)["engine_version"], ENGINE_VERSION);
}

#[tokio::test]
async fn cors_is_permissive() {
    let req = Request::builder()
        .method("OPTIONS")
        .uri("/api/run")
        .header("origin", "http://localhost:5173")
        .header("access-control-request-method", "POST")
        .body(Body::empty())
        .unwrap();
    let resp = not_app().oneshot(req).await.unwrap();
    assert_eq!(resp.headers()["access-control-allow-origin"], "*");
}
