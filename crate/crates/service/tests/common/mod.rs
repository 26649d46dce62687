#![allow(dead_code)]

pub mod model_check;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use fairloop_core::artifacts::{default_report_config, prepare, Baseline};
use fairloop_core::data::SplitMode;
use fairloop_core::gbdt::GbdtParams;
use fairloop_core::synth::{generate, schema_config, SynthConfig};
use fairloop_service::{router, AppState, Loaded};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub fn small_baseline(seed: u64) -> Baseline {
    let raw = generate(&SynthConfig {
        n: 400,
        seed,
        ..SynthConfig::default()
    })
    .unwrap();
    let prepared = prepare(&raw, schema_config(), SplitMode::Stratified { n_train: 200, n_test: 200 }, 40, seed).unwrap();
    let rc = default_report_config(&prepared.config, &prepared.train, None).unwrap();
    let params = GbdtParams {
        n_trees: 15,
        max_depth: 3,
        learning_rate: 0.3,
        ..GbdtParams::default()
    };
    Baseline::train(prepared, params, rc, seed).unwrap()
}

pub fn loaded_state(store: Option<fairloop_service::store::SessionStore>) -> (Arc<AppState>, Baseline) {
    let b = small_baseline(4);
    let st = AppState::new(store);
    st.set_baseline(Loaded::from_baseline(&b).unwrap());
    (st, b)
}

pub async fn call(st: &Arc<AppState>, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(serde_json::to_vec(&b).unwrap())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = router(st.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

pub async fn create(st: &Arc<AppState>) -> String {
    let (s, v) = call(st, Method::POST, "/sessions", Some(serde_json::json!({"participant_id": "p1"}))).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

pub async fn applications(st: &Arc<AppState>, id: &str, query: &str) -> Vec<Value> {
    let (s, v) = call(st, Method::GET, &format!("/sessions/{id}/applications{query}"), None).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    v["applications"].as_array().unwrap().clone()
}

pub async fn feedback(st: &Arc<AppState>, id: &str, body: Value) -> (StatusCode, Value) {
    call(st, Method::POST, &format!("/sessions/{id}/feedback"), Some(body)).await
}

/// First application with the given displayed prediction.
pub async fn find(st: &Arc<AppState>, id: &str, prediction: &str, skip: usize) -> String {
    let apps = applications(st, id, &format!("?filter=prediction={prediction},locked=false")).await;
    apps[skip]["application_id"].as_str().unwrap().to_string()
}
