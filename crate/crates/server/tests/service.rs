use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use lisennet_api as api;
use lisennet_core::io::encode_lsnw;
use lisennet_core::model::{count_params, enhance_waveform_with, noise_detect, Model, ModelConfig};
use lisennet_core::runtime::{enhance_streaming, StreamOptions};
use lisennet_core::synth::white_noise;
use lisennet_server::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

fn app_with(model: Model) -> (Router, Arc<AppState>) {
    let st = AppState::new(model);
    (router(st.clone()), st)
}

fn app() -> Router {
    app_with(Model::new(ModelConfig::default(), 7).unwrap()).0
}

async fn call(app: &Router, method: Method, path: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(path);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(serde_json::to_vec(&v).unwrap())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

fn samples(v: &Value) -> Vec<f64> {
    serde_json::from_value(v["samples"].clone()).unwrap()
}

#[tokio::test]
async fn health_and_unknown_route() {
    let app = app();
    let (s, v) = call(&app, Method::GET, "/health", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "ok");
    let (s, v) = call(&app, Method::GET, "/v1/nothing", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["kind"], "not_found");
}

#[tokio::test]
async fn params_and_macs_match_the_engine() {
    let model = Model::new(ModelConfig::default(), 7).unwrap();
    let p = count_params(&model);
    let app = app();
    let (s, v) = call(&app, Method::GET, api::paths::PARAMS, None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["total"], p.total);
    assert_eq!(v["enhancer"], p.enhancer);

    let (_, tiny) = call(&app, Method::POST, api::paths::PARAMS, Some(json!({"model": {"preset": "tiny"}}))).await;
    assert!(tiny["total"].as_u64().unwrap() < p.total as u64);

    let (s, v) = call(&app, Method::POST, api::paths::MACS, Some(json!({"seconds": 2.0}))).await;
    assert_eq!(s, StatusCode::OK);
    let total = v["total"].as_f64().unwrap();
    assert!((total - 2.0 * (v["enhancer_per_frame"].as_f64().unwrap() + v["detector_per_frame"].as_f64().unwrap()) * 62.5).abs() < 1e-6);
    let (s, _) = call(&app, Method::POST, api::paths::MACS, Some(json!({"seconds": -1.0}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn enhance_paths_match_the_engine() {
    let model = Model::new(ModelConfig::default(), 7).unwrap();
    let x = white_noise(4000, 0.2, 1);
    let app = app();

    let (s, v) = call(&app, Method::POST, api::paths::ENHANCE, Some(json!({"samples": x, "gla_iters": 2}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(samples(&v), enhance_waveform_with(&model, &x, 2).unwrap());

    let (_, v) = call(&app, Method::POST, api::paths::ENHANCE, Some(json!({"samples": x, "streaming": true}))).await;
    let m = Arc::new(model);
    assert_eq!(samples(&v), enhance_streaming(&m, &x, StreamOptions::default()).unwrap());

    let (s, v) = call(&app, Method::POST, api::paths::ENHANCE, Some(json!({"samples": x, "nd": true}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(samples(&v).len(), x.len());
}

#[tokio::test]
async fn uploaded_weights_are_used_and_checked() {
    let tiny = Model::new(ModelConfig::tiny(), 3).unwrap();
    let bytes = encode_lsnw(&tiny).unwrap();
    let x = white_noise(500, 0.2, 2);
    let app = app();
    let body = api::EnhanceRequest {
        model: api::ModelRef {
            weights: Some(api::Lsnw(bytes.clone())),
            ..Default::default()
        },
        samples: x.clone(),
        gla_iters: 0,
        ..Default::default()
    };
    let (s, v) = call(&app, Method::POST, api::paths::ENHANCE, Some(serde_json::to_value(&body).unwrap())).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(samples(&v), enhance_waveform_with(&tiny, &x, 0).unwrap());

    let mut bad = bytes;
    let n = bad.len();
    bad[n - 20] ^= 1;
    let body = api::DetectRequest {
        model: api::ModelRef {
            weights: Some(api::Lsnw(bad)),
            ..Default::default()
        },
        samples: x,
        ..Default::default()
    };
    let (s, v) = call(&app, Method::POST, api::paths::DETECT, Some(serde_json::to_value(&body).unwrap())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["kind"], "checksum");
}

#[tokio::test]
async fn bad_requests_get_json_errors() {
    let app = app();
    let (s, v) = call(&app, Method::POST, api::paths::ENHANCE, Some(json!({"samples": [0.0, 0.1], "sample_rate": 8000}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["kind"], "sample_rate");
    assert!(v["message"].as_str().unwrap().contains("expected 16000 Hz"));

    let (s, v) = call(&app, Method::POST, api::paths::ENHANCE, Some(json!({"samples": []}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["kind"], "empty_input");

    let req = Request::builder()
        .method(Method::POST)
        .uri(api::paths::DETECT)
        .header("content-type", "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
    let v: Value = serde_json::from_slice(&resp.into_body().collect().await.unwrap().to_bytes()).unwrap();
    assert_eq!(v["kind"], "invalid_json");

    let (s, v) = call(&app, Method::POST, api::paths::DETECT, Some(json!({"samples": "loud"}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["kind"], "invalid_body");
}

#[tokio::test]
async fn detect_covers_every_frame() {
    let model = Model::new(ModelConfig::default(), 7).unwrap();
    let x = white_noise(3000, 0.2, 4);
    let (s, v) = call(&app(), Method::POST, api::paths::DETECT, Some(json!({"samples": x}))).await;
    assert_eq!(s, StatusCode::OK);
    let r: api::DetectResponse = serde_json::from_value(v).unwrap();
    let want = noise_detect(&model, &x).unwrap();
    assert_eq!(r.flags, want.flags);
    assert_eq!(r.probs, want.probs);
}

#[tokio::test]
async fn gradcheck_reports_every_layer_kind() {
    let (s, v) = call(&app(), Method::POST, api::paths::GRADCHECK, Some(json!({"seed": 1, "probes": 4}))).await;
    assert_eq!(s, StatusCode::OK);
    let r: api::GradcheckResponse = serde_json::from_value(v).unwrap();
    assert_eq!(r.layers.len(), 11);
    assert!(r.layers.iter().all(|l| l.max_rel_err <= 1e-3));
    assert!(r.model <= 5e-3);
    let (s, _) = call(&app(), Method::POST, api::paths::GRADCHECK, Some(json!({"probes": 0}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn micro_training_returns_usable_weights() {
    let body = json!({"model": {"preset": "tiny", "seed": 2}, "steps": 30, "seed": 3, "lr0": 5e-3, "return_weights": true});
    let (s, v) = call(&app(), Method::POST, api::paths::TRAIN_MICRO, Some(body.clone())).await;
    assert_eq!(s, StatusCode::OK);
    let r: api::TrainResponse = serde_json::from_value(v).unwrap();
    assert_eq!(r.losses.len(), 30);
    assert!(r.losses[29] < r.losses[0]);
    assert!(r.clipped_norms.iter().all(|&n| n <= 5.0 + 1e-6));
    let w = r.weights.unwrap();
    let m = lisennet_core::io::decode_lsnw(&w.0, std::path::Path::new("t")).unwrap();
    assert_eq!(m.config(), &ModelConfig::tiny());

    // same seed, same curve
    let (_, v2) = call(&app(), Method::POST, api::paths::TRAIN_MICRO, Some(body)).await;
    let r2: api::TrainResponse = serde_json::from_value(v2).unwrap();
    assert_eq!(r.losses, r2.losses);

    let (s, _) = call(&app(), Method::POST, api::paths::TRAIN_MICRO, Some(json!({"lr0": -1.0}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn bench_rows_follow_the_request() {
    let body = json!({"noise_proportions": [0.0, 1.0], "seconds": 1.0, "repeats": 1, "nd": true, "fit_detector_steps": 60, "seed": 2});
    let (s, v) = call(&app(), Method::POST, api::paths::BENCH_RTF, Some(body)).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let r: api::BenchResponse = serde_json::from_value(v).unwrap();
    assert_eq!(r.rows.len(), 2);
    assert_eq!(r.rows[0].proportion, 0.0);
    assert!(r.rows.iter().all(|row| row.rtf > 0.0 && row.repeats == 1));
    assert!(r.rows[0].macs_effective <= r.rows[1].macs_effective);

    let (s, _) = call(&app(), Method::POST, api::paths::BENCH_RTF, Some(json!({"noise_proportions": [1.5]}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app(), Method::POST, api::paths::BENCH_RTF, Some(json!({"seconds": 0.5}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn stream_lifecycle() {
    let model = Model::new(ModelConfig::default(), 7).unwrap();
    let (app, st) = app_with(model.clone());
    let x = white_noise(5000, 0.2, 5);

    let (s, v) = call(&app, Method::POST, api::paths::STREAMS, Some(json!({}))).await;
    assert_eq!(s, StatusCode::CREATED);
    let open: api::OpenStreamResponse = serde_json::from_value(v).unwrap();
    assert_eq!(open.latency_samples, 256);
    assert_eq!(st.open_streams(), 1);

    let mut y = Vec::new();
    for chunk in x.chunks(700) {
        let (s, v) = call(&app, Method::POST, &api::paths::stream_push(open.id), Some(json!({"samples": chunk}))).await;
        assert_eq!(s, StatusCode::OK);
        y.extend(samples(&v));
    }
    let (s, v) = call(&app, Method::POST, &api::paths::stream_finish(open.id), None).await;
    assert_eq!(s, StatusCode::OK);
    let fin: api::FinishResponse = serde_json::from_value(v).unwrap();
    y.extend(fin.samples);
    assert_eq!(fin.stats.samples_in, x.len());
    assert_eq!(y, enhance_streaming(&Arc::new(model), &x, StreamOptions::default()).unwrap());
    assert_eq!(st.open_streams(), 0);

    let (s, _) = call(&app, Method::POST, &api::paths::stream_push(open.id), Some(json!({"samples": [0.0]}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (_, v) = call(&app, Method::POST, api::paths::STREAMS, Some(json!({"nd": true, "gla": {"buffered": 2}}))).await;
    let open: api::OpenStreamResponse = serde_json::from_value(v).unwrap();
    assert_eq!(open.latency_samples, 1280);
    let (s, _) = call(&app, Method::DELETE, &api::paths::stream(open.id), None).await;
    assert_eq!(s, StatusCode::NO_CONTENT);
    let (s, _) = call(&app, Method::DELETE, &api::paths::stream(open.id), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}
