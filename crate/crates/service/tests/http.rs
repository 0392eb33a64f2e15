use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use candle_core::DType;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use mst_core::model::{ModelConfig, MstModel};
use mst_core::pipeline::{run_inference, synthetic_samples, InferenceMode, OracleDetector, Sample};
use mst_core::wireframe::{lsm_indicator, threshold_wireframe, LineSegment, Wireframe};
use mst_core::{Image, MaskBitmap};
use mst_service::api::{InpaintResponse, LsmPreviewResponse};
use mst_service::{router, AppState, ServiceConfig};

fn samples() -> Vec<Sample> {
    synthetic_samples(3, 64, 21).unwrap()
}

fn state_with_budget(queue_budget: usize) -> AppState {
    let model = MstModel::new(ModelConfig::smoke(), DType::F32, 7).unwrap();
    let det = OracleDetector::new(samples().into_iter().map(|s| (s.image, s.wireframe)).collect());
    let cfg = ServiceConfig {
        queue_budget,
        ..ServiceConfig::default()
    };
    AppState::new(model, Box::new(det), cfg).unwrap()
}

fn state() -> AppState {
    state_with_budget(4)
}

fn b64(bytes: Vec<u8>) -> String {
    STANDARD.encode(bytes)
}

fn png(img: &Image) -> String {
    b64(img.to_png_bytes().unwrap())
}

fn mask_png(m: &MaskBitmap) -> String {
    b64(m.to_png_bytes().unwrap())
}

async fn call(app: Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    raw(app, req).await
}

async fn raw(app: Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, value)
}

fn decode_image(s: &str) -> Image {
    Image::read_png(STANDARD.decode(s).unwrap().as_slice()).unwrap()
}

fn inpaint_body(img: &Image, mask: &MaskBitmap, mode: &str) -> Value {
    json!({ "image": png(img), "mask": mask_png(mask), "mode": mode })
}

#[tokio::test]
async fn health_and_manifest() {
    let st = state();
    let (status, body) = call(router(st.clone()), "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    assert_eq!(body["queue_budget"], 4);

    let (status, body) = call(router(st.clone()), "GET", "/model_manifest", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["model"]["config"]["image_size"], 64);
    assert_eq!(
        body["config_digest"],
        mst_core::pipeline::config_digest(st.model()).unwrap()
    );
}

#[tokio::test]
async fn detect_lines_returns_planted_lines() {
    let s = &samples()[1];
    let (status, body) = call(router(state()), "POST", "/detect_lines", Some(json!({ "image": png(&s.image) }))).await;
    assert_eq!(status, StatusCode::OK);
    let got: mst_core::wireframe::WireframeJson = serde_json::from_value(body).unwrap();
    let expected = threshold_wireframe(&s.wireframe, 0.95).unwrap();
    assert_eq!(got, expected.to_json());
    assert!(!got.lines.is_empty());
}

#[tokio::test]
async fn detect_lines_on_single_pixel_is_empty() {
    let img = Image::filled(1, 1, [0.3, 0.4, 0.5]);
    let (status, body) = call(router(state()), "POST", "/detect_lines", Some(json!({ "image": png(&img) }))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["lines"].as_array().unwrap().len(), 0);
    assert_eq!((body["h"].as_u64(), body["w"].as_u64()), (Some(1), Some(1)));
}

#[tokio::test]
async fn malformed_payloads_are_400() {
    let app = router(state());
    let (status, _) = call(app.clone(), "POST", "/detect_lines", Some(json!({ "image": "***not base64***" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(app.clone(), "POST", "/detect_lines", Some(json!({ "image": b64(vec![1, 2, 3]) }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let req = Request::builder()
        .method("POST")
        .uri("/inpaint")
        .body(Body::from("{ not json"))
        .unwrap();
    let (status, body) = raw(app.clone(), req).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"].as_str().unwrap().contains("malformed"));
    let img = Image::filled(8, 8, [0.5; 3]);
    let (status, _) = call(app, "POST", "/inpaint", Some(inpaint_body(&img, &MaskBitmap::empty(8, 8), "sideways"))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

fn preview_case() -> (Wireframe, MaskBitmap) {
    // Hole covers the left half; line 0 lies inside it, line 1 crosses it, line 2 is clear.
    let mask = MaskBitmap::from_fn(32, 32, |_, c| c < 16);
    let lines = vec![
        LineSegment::from_coords(2.0, 2.0, 10.0, 20.0, 0.99).unwrap(),
        LineSegment::from_coords(4.0, 8.0, 28.0, 8.0, 0.98).unwrap(),
        LineSegment::from_coords(20.0, 4.0, 30.0, 30.0, 0.97).unwrap(),
    ];
    (Wireframe::new(32, 32, lines).unwrap(), mask)
}

async fn preview(m: f64) -> (StatusCode, Value) {
    let (wf, mask) = preview_case();
    let body = json!({ "wireframe": wf.to_json(), "mask": mask_png(&mask), "m": m });
    call(router(state()), "POST", "/lsm_preview", Some(body)).await
}

#[tokio::test]
async fn lsm_preview_semantics() {
    let (status, body) = preview(0.0).await;
    assert_eq!(status, StatusCode::OK);
    let r: LsmPreviewResponse = serde_json::from_value(body).unwrap();
    assert_eq!(r.lines.iter().map(|l| l.kept).collect::<Vec<_>>(), [false, true, true]);

    let (_, body) = preview(1.0).await;
    let r: LsmPreviewResponse = serde_json::from_value(body).unwrap();
    assert_eq!(r.lines.iter().map(|l| l.kept).collect::<Vec<_>>(), [false, false, true]);

    let (wf, mask) = preview_case();
    for m in [0.0, 0.3, 0.5, 1.0] {
        let (_, body) = preview(m).await;
        let r: LsmPreviewResponse = serde_json::from_value(body).unwrap();
        for (l, line) in r.lines.iter().zip(wf.lines()) {
            assert_eq!(l.indicator, lsm_indicator(line, &mask, m).unwrap());
        }
    }
}

#[tokio::test]
async fn out_of_range_probabilities_are_422() {
    for m in [-0.1, 1.5] {
        let (status, _) = preview(m).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    }
    let s = &samples()[0];
    let mut body = inpaint_body(&s.image, &s.mask, "inpaint");
    body["m_override"] = json!(2.0);
    let (status, _) = call(router(state()), "POST", "/inpaint", Some(body)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn inpaint_dimension_mismatch_is_400() {
    let s = &samples()[0];
    let body = inpaint_body(&s.image, &MaskBitmap::empty(32, 64), "inpaint");
    let (status, _) = call(router(state()), "POST", "/inpaint", Some(body)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn empty_mask_is_identity() {
    let s = &samples()[2];
    for mode in ["inpaint", "removal"] {
        let body = inpaint_body(&s.image, &MaskBitmap::empty(64, 64), mode);
        let (status, body) = call(router(state()), "POST", "/inpaint", Some(body)).await;
        assert_eq!(status, StatusCode::OK);
        let out = decode_image(body["output"].as_str().unwrap());
        assert_eq!(out.to_rgb8(), s.image.to_unit().to_rgb8());
    }
}

#[tokio::test]
async fn inpaint_is_deterministic_and_matches_library() {
    let st = state();
    let s = &samples()[0];
    let body = inpaint_body(&s.image, &s.mask, "inpaint");
    let (status, a) = call(router(st.clone()), "POST", "/inpaint", Some(body.clone())).await;
    assert_eq!(status, StatusCode::OK);
    let (_, b) = call(router(st.clone()), "POST", "/inpaint", Some(body)).await;
    let mut a: InpaintResponse = serde_json::from_value(a).unwrap();
    let mut b: InpaintResponse = serde_json::from_value(b).unwrap();
    a.timing_ms = 0.0;
    b.timing_ms = 0.0;
    assert_eq!(a, b);

    // Golden parity: the same call through the library yields the same payload.
    let image = decode_image(&png(&s.image));
    let opts = st.config().inference_options(None, vec![]);
    let lib = run_inference(st.model(), &image, &s.mask, InferenceMode::Inpaint, st.detector(), &opts).unwrap();
    let mut expected = InpaintResponse::from_output(&lib, 0.0).unwrap();
    expected.timing_ms = 0.0;
    assert_eq!(a, expected);
    assert_eq!(a.m, 1.0);
}

#[tokio::test]
async fn overrides_can_drop_every_line() {
    let st = state();
    let s = &samples()[1];
    let mask = MaskBitmap::empty(64, 64);
    let n = threshold_wireframe(&s.wireframe, 0.95).unwrap().len();
    assert!(n > 0);
    let mut body = inpaint_body(&s.image, &mask, "removal");
    body["line_overrides"] = json!((0..n).map(|i| json!([i, "drop"])).collect::<Vec<_>>());
    let (status, body) = call(router(st.clone()), "POST", "/inpaint", Some(body)).await;
    assert_eq!(status, StatusCode::OK);
    let r: InpaintResponse = serde_json::from_value(body).unwrap();
    assert_eq!(r.lines_used.lines.len(), n);
    assert!(r.lines_used.lines.iter().all(|l| !l.kept && l.overridden));

    let overrides = (0..n).map(|i| (i, false)).collect();
    let opts = st.config().inference_options(None, overrides);
    let image = decode_image(&png(&s.image));
    let lib = run_inference(st.model(), &image, &mask, InferenceMode::Removal, st.detector(), &opts).unwrap();
    assert_eq!(lib.input_lines.plane().max_value(), 0.0);
    assert_eq!(r.sketch.lines, b64(lib.sketch.lines.to_png_bytes().unwrap()));

    let mut body = inpaint_body(&s.image, &mask, "removal");
    body["line_overrides"] = json!([[n + 5, "keep"]]);
    let (status, _) = call(router(st), "POST", "/inpaint", Some(body)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

async fn wait_admitted(st: &AppState, n: usize) {
    for _ in 0..500 {
        if st.gate().admitted() == n {
            return;
        }
        tokio::time::sleep(std::time::Duration::from_millis(5)).await;
    }
    panic!("gate never reached {n} admitted requests");
}

#[tokio::test]
async fn busy_model_without_queue_is_409() {
    let st = state_with_budget(0);
    let s = &samples()[0];
    let body = inpaint_body(&s.image, &s.mask, "inpaint");
    let ticket = st.gate().try_enter().unwrap();
    let permit = st.gate().acquire().await;
    let (status, body_json) = call(router(st.clone()), "POST", "/inpaint", Some(body.clone())).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert!(body_json["error"].as_str().unwrap().contains("retry"));
    drop(permit);
    drop(ticket);
    let (status, _) = call(router(st), "POST", "/inpaint", Some(body)).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn queued_request_waits_then_overflow_is_rejected() {
    let st = state_with_budget(1);
    let s = &samples()[0];
    let body = inpaint_body(&s.image, &s.mask, "inpaint");
    let ticket = st.gate().try_enter().unwrap();
    let permit = st.gate().acquire().await;

    let queued = tokio::spawn(call(router(st.clone()), "POST", "/inpaint", Some(body.clone())));
    wait_admitted(&st, 2).await;
    let (status, _) = call(router(st.clone()), "POST", "/inpaint", Some(body)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert!(!queued.is_finished());

    drop(permit);
    drop(ticket);
    let (status, _) = queued.await.unwrap();
    assert_eq!(status, StatusCode::OK);
    assert_eq!(st.gate().admitted(), 0);
}
