//! HTTP front end over the inpainting library.
//!
//! Every handler decodes its payload, calls the matching library function and encodes the
//! result; nothing is computed here that the library does not also expose. Model forwards
//! are serialized through a [`Gate`]: one runs at a time, up to `queue_budget` wait in FIFO
//! order, and anything beyond that is rejected with `409 Conflict` so clients can retry.

pub mod api;
pub mod error;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::State;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::{Semaphore, SemaphorePermit};

use mst_core::imaging::CannyConfig;
use mst_core::model::{ModelManifest, MstModel};
use mst_core::pipeline::{
    config_digest, run_inference, Corpus, InferenceOptions, NullDetector, OracleDetector, Thresholds,
    WireframeDetector,
};
use mst_core::wireframe::{lsm_indicator, threshold_wireframe, Wireframe, WireframeJson};

use api::{
    decode_image, decode_mask, DetectRequest, Health, InpaintRequest, InpaintResponse, LinePreview,
    LsmPreviewRequest, LsmPreviewResponse,
};
use error::ApiError;

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_QUEUE_BUDGET: usize = 8;

/// Admission control for model forwards.
pub struct Gate {
    slot: Semaphore,
    admitted: AtomicUsize,
    queue_budget: usize,
}

/// Holds a place in line (running or waiting); releases it on drop.
pub struct Ticket<'a>(&'a Gate);

impl Drop for Ticket<'_> {
    fn drop(&mut self) {
        self.0.admitted.fetch_sub(1, Ordering::SeqCst);
    }
}

impl Gate {
    pub fn new(queue_budget: usize) -> Self {
        Self {
            slot: Semaphore::new(1),
            admitted: AtomicUsize::new(0),
            queue_budget,
        }
    }

    /// Requests currently running or waiting.
    pub fn admitted(&self) -> usize {
        self.admitted.load(Ordering::SeqCst)
    }

    pub fn queue_budget(&self) -> usize {
        self.queue_budget
    }

    /// Takes a place in line, or `None` when one forward is running and the queue is full.
    pub fn try_enter(&self) -> Option<Ticket<'_>> {
        let prev = self.admitted.fetch_add(1, Ordering::SeqCst);
        if prev > self.queue_budget {
            self.admitted.fetch_sub(1, Ordering::SeqCst);
            return None;
        }
        Some(Ticket(self))
    }

    /// Waits (FIFO) for the single model slot.
    pub async fn acquire(&self) -> SemaphorePermit<'_> {
        self.slot.acquire().await.expect("gate semaphore is never closed")
    }
}

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub queue_budget: usize,
    pub thresholds: Thresholds,
    pub lsm_seed: u64,
    pub canny: CannyConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            queue_budget: DEFAULT_QUEUE_BUDGET,
            thresholds: Thresholds::default(),
            lsm_seed: 0,
            canny: CannyConfig::default(),
        }
    }
}

impl ServiceConfig {
    pub fn inference_options(&self, m_override: Option<f64>, line_overrides: Vec<(usize, bool)>) -> InferenceOptions {
        InferenceOptions {
            m_override,
            line_overrides,
            thresholds: self.thresholds,
            lsm_seed: self.lsm_seed,
            canny: self.canny.clone(),
        }
    }
}

struct Inner {
    model: MstModel,
    detector: Box<dyn WireframeDetector>,
    config: ServiceConfig,
    gate: Gate,
    checkpoint_step: Option<u64>,
    config_digest: String,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(model: MstModel, detector: Box<dyn WireframeDetector>, config: ServiceConfig) -> mst_core::Result<Self> {
        let digest = config_digest(&model)?;
        Ok(Self(Arc::new(Inner {
            model,
            detector,
            gate: Gate::new(config.queue_budget),
            config,
            checkpoint_step: None,
            config_digest: digest,
        })))
    }

    pub fn with_checkpoint_step(self, step: u64) -> Self {
        let inner = Arc::try_unwrap(self.0).unwrap_or_else(|_| panic!("state already shared"));
        Self(Arc::new(Inner {
            checkpoint_step: Some(step),
            ..inner
        }))
    }

    pub fn model(&self) -> &MstModel {
        &self.0.model
    }

    pub fn detector(&self) -> &dyn WireframeDetector {
        self.0.detector.as_ref()
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.0.config
    }

    pub fn gate(&self) -> &Gate {
        &self.0.gate
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/model_manifest", get(model_manifest))
        .route("/detect_lines", post(detect_lines))
        .route("/lsm_preview", post(lsm_preview))
        .route("/inpaint", post(inpaint))
        .with_state(state)
}

/// Body parsing that reports every malformed payload as `400`.
fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed request: {e}")))
}

fn check_probability(name: &str, m: f64) -> Result<(), ApiError> {
    if (0.0..=1.0).contains(&m) {
        Ok(())
    } else {
        Err(ApiError::unprocessable(format!("{name} must lie in [0, 1], got {m}")))
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))
}

async fn health(State(st): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        queue_budget: st.gate().queue_budget(),
        in_flight: st.gate().admitted(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestResponse {
    pub model: ModelManifest,
    pub config_digest: String,
    pub checkpoint_step: Option<u64>,
}

async fn model_manifest(State(st): State<AppState>) -> Json<ManifestResponse> {
    Json(ManifestResponse {
        model: st.model().manifest(),
        config_digest: st.0.config_digest.clone(),
        checkpoint_step: st.0.checkpoint_step,
    })
}

async fn detect_lines(State(st): State<AppState>, body: Bytes) -> Result<Json<WireframeJson>, ApiError> {
    let req: DetectRequest = parse(&body)?;
    let tau = req.tau.unwrap_or(st.config().thresholds.unmasked);
    check_probability("tau", tau)?;
    let image = decode_image("image", &req.image)?.to_unit();
    let wf = blocking(move || -> mst_core::Result<Wireframe> {
        let wf = st.detector().detect(&image)?;
        threshold_wireframe(&wf, tau)
    })
    .await??;
    Ok(Json(wf.to_json()))
}

async fn lsm_preview(body: Bytes) -> Result<Json<LsmPreviewResponse>, ApiError> {
    let req: LsmPreviewRequest = parse(&body)?;
    check_probability("m", req.m)?;
    let wf = Wireframe::from_json(&req.wireframe)?;
    let mask = decode_mask("mask", &req.mask)?;
    if wf.image_size() != mask.dims() {
        return Err(ApiError::bad_request(format!(
            "wireframe is {:?} but mask is {:?}",
            wf.image_size(),
            mask.dims()
        )));
    }
    let lines = wf
        .lines()
        .iter()
        .enumerate()
        .map(|(index, line)| {
            let indicator = lsm_indicator(line, &mask, req.m)?;
            Ok(LinePreview {
                index,
                indicator,
                kept: indicator < 0.5,
            })
        })
        .collect::<mst_core::Result<Vec<_>>>()?;
    Ok(Json(LsmPreviewResponse { m: req.m, lines }))
}

async fn inpaint(State(st): State<AppState>, body: Bytes) -> Result<Json<InpaintResponse>, ApiError> {
    let req: InpaintRequest = parse(&body)?;
    if let Some(m) = req.m_override {
        check_probability("m_override", m)?;
    }
    let image = decode_image("image", &req.image)?;
    let mask = decode_mask("mask", &req.mask)?;
    if image.dims() != mask.dims() {
        return Err(ApiError::bad_request(format!(
            "image is {:?} but mask is {:?}",
            image.dims(),
            mask.dims()
        )));
    }
    let opts = st.config().inference_options(req.m_override, req.overrides());
    let mode = req.mode;

    let gate = st.gate();
    let _ticket = gate.try_enter().ok_or_else(ApiError::busy)?;
    let _permit = gate.acquire().await;
    let worker = st.clone();
    let out = blocking(move || {
        let t0 = Instant::now();
        let out = run_inference(worker.model(), &image, &mask, mode, worker.detector(), &opts);
        out.map(|o| (o, t0.elapsed().as_secs_f64() * 1e3))
    })
    .await??;
    Ok(Json(InpaintResponse::from_output(&out.0, out.1)?))
}

/// Startup settings, usually taken from `SKETCH_PORT`, `SKETCH_CKPT`, `SKETCH_CORPUS` and
/// `SKETCH_QUEUE`.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub port: u16,
    pub checkpoint: PathBuf,
    /// Synthetic corpus backing the oracle line detector; without one no lines are detected.
    pub corpus: Option<PathBuf>,
    pub queue_budget: usize,
}

impl Settings {
    pub fn from_env() -> Result<Self, String> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        let port = match var("SKETCH_PORT") {
            Some(p) => p.parse().map_err(|e| format!("SKETCH_PORT={p}: {e}"))?,
            None => DEFAULT_PORT,
        };
        let checkpoint = var("SKETCH_CKPT").ok_or("SKETCH_CKPT is not set")?.into();
        let queue_budget = match var("SKETCH_QUEUE") {
            Some(q) => q.parse().map_err(|e| format!("SKETCH_QUEUE={q}: {e}"))?,
            None => DEFAULT_QUEUE_BUDGET,
        };
        Ok(Self {
            port,
            checkpoint,
            corpus: var("SKETCH_CORPUS").map(PathBuf::from),
            queue_budget,
        })
    }
}

/// Loads the checkpoint and detector named by `settings`.
pub fn load_state(settings: &Settings) -> mst_core::Result<AppState> {
    let ckpt = mst_core::trainer::Checkpoint::load(&settings.checkpoint)?;
    let model = ckpt.into_model()?;
    let detector: Box<dyn WireframeDetector> = match &settings.corpus {
        Some(root) => {
            let corpus = Corpus::open(root)?;
            let scenes = corpus
                .samples()?
                .into_iter()
                .map(|s| (s.image, s.wireframe))
                .collect();
            Box::new(OracleDetector::new(scenes))
        }
        None => {
            log::warn!("no corpus given; line detection returns empty wireframes");
            Box::new(NullDetector)
        }
    };
    let config = ServiceConfig {
        queue_budget: settings.queue_budget,
        ..ServiceConfig::default()
    };
    Ok(AppState::new(model, detector, config)?.with_checkpoint_step(ckpt.manifest.step))
}

/// Serves until ctrl-c.
pub async fn serve(state: AppState, port: u16) -> std::io::Result<()> {
    let addr = SocketAddr::from(([0, 0, 0, 0], port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
