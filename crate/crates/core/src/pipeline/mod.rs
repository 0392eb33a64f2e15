//! Data, metrics, detection, inference and evaluation around the model.

mod corpus;
mod detector;
mod inference;
mod metrics;
mod scene;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::imaging::{CannyConfig, Image};
use crate::model::MstModel;
use crate::trainer::TrainingScene;

pub use corpus::{
    cache_path, cached_wireframe, item_seeds, make_synthetic_corpus, precompute_wireframes,
    synthetic_samples, Corpus, CorpusEntry, CorpusManifest, PrecomputeReport, Sample, Thresholds,
    CACHE_DIR, CORPUS_VERSION,
};
pub use detector::{
    detector_error, image_digest, Corruption, FixedDetector, FnDetector, NullDetector,
    OracleDetector, WireframeDetector, ORACLE_MIN_AGREEMENT,
};
pub use inference::{
    decide_lines, run_inference, InferenceMode, InferenceOptions, InferenceOutput, LineDecision,
};
pub use metrics::{binary_iou, psnr, ssim, ssim_planes, PSNR_CAP, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW};
pub use scene::{SyntheticScene, PLANTED_SCORE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub id: String,
    pub psnr: f64,
    pub ssim: f64,
    /// Metrics of the corrupted input (holes painted white) against the truth.
    pub baseline_psnr: f64,
    pub baseline_ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub mean_baseline_psnr: f64,
    pub mean_baseline_ssim: f64,
    pub sap: Option<f64>,
    pub config_digest: String,
}

impl EvalReport {
    pub fn from_rows(rows: Vec<EvalRow>, config_digest: String) -> Self {
        let n = rows.len().max(1) as f64;
        let mean = |f: fn(&EvalRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        Self {
            mean_psnr: mean(|r| r.psnr),
            mean_ssim: mean(|r| r.ssim),
            mean_baseline_psnr: mean(|r| r.baseline_psnr),
            mean_baseline_ssim: mean(|r| r.baseline_ssim),
            rows,
            sap: None,
            config_digest,
        }
    }
}

/// SHA-256 of the model manifest, identifying the architecture an evaluation used.
pub fn config_digest(model: &MstModel) -> Result<String> {
    let json = serde_json::to_string(&model.manifest())?;
    Ok(hex::encode(Sha256::digest(json.as_bytes())))
}

/// Inpaints every sample with its own mask and scores the composited output.
pub fn evaluate(
    model: &MstModel,
    samples: &[Sample],
    mode: InferenceMode,
    detector: &dyn WireframeDetector,
    opts: &InferenceOptions,
) -> Result<EvalReport> {
    let mut rows = Vec::with_capacity(samples.len());
    for s in samples {
        let out = run_inference(model, &s.image, &s.mask, mode, detector, opts)?;
        let truth = s.image.to_unit();
        let corrupted = truth.masked_white(&s.mask)?;
        rows.push(EvalRow {
            id: s.id.clone(),
            psnr: psnr(&out.output, &truth)?,
            ssim: ssim(&out.output, &truth)?,
            baseline_psnr: psnr(&corrupted, &truth)?,
            baseline_ssim: ssim(&corrupted, &truth)?,
        });
    }
    Ok(EvalReport::from_rows(rows, config_digest(model)?))
}

/// Training scenes from samples, with each wireframe thresholded the way the cache is.
pub fn training_scenes(samples: &[Sample], tau: f64, canny: &CannyConfig) -> Result<Vec<TrainingScene>> {
    samples
        .iter()
        .map(|s| {
            let wf = crate::wireframe::threshold_wireframe(&s.wireframe, tau)?;
            TrainingScene::new(s.image.clone(), wf, canny)
        })
        .collect()
}

/// Loads every corpus image with its cached wireframe; errors if the cache is incomplete.
pub fn training_scenes_from_cache(corpus: &Corpus, tau: f64, canny: &CannyConfig) -> Result<Vec<TrainingScene>> {
    let dir = corpus.cache_dir();
    corpus
        .manifest()
        .entries
        .iter()
        .map(|e| {
            let image = Image::load(corpus.image_path(&e.id))?;
            let wf = cached_wireframe(&dir, &image, tau)?.ok_or_else(|| {
                Error::InvalidInput(format!(
                    "no cached wireframe for {} at threshold {tau}; run precompute-wf first",
                    e.id
                ))
            })?;
            TrainingScene::new(image, wf, canny)
        })
        .collect()
}
