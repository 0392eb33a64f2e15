//! Single-image inpainting and object removal with a trained model.

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::imaging::{masked_edges, normalize_input, CannyConfig, Image, LineMap, Plane, ValueDomain};
use crate::mask::MaskBitmap;
use crate::model::{EncoderInput, MstModel, SketchTensor};
use crate::nn::Mode;
use crate::trainer::{schedule_m, Stage, TrainConfig};
use crate::wireframe::{lsm_decisions, lsm_indicator, rasterize_lines, threshold_wireframe, LineSegment, Wireframe};

use super::corpus::Thresholds;
use super::detector::WireframeDetector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InferenceMode {
    /// Lines detected on the corrupted image; every line touching the hole is dropped.
    Inpaint,
    /// Lines detected on the clean image; only lines wholly inside the hole are dropped.
    Removal,
}

impl InferenceMode {
    pub fn m(self) -> f64 {
        let stage = match self {
            Self::Inpaint => Stage::Inpaint,
            Self::Removal => Stage::Removal,
        };
        schedule_m(stage, &TrainConfig::default())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InferenceOptions {
    pub m_override: Option<f64>,
    /// `(line index, keep)` pairs applied after LSM.
    pub line_overrides: Vec<(usize, bool)>,
    pub thresholds: Thresholds,
    pub lsm_seed: u64,
    pub canny: CannyConfig,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        Self {
            m_override: None,
            line_overrides: Vec::new(),
            thresholds: Thresholds::default(),
            lsm_seed: 0,
            canny: CannyConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineDecision {
    pub line: LineSegment,
    pub indicator: f64,
    pub kept: bool,
    pub overridden: bool,
}

#[derive(Clone, Debug)]
pub struct InferenceOutput {
    /// Prediction composited into the hole, `[0, 1]`.
    pub output: Image,
    /// Full-frame network prediction, `[0, 1]`.
    pub raw: Image,
    pub sketch: SketchTensor,
    pub decisions: Vec<LineDecision>,
    /// Line map fed to the encoder.
    pub input_lines: LineMap,
    pub m: f64,
}

/// Detected lines with their LSM indicator and keep/drop outcome under `m`, with any
/// per-line overrides applied last.
pub fn decide_lines(
    wf: &Wireframe,
    mask: &MaskBitmap,
    m: f64,
    seed: u64,
    overrides: &[(usize, bool)],
) -> Result<Vec<LineDecision>> {
    let keep = lsm_decisions(wf, mask, m, seed)?;
    let mut decisions = wf
        .lines()
        .iter()
        .zip(keep)
        .map(|(l, kept)| {
            Ok(LineDecision {
                line: *l,
                indicator: lsm_indicator(l, mask, m)?,
                kept,
                overridden: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for &(i, keep) in overrides {
        let d = decisions.get_mut(i).ok_or_else(|| {
            Error::InvalidInput(format!("line override index {i} out of range ({} lines)", wf.len()))
        })?;
        d.kept = keep;
        d.overridden = true;
    }
    Ok(decisions)
}

fn pad_plane(p: &Plane, h: usize, w: usize) -> Plane {
    let (ph, pw) = p.dims();
    Plane::from_fn(h, w, |r, c| p.get(r.min(ph - 1), c.min(pw - 1)))
}

/// Edge-replicated padding; only the raw values matter (the domain tag is not kept).
fn pad_image(img: &Image, h: usize, w: usize) -> Image {
    let (ih, iw) = img.dims();
    Image::from_fn(h, w, |r, c| img.pixel(r.min(ih - 1), c.min(iw - 1)))
}

fn to_tensor(data: Vec<f32>, c: usize, h: usize, w: usize) -> Result<Tensor> {
    Ok(Tensor::from_vec(data, (1, c, h, w), &Device::Cpu)?)
}

fn crop_plane(t: &Tensor, h: usize, w: usize) -> Result<Plane> {
    let t = t.narrow(2, 0, h)?.narrow(3, 0, w)?.to_dtype(DType::F32)?;
    Plane::from_vec(h, w, t.flatten_all()?.to_vec1()?)
}

/// Runs detection, LSM, the encoder and the decoder on one image. Inputs whose sides are
/// not multiples of 4 are edge-padded and the result cropped back.
pub fn run_inference(
    model: &MstModel,
    image: &Image,
    mask: &MaskBitmap,
    mode: InferenceMode,
    detector: &dyn WireframeDetector,
    opts: &InferenceOptions,
) -> Result<InferenceOutput> {
    let image = image.to_unit();
    let (h, w) = image.dims();
    if mask.dims() != (h, w) {
        return Err(shape_err(format!("{h}x{w} mask"), format!("{:?}", mask.dims())));
    }
    if h == 0 || w == 0 {
        return Err(Error::InvalidInput("empty image".into()));
    }
    let m = opts.m_override.unwrap_or_else(|| mode.m());
    if !(0.0..=1.0).contains(&m) {
        return Err(Error::InvalidProbability(m));
    }
    let (seen, tau) = match mode {
        InferenceMode::Inpaint => (image.masked_white(mask)?, opts.thresholds.masked),
        InferenceMode::Removal => (image.clone(), opts.thresholds.unmasked),
    };
    let detected = threshold_wireframe(&detector.detect(&seen)?, tau)?;
    let decisions = decide_lines(&detected, mask, m, opts.lsm_seed, &opts.line_overrides)?;
    let keep: Vec<bool> = decisions.iter().map(|d| d.kept).collect();
    let input_lines = rasterize_lines(&detected.select(&keep)?, h, w)?;
    let edges = masked_edges(&image, mask, &opts.canny)?;
    let input = normalize_input(&image, mask)?;

    let (ph, pw) = (h.div_ceil(4) * 4, w.div_ceil(4) * 4);
    let input_t = to_tensor(pad_image(&input, ph, pw).to_chw(), 3, ph, pw)?;
    let mask_t = to_tensor(pad_plane(&mask.to_plane(), ph, pw).into_vec(), 1, ph, pw)?;
    let lines_t = to_tensor(pad_plane(input_lines.plane(), ph, pw).into_vec(), 1, ph, pw)?;
    let edges_t = to_tensor(pad_plane(edges.plane(), ph, pw).into_vec(), 1, ph, pw)?;
    let dtype = model.dtype();
    let (input_t, mask_t) = (input_t.to_dtype(dtype)?, mask_t.to_dtype(dtype)?);

    let enc = model.encoder.forward(
        &EncoderInput {
            image: &input_t,
            mask: &mask_t,
            lines: &lines_t.to_dtype(dtype)?,
            edges: &edges_t.to_dtype(dtype)?,
        },
        Mode::Eval,
    )?;
    let pred = model.decoder.forward(&input_t, &mask_t, &enc.sketch, Mode::Eval)?;
    let pred = pred.narrow(2, 0, h)?.narrow(3, 0, w)?.to_dtype(DType::F32)?;
    let chw: Vec<f32> = pred.flatten_all()?.to_vec1()?;
    let unit: Vec<f32> = chw.iter().map(|v| ((v + 1.0) * 0.5).clamp(0.0, 1.0)).collect();
    let raw = Image::from_chw(h, w, ValueDomain::Unit, &unit)?;
    let output = image.composite(&raw, mask)?;

    let sk = enc.sketch;
    let sketch = SketchTensor {
        lines: crop_plane(&sk.narrow(1, 0, 1)?, h, w)?,
        edges: crop_plane(&sk.narrow(1, 1, 1)?, h, w)?,
        combined: crop_plane(&sk.narrow(1, 2, 1)?, h, w)?,
    };
    Ok(InferenceOutput {
        output,
        raw,
        sketch,
        decisions,
        input_lines,
        m,
    })
}
