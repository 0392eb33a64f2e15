//! Wire types. Images travel as base64-encoded PNG; wireframes use the shared JSON layout.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use mst_core::pipeline::{InferenceMode, InferenceOutput, LineDecision};
use mst_core::wireframe::WireframeJson;
use mst_core::{Image, MaskBitmap};

use crate::error::ApiError;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DetectRequest {
    pub image: String,
    /// Score threshold; defaults to the service's unmasked-image threshold.
    #[serde(default)]
    pub tau: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LsmPreviewRequest {
    pub wireframe: WireframeJson,
    pub mask: String,
    pub m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinePreview {
    pub index: usize,
    /// Masking probability of the line under `m`.
    pub indicator: f64,
    /// Expected-value outcome: kept when the indicator is below one half.
    pub kept: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LsmPreviewResponse {
    pub m: f64,
    pub lines: Vec<LinePreview>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineAction {
    Keep,
    Drop,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InpaintRequest {
    pub image: String,
    pub mask: String,
    pub mode: InferenceMode,
    #[serde(default)]
    pub m_override: Option<f64>,
    /// `[line index, "keep" | "drop"]` pairs applied after line segment masking.
    #[serde(default)]
    pub line_overrides: Option<Vec<(usize, LineAction)>>,
}

impl InpaintRequest {
    pub fn overrides(&self) -> Vec<(usize, bool)> {
        self.line_overrides
            .iter()
            .flatten()
            .map(|&(i, a)| (i, a == LineAction::Keep))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SketchPanels {
    pub lines: String,
    pub edges: String,
    pub combined: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UsedLine {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub score: f64,
    pub indicator: f64,
    pub kept: bool,
    pub overridden: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinesUsed {
    pub h: usize,
    pub w: usize,
    pub lines: Vec<UsedLine>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InpaintResponse {
    pub output: String,
    pub sketch: SketchPanels,
    pub lines_used: LinesUsed,
    pub m: f64,
    pub timing_ms: f64,
}

impl InpaintResponse {
    pub fn from_output(out: &InferenceOutput, timing_ms: f64) -> Result<Self, ApiError> {
        let (h, w) = out.output.dims();
        Ok(Self {
            output: encode_png(out.output.to_png_bytes()?),
            sketch: SketchPanels {
                lines: encode_png(out.sketch.lines.to_png_bytes()?),
                edges: encode_png(out.sketch.edges.to_png_bytes()?),
                combined: encode_png(out.sketch.combined.to_png_bytes()?),
            },
            lines_used: LinesUsed {
                h,
                w,
                lines: out.decisions.iter().map(used_line).collect(),
            },
            m: out.m,
            timing_ms,
        })
    }
}

fn used_line(d: &LineDecision) -> UsedLine {
    let (a, b) = (d.line.a(), d.line.b());
    UsedLine {
        x1: a.x,
        y1: a.y,
        x2: b.x,
        y2: b.y,
        score: d.line.score(),
        indicator: d.indicator,
        kept: d.kept,
        overridden: d.overridden,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub queue_budget: usize,
    pub in_flight: usize,
}

pub fn encode_png(bytes: Vec<u8>) -> String {
    STANDARD.encode(bytes)
}

fn decode_b64(field: &str, s: &str) -> Result<Vec<u8>, ApiError> {
    STANDARD
        .decode(s.trim())
        .map_err(|e| ApiError::bad_request(format!("{field}: invalid base64 ({e})")))
}

pub fn decode_image(field: &str, s: &str) -> Result<Image, ApiError> {
    let bytes = decode_b64(field, s)?;
    Image::read_png(bytes.as_slice()).map_err(|e| ApiError::bad_request(format!("{field}: {e}")))
}

pub fn decode_mask(field: &str, s: &str) -> Result<MaskBitmap, ApiError> {
    let bytes = decode_b64(field, s)?;
    MaskBitmap::read_png(bytes.as_slice()).map_err(|e| ApiError::bad_request(format!("{field}: {e}")))
}
