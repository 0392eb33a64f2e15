use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point ({x}, {y}) lies outside a {h}x{w} image")]
    OutOfBounds { x: f64, y: f64, h: usize, w: usize },

    #[error("degenerate line segment at ({x}, {y})")]
    ZeroLengthSegment { x: f64, y: f64 },

    #[error("invalid probability {0}")]
    InvalidProbability(f64),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("every position is masked; attention keys are undefined")]
    FullyMasked,

    #[error("sAP is undefined without ground-truth lines")]
    EmptyGroundTruth,

    #[error("mask rejection budget of {0} attempts exhausted")]
    RejectionBudget(usize),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("feature extractor unavailable: {0}")]
    ExtractorUnavailable(String),

    #[error("wireframe detector failed: {0}")]
    Detector(String),

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("png decode: {0}")]
    PngDecode(#[from] png::DecodingError),

    #[error("png encode: {0}")]
    PngEncode(#[from] png::EncodingError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(expected: impl ToString, got: impl ToString) -> Error {
    Error::ShapeMismatch {
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
