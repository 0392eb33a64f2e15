//! Sketch-tensor guided image inpainting: wireframe handling, imaging utilities,
//! network blocks, the encoder/decoder model, losses, training and the data pipeline.

pub mod error;
pub mod imaging;
pub mod losses;
pub mod mask;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod trainer;
pub mod wireframe;

pub use error::{Error, Result};
pub use imaging::{EdgeMap, Image, LineMap, Plane, PyramidTargets, ValueDomain};
pub use mask::MaskBitmap;
pub use wireframe::{Junction, LineSegment, Wireframe};
