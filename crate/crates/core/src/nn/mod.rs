//! Differentiable building blocks on top of candle.

pub mod attention;
pub mod gradcheck;
pub mod im2col;
pub mod layers;
pub mod ops;
pub mod params;
pub mod pds;

pub use attention::{efficient_attention, AttentionParams, EAConfig, EfficientAttention};
pub use layers::{Conv2d, ConvSpec, DilatedResBlock, GatedConv, Mode, SpectralNorm};
pub use params::{Buffer, Init, ParamStore};
pub use pds::{PdsBlock, PdsOutput, PdsSpec};
