//! Shared fixtures for the benchmarks.

use candle_core::{DType, Device, Tensor};

use mst_core::nn::{EAConfig, EfficientAttention, ParamStore};
use mst_core::pipeline::SyntheticScene;
use mst_core::wireframe::Wireframe;
use mst_core::{Image, MaskBitmap};

/// Square side lengths whose areas are 256, 1024 and 4096 positions.
pub const ATTENTION_SIDES: [usize; 3] = [16, 32, 64];

pub struct AttentionFixture {
    pub block: EfficientAttention,
    pub x: Tensor,
    pub mask: Tensor,
}

/// One sample of `d` channels on a `side x side` grid with the left quarter masked.
pub fn attention_fixture(d: usize, n_head: usize, side: usize) -> AttentionFixture {
    let store = ParamStore::new(DType::F32, 11);
    let block = EfficientAttention::new(&store, EAConfig::new(d, n_head).expect("valid config")).expect("init");
    let x = Tensor::randn(0f32, 1.0, (1, d, side, side), &Device::Cpu).expect("randn");
    let mask = MaskBitmap::from_fn(side, side, |_, c| c < side / 4).to_plane();
    let mask = Tensor::from_vec(mask.into_vec(), (1, 1, side, side), &Device::Cpu).expect("mask");
    AttentionFixture { block, x, mask }
}

/// A synthetic scene with its planted wireframe and a fixed hole.
pub fn scene(size: usize) -> (Image, Wireframe, MaskBitmap) {
    let s = SyntheticScene::generate(5, size).expect("scene");
    let mask = MaskBitmap::from_fn(size, size, |r, c| {
        let (r, c) = (r as f64 / size as f64, c as f64 / size as f64);
        (r - 0.5).powi(2) + (c - 0.45).powi(2) < 0.04
    });
    (s.image, s.wireframe, mask)
}
