//! Feature extractors for the perceptual and style losses.

use candle_core::{DType, Device, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// A frozen network mapping a `(n, 3, h, w)` image to a list of feature maps.
pub trait FeatureExtractor: Send + Sync {
    fn features(&self, image: &Tensor) -> Result<Vec<Tensor>>;
}

/// Placeholder for a backbone that could not be loaded; every call fails.
pub struct UnavailableExtractor(pub String);

impl FeatureExtractor for UnavailableExtractor {
    fn features(&self, _image: &Tensor) -> Result<Vec<Tensor>> {
        Err(Error::ExtractorUnavailable(format!(
            "{}; use RandomConvExtractor as a deterministic stand-in",
            self.0
        )))
    }
}

pub const EXTRACTOR_SEED: u64 = 0x5eed_f00d;

/// Five conv+relu stages with fixed seeded weights; stages after the first halve the
/// resolution with 2x2 average pooling while the map is at least 2 px on a side.
pub struct RandomConvExtractor {
    stages: Vec<(Tensor, Tensor)>,
}

impl RandomConvExtractor {
    pub const WIDTHS: [usize; 5] = [8, 16, 16, 32, 32];

    pub fn new(dtype: DType, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut in_ch = 3;
        let mut stages = Vec::new();
        for &out in &Self::WIDTHS {
            let fan_in = in_ch * 9;
            let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
            let w: Vec<f64> = (0..out * fan_in).map(|_| dist.sample(&mut rng)).collect();
            let b: Vec<f64> = (0..out).map(|_| 0.01 * dist.sample(&mut rng)).collect();
            stages.push((
                Tensor::from_vec(w, (out, in_ch, 3, 3), &Device::Cpu)?.to_dtype(dtype)?,
                Tensor::from_vec(b, (1, out, 1, 1), &Device::Cpu)?.to_dtype(dtype)?,
            ));
            in_ch = out;
        }
        Ok(Self { stages })
    }
}

impl FeatureExtractor for RandomConvExtractor {
    fn features(&self, image: &Tensor) -> Result<Vec<Tensor>> {
        let mut x = image.clone();
        let mut out = Vec::with_capacity(self.stages.len());
        for (i, (w, b)) in self.stages.iter().enumerate() {
            let (_, _, h, wd) = x.dims4()?;
            if i > 0 && h >= 2 && wd >= 2 && h % 2 == 0 && wd % 2 == 0 {
                x = x.avg_pool2d(2)?;
            }
            x = crate::nn::im2col::conv2d(&x, w, 1, 1, 1)?.broadcast_add(b)?.relu()?;
            out.push(x.clone());
        }
        Ok(out)
    }
}
