//! Spectral-normalized PatchGAN discriminator.

use candle_core::Tensor;

use crate::error::Result;
use crate::nn::ops::leaky_relu;
use crate::nn::{Conv2d, ConvSpec, Mode, ParamStore};

pub const LEAKY_SLOPE: f64 = 0.2;

pub struct DiscOutput {
    pub logits: Tensor,
    /// Activations after every conv; the last entry is the logit map.
    pub features: Vec<Tensor>,
}

pub struct Discriminator {
    convs: Vec<Conv2d>,
}

impl Discriminator {
    pub fn new(store: &ParamStore, in_ch: usize, width: usize) -> Result<Self> {
        let chans = [in_ch, width, width * 2, width * 4, width * 8, 1];
        let strides = [2, 2, 2, 1, 1];
        let convs = (0..5)
            .map(|i| {
                Conv2d::new(
                    &store.pp(format!("conv{i}")),
                    ConvSpec::new(chans[i], chans[i + 1], 4)
                        .stride(strides[i])
                        .padding(1)
                        .spectral(true),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { convs })
    }

    pub fn num_layers(&self) -> usize {
        self.convs.len()
    }

    pub fn convs(&self) -> &[Conv2d] {
        &self.convs
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<DiscOutput> {
        let mut features = Vec::with_capacity(self.convs.len());
        let mut h = x.clone();
        let last = self.convs.len() - 1;
        for (i, conv) in self.convs.iter().enumerate() {
            h = conv.forward(&h, mode)?;
            if i < last {
                h = leaky_relu(&h, LEAKY_SLOPE)?;
            }
            features.push(h.clone());
        }
        Ok(DiscOutput { logits: h, features })
    }
}

/// Patch-map side length for a square input of side `n`.
pub fn patch_size(n: usize) -> usize {
    let mut s = n;
    for stride in [2, 2, 2, 1, 1] {
        s = (s + 2 - 4) / stride + 1;
    }
    s
}
