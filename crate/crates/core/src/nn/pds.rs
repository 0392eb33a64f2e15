//! Pyramid decomposing separable block.
//!
//! A gated conv feeds `f_eb`, whose output is split into a line embedding `E_l` and an
//! edge embedding `E_e`. A learned map `A = f_ab(E_le)` blends them into `E'_le` for the
//! coarse-image head, and a stride-2 transposed conv carries `E_le` to the next scale.

use candle_core::Tensor;

use crate::error::{Error, Result};

use super::layers::{Conv2d, ConvSpec, GatedConv, Mode};
use super::ops::{instance_norm, sigmoid};
use super::params::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PdsSpec {
    pub in_ch: usize,
    /// Width of `E_le`; must be even.
    pub ch: usize,
    /// Output width of the upsampling path, `None` for the last block.
    pub next_ch: Option<usize>,
}

pub struct PdsOutput {
    pub x_next: Option<Tensor>,
    pub o_im: Tensor,
    pub o_l: Tensor,
    pub o_e: Tensor,
    pub attention: Tensor,
    pub e_l: Tensor,
    pub e_e: Tensor,
    pub e_le_prime: Tensor,
}

pub struct PdsBlock {
    spec: PdsSpec,
    gated: GatedConv,
    eb: Conv2d,
    ab1: Conv2d,
    ab2: Conv2d,
    head_l: Conv2d,
    head_e: Conv2d,
    head_im: Conv2d,
    up: Option<Conv2d>,
}

impl PdsBlock {
    pub fn new(store: &ParamStore, spec: PdsSpec) -> Result<Self> {
        if spec.ch == 0 || spec.ch % 2 != 0 {
            return Err(Error::InvalidInput(format!(
                "embedding width {} must be even",
                spec.ch
            )));
        }
        let half = spec.ch / 2;
        let up = match spec.next_ch {
            Some(next) => Some(Conv2d::new(
                &store.pp("up"),
                ConvSpec::new(spec.ch, next, 4).stride(2).padding(1).transposed(),
            )?),
            None => None,
        };
        Ok(Self {
            spec,
            gated: GatedConv::new(
                &store.pp("gated"),
                ConvSpec::new(spec.in_ch, spec.ch, 3).spectral(true),
            )?,
            eb: Conv2d::new(&store.pp("eb"), ConvSpec::new(spec.ch, spec.ch, 3))?,
            ab1: Conv2d::new(&store.pp("ab1"), ConvSpec::new(spec.ch, half, 3))?,
            ab2: Conv2d::new(&store.pp("ab2"), ConvSpec::new(half, 1, 3))?,
            head_l: Conv2d::new(&store.pp("head_l"), ConvSpec::new(half, 1, 3))?,
            head_e: Conv2d::new(&store.pp("head_e"), ConvSpec::new(half, 1, 3))?,
            head_im: Conv2d::new(&store.pp("head_im"), ConvSpec::new(half, 3, 3))?,
            up,
        })
    }

    pub fn spec(&self) -> &PdsSpec {
        &self.spec
    }

    /// The last conv of `f_ab`, exposed so tests can pin `A`.
    pub fn attention_head(&self) -> &Conv2d {
        &self.ab2
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<PdsOutput> {
        let g = self.gated.forward(x, mode)?;
        let e_le = instance_norm(&self.eb.forward(&g, mode)?)?.relu()?;
        let half = self.spec.ch / 2;
        let e_l = e_le.narrow(1, 0, half)?;
        let e_e = e_le.narrow(1, half, half)?;

        let o_l = sigmoid(&self.head_l.forward(&e_l, mode)?)?;
        let o_e = sigmoid(&self.head_e.forward(&e_e, mode)?)?;

        let a = instance_norm(&self.ab1.forward(&e_le, mode)?)?.relu()?;
        let attention = sigmoid(&self.ab2.forward(&a, mode)?)?;
        let e_le_prime = (e_l.broadcast_mul(&(1.0 - &attention)?)?
            + e_e.broadcast_mul(&attention)?)?;
        let o_im = self.head_im.forward(&e_le_prime, mode)?.tanh()?;

        let x_next = match &self.up {
            Some(up) => Some(instance_norm(&up.forward(&e_le, mode)?)?.relu()?),
            None => None,
        };
        Ok(PdsOutput {
            x_next,
            o_im,
            o_l,
            o_e,
            attention,
            e_l,
            e_e,
            e_le_prime,
        })
    }
}
