//! Masked multi-head efficient attention: `E = softmax_row(Q) (softmax_col(K)^T V)`.
//!
//! Keys are softmaxed over positions with masked positions pushed to `-1e9`, so holes
//! contribute nothing to the `d_head x d_head` context. Query rows are softmaxed over the
//! feature axis and zeroed at masked positions. The cost is `O(hw * d^2)`; no
//! `hw x hw` matrix is ever formed.

use candle_core::{Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

use super::ops::{softmax, MASK_NEG};
use super::params::{Init, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EAConfig {
    pub d: usize,
    pub n_head: usize,
}

impl Default for EAConfig {
    fn default() -> Self {
        Self { d: 256, n_head: 4 }
    }
}

impl EAConfig {
    pub fn new(d: usize, n_head: usize) -> Result<Self> {
        let cfg = Self { d, n_head };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_head == 0 || self.d == 0 || self.d % self.n_head != 0 {
            return Err(Error::InvalidInput(format!(
                "attention width {} is not divisible by {} heads",
                self.d, self.n_head
            )));
        }
        Ok(())
    }

    pub fn d_head(&self) -> usize {
        self.d / self.n_head
    }
}

/// Projection matrices, each `d x d` and applied as `x W^T`.
#[derive(Clone, Debug)]
pub struct AttentionParams {
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
}

/// `x`: `(n, d, h, w)`; `mask`: `(n, 1, h, w)` with 1 marking corrupted positions.
pub fn efficient_attention(
    x: &Tensor,
    mask: &Tensor,
    cfg: &EAConfig,
    params: &AttentionParams,
) -> Result<Tensor> {
    cfg.validate()?;
    let (n, d, h, w) = x.dims4()?;
    if d != cfg.d {
        return Err(shape_err(format!("{} channels", cfg.d), d));
    }
    if mask.dims() != [n, 1, h, w] {
        return Err(shape_err(format!("[{n}, 1, {h}, {w}]"), format!("{:?}", mask.dims())));
    }
    for p in [&params.wq, &params.wk, &params.wv] {
        if p.dims() != [d, d] {
            return Err(shape_err(format!("[{d}, {d}]"), format!("{:?}", p.dims())));
        }
    }
    let hw = h * w;
    let mask = mask.to_dtype(x.dtype())?.reshape((n, hw))?;
    let visible: Vec<f64> = (1.0 - &mask)?
        .sum(1)?
        .to_dtype(candle_core::DType::F64)?
        .to_vec1()?;
    if visible.iter().any(|&v| v < 0.5) {
        return Err(Error::FullyMasked);
    }

    let (heads, dh) = (cfg.n_head, cfg.d_head());
    let tokens = x.reshape((n, d, hw))?.transpose(1, 2)?.contiguous()?;
    let project = |wt: &Tensor| -> Result<Tensor> {
        Ok(tokens
            .broadcast_matmul(&wt.t()?)?
            .reshape((n, hw, heads, dh))?
            .transpose(1, 2)?
            .contiguous()?)
    };
    let q = project(&params.wq)?;
    let k = project(&params.wk)?;
    let v = project(&params.wv)?;

    let pos_mask = mask.reshape((n, 1, hw, 1))?;
    let q = softmax(&q, 3)?.broadcast_mul(&(1.0 - &pos_mask)?)?;
    let k = softmax(&k.broadcast_add(&(&pos_mask * MASK_NEG)?)?, 2)?;

    let context = k.transpose(2, 3)?.contiguous()?.matmul(&v)?;
    let e = q.matmul(&context)?;
    Ok(e.transpose(1, 2)?
        .reshape((n, hw, d))?
        .transpose(1, 2)?
        .reshape((n, d, h, w))?)
}

pub struct EfficientAttention {
    cfg: EAConfig,
    wq: Var,
    wk: Var,
    wv: Var,
}

impl EfficientAttention {
    pub fn new(store: &ParamStore, cfg: EAConfig) -> Result<Self> {
        cfg.validate()?;
        let init = Init::FanIn {
            fan_in: cfg.d,
            gain: 1.0,
        };
        Ok(Self {
            cfg,
            wq: store.var("wq", &[cfg.d, cfg.d], init)?,
            wk: store.var("wk", &[cfg.d, cfg.d], init)?,
            wv: store.var("wv", &[cfg.d, cfg.d], init)?,
        })
    }

    pub fn config(&self) -> &EAConfig {
        &self.cfg
    }

    pub fn params(&self) -> AttentionParams {
        AttentionParams {
            wq: self.wq.as_tensor().clone(),
            wk: self.wk.as_tensor().clone(),
            wv: self.wv.as_tensor().clone(),
        }
    }

    pub fn forward(&self, x: &Tensor, mask: &Tensor) -> Result<Tensor> {
        efficient_attention(x, mask, &self.cfg, &self.params())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};

    fn rand_t(seed: u64, shape: &[usize]) -> Tensor {
        let store = ParamStore::new(DType::F64, seed);
        store.var("t", shape, Init::Normal(1.0)).unwrap().as_tensor().clone()
    }

    #[test]
    fn constant_values_pass_through() {
        // With V constant across positions every output row reproduces it.
        let (d, h, w) = (4, 2, 3);
        let cfg = EAConfig::new(d, 2).unwrap();
        let x = Tensor::ones((1, d, h, w), DType::F64, &Device::Cpu).unwrap();
        let params = AttentionParams {
            wq: rand_t(1, &[d, d]),
            wk: rand_t(2, &[d, d]),
            wv: rand_t(3, &[d, d]),
        };
        let mask = Tensor::zeros((1, 1, h, w), DType::F64, &Device::Cpu).unwrap();
        let out = efficient_attention(&x, &mask, &cfg, &params).unwrap();
        let v = x
            .reshape((1, d, h * w))
            .unwrap()
            .transpose(1, 2)
            .unwrap()
            .broadcast_matmul(&params.wv.t().unwrap())
            .unwrap();
        let out = out.reshape((1, d, h * w)).unwrap().transpose(1, 2).unwrap();
        let diff: f64 = (out - v).unwrap().abs().unwrap().max_all().unwrap().to_scalar().unwrap();
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn fully_masked_is_an_error() {
        let cfg = EAConfig::new(4, 1).unwrap();
        let x = rand_t(0, &[1, 4, 2, 2]);
        let params = AttentionParams {
            wq: rand_t(1, &[4, 4]),
            wk: rand_t(2, &[4, 4]),
            wv: rand_t(3, &[4, 4]),
        };
        let mask = Tensor::ones((1, 1, 2, 2), DType::F64, &Device::Cpu).unwrap();
        assert!(matches!(
            efficient_attention(&x, &mask, &cfg, &params),
            Err(Error::FullyMasked)
        ));
    }

    #[test]
    fn config_validation() {
        assert!(EAConfig::new(10, 4).is_err());
        assert_eq!(EAConfig::default().d_head(), 64);
    }
}
