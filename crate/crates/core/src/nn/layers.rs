//! Convolution layers with optional spectral normalization, gated convolution and the
//! dilated residual block.

use candle_core::Tensor;

use crate::error::{shape_err, Result};

use super::ops::{instance_norm, l2_normalize, sigmoid};
use super::params::{Buffer, Init, ParamStore};

/// Whether a forward pass may advance stateful pieces (power iteration).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Spectral normalization with one power-iteration step per training forward.
///
/// The weight is viewed as a matrix with its first axis as rows. `u` and `v` persist
/// between calls and are treated as constants by autodiff.
pub struct SpectralNorm {
    u: Buffer,
    v: Buffer,
}

impl SpectralNorm {
    pub fn new(store: &ParamStore, rows: usize, cols: usize) -> Result<Self> {
        let u = store.buffer("sn_u", &[rows], Init::Normal(1.0))?;
        let v = store.buffer("sn_v", &[cols], Init::Normal(1.0))?;
        {
            let mut g = u.lock().expect("sn buffer");
            *g = l2_normalize(&g)?;
            let mut g = v.lock().expect("sn buffer");
            *g = l2_normalize(&g)?;
        }
        Ok(Self { u, v })
    }

    /// One power-iteration step on `weight` (no gradient), updating the stored vectors.
    pub fn power_iteration(&self, weight: &Tensor) -> Result<()> {
        let mat = weight.detach().flatten_from(1)?;
        let mut u = self.u.lock().expect("sn buffer");
        let mut v = self.v.lock().expect("sn buffer");
        let nv = l2_normalize(&mat.t()?.matmul(&u.unsqueeze(1)?)?.squeeze(1)?)?;
        let nu = l2_normalize(&mat.matmul(&nv.unsqueeze(1)?)?.squeeze(1)?)?;
        *v = nv;
        *u = nu;
        Ok(())
    }

    /// Current estimate `u^T W v`, differentiable in `weight`.
    pub fn sigma(&self, weight: &Tensor) -> Result<Tensor> {
        let mat = weight.flatten_from(1)?;
        let u = self.u.lock().expect("sn buffer").clone();
        let v = self.v.lock().expect("sn buffer").clone();
        let s = u.unsqueeze(0)?.matmul(&mat)?.matmul(&v.unsqueeze(1)?)?;
        Ok(s.reshape(())?)
    }

    pub fn normalize(&self, weight: &Tensor, mode: Mode) -> Result<Tensor> {
        if mode == Mode::Train {
            self.power_iteration(weight)?;
        }
        let sigma = self.sigma(weight)?;
        Ok(weight.broadcast_div(&sigma)?)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ConvSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub transposed: bool,
    pub spectral: bool,
    pub bias: bool,
}

impl ConvSpec {
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            kernel,
            stride: 1,
            padding: kernel / 2,
            dilation: 1,
            transposed: false,
            spectral: false,
            bias: true,
        }
    }

    pub fn stride(mut self, s: usize) -> Self {
        self.stride = s;
        self
    }

    pub fn padding(mut self, p: usize) -> Self {
        self.padding = p;
        self
    }

    pub fn dilation(mut self, d: usize) -> Self {
        self.dilation = d;
        self
    }

    pub fn transposed(mut self) -> Self {
        self.transposed = true;
        self
    }

    pub fn spectral(mut self, on: bool) -> Self {
        self.spectral = on;
        self
    }

    pub fn no_bias(mut self) -> Self {
        self.bias = false;
        self
    }
}

pub struct Conv2d {
    spec: ConvSpec,
    weight: candle_core::Var,
    bias: Option<candle_core::Var>,
    sn: Option<SpectralNorm>,
}

impl Conv2d {
    pub fn new(store: &ParamStore, spec: ConvSpec) -> Result<Self> {
        let k = spec.kernel;
        let (shape, fan_in) = if spec.transposed {
            ([spec.in_ch, spec.out_ch, k, k], spec.in_ch * k * k / (spec.stride * spec.stride))
        } else {
            ([spec.out_ch, spec.in_ch, k, k], spec.in_ch * k * k)
        };
        let weight = store.var("weight", &shape, Init::FanIn { fan_in, gain: 2f64.sqrt() })?;
        let bias = if spec.bias {
            Some(store.var("bias", &[spec.out_ch], Init::Zeros)?)
        } else {
            None
        };
        let sn = if spec.spectral {
            Some(SpectralNorm::new(store, shape[0], shape[1] * k * k)?)
        } else {
            None
        };
        Ok(Self {
            spec,
            weight,
            bias,
            sn,
        })
    }

    pub fn spec(&self) -> &ConvSpec {
        &self.spec
    }

    pub fn weight(&self) -> &candle_core::Var {
        &self.weight
    }

    pub fn bias(&self) -> Option<&candle_core::Var> {
        self.bias.as_ref()
    }

    pub fn spectral_norm(&self) -> Option<&SpectralNorm> {
        self.sn.as_ref()
    }

    /// The weight actually used in the convolution (spectrally normalized when enabled).
    pub fn effective_weight(&self, mode: Mode) -> Result<Tensor> {
        match &self.sn {
            Some(sn) => sn.normalize(self.weight.as_tensor(), mode),
            None => Ok(self.weight.as_tensor().clone()),
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let c = x.dim(1)?;
        if c != self.spec.in_ch {
            return Err(shape_err(
                format!("{} input channels", self.spec.in_ch),
                format!("{c}"),
            ));
        }
        Ok(())
    }

    /// Convolution with an explicit weight and optional `[out]` bias under this layer's geometry.
    fn apply(&self, x: &Tensor, w: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
        let s = &self.spec;
        let y = if s.transposed {
            super::im2col::conv_transpose2d(x, w, s.padding, s.stride, s.dilation)?
        } else {
            super::im2col::conv2d(x, w, s.padding, s.stride, s.dilation)?
        };
        match bias {
            Some(b) => Ok(y.broadcast_add(&b.reshape((1, b.dim(0)?, 1, 1))?)?),
            None => Ok(y),
        }
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        self.check_input(x)?;
        let w = self.effective_weight(mode)?;
        self.apply(x, &w, self.bias.as_ref().map(|b| b.as_tensor()))
    }
}

/// Gated convolution followed by instance norm and ReLU:
/// `relu(IN(conv_f(x) * sigmoid(conv_g(x))))`.
pub struct GatedConv {
    feature: Conv2d,
    gate: Conv2d,
}

impl GatedConv {
    pub fn new(store: &ParamStore, spec: ConvSpec) -> Result<Self> {
        Ok(Self {
            feature: Conv2d::new(&store.pp("feature"), spec)?,
            gate: Conv2d::new(&store.pp("gate"), spec)?,
        })
    }

    pub fn feature(&self) -> &Conv2d {
        &self.feature
    }

    pub fn gate(&self) -> &Conv2d {
        &self.gate
    }

    /// Both branches run as one convolution over concatenated (separately normalized)
    /// weights; the result is identical to two convolutions.
    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        self.feature.check_input(x)?;
        let spec = self.feature.spec;
        let out_axis = if spec.transposed { 1 } else { 0 };
        let w = Tensor::cat(
            &[
                &self.feature.effective_weight(mode)?,
                &self.gate.effective_weight(mode)?,
            ],
            out_axis,
        )?;
        let bias = match (&self.feature.bias, &self.gate.bias) {
            (Some(a), Some(b)) => Some(Tensor::cat(&[a.as_tensor(), b.as_tensor()], 0)?),
            _ => None,
        };
        let y = self.feature.apply(x, &w, bias.as_ref())?;
        let f = y.narrow(1, 0, spec.out_ch)?;
        let g = sigmoid(&y.narrow(1, spec.out_ch, spec.out_ch)?)?;
        Ok(instance_norm(&(f * g)?)?.relu()?)
    }
}

/// `x + IN(conv(relu(IN(conv_dilated(x)))))`, spatial size preserved.
pub struct DilatedResBlock {
    conv1: Conv2d,
    conv2: Conv2d,
}

impl DilatedResBlock {
    pub fn new(store: &ParamStore, channels: usize) -> Result<Self> {
        Ok(Self {
            conv1: Conv2d::new(
                &store.pp("conv1"),
                ConvSpec::new(channels, channels, 3).dilation(2).padding(2),
            )?,
            conv2: Conv2d::new(&store.pp("conv2"), ConvSpec::new(channels, channels, 3))?,
        })
    }

    pub fn convs(&self) -> [&Conv2d; 2] {
        [&self.conv1, &self.conv2]
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let y = instance_norm(&self.conv1.forward(x, mode)?)?.relu()?;
        let y = instance_norm(&self.conv2.forward(&y, mode)?)?;
        Ok((x + y)?)
    }
}
