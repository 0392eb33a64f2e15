//! Differentiable tensor helpers not provided directly by candle.

use candle_core::{Tensor, D};

use crate::error::Result;

pub const INSTANCE_NORM_EPS: f64 = 1e-5;

/// Stand-in for `-inf` when masking logits.
pub const MASK_NEG: f64 = -1e9;

/// Per-sample, per-channel normalization over the spatial axes of an NCHW tensor, no affine.
pub fn instance_norm(x: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    let flat = x.reshape((n, c, h * w))?;
    let mean = flat.mean_keepdim(2)?;
    let centered = flat.broadcast_sub(&mean)?;
    let var = centered.sqr()?.mean_keepdim(2)?;
    let out = centered.broadcast_div(&(var + INSTANCE_NORM_EPS)?.sqrt()?)?;
    Ok(out.reshape((n, c, h, w))?)
}

/// Softmax along `dim`; the stabilizing max is treated as a constant.
pub fn softmax(x: &Tensor, dim: usize) -> Result<Tensor> {
    let max = x.max_keepdim(dim)?.detach();
    let e = x.broadcast_sub(&max)?.exp()?;
    let sum = e.sum_keepdim(dim)?;
    Ok(e.broadcast_div(&sum)?)
}

pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok(candle_nn::ops::sigmoid(x)?)
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Result<Tensor> {
    let pos = x.relu()?;
    let neg = x.neg()?.relu()?;
    Ok((pos - (neg * slope)?)?)
}

/// `log(1 + exp(x))`, stable for large |x|.
pub fn softplus(x: &Tensor) -> Result<Tensor> {
    let tail = x.abs()?.neg()?.exp()?.affine(1.0, 1.0)?.log()?;
    Ok((x.relu()? + tail)?)
}

/// `-log(sigmoid(x))` elementwise.
pub fn neg_log_sigmoid(x: &Tensor) -> Result<Tensor> {
    softplus(&x.neg()?)
}

/// `-log(1 - sigmoid(x))` elementwise.
pub fn neg_log_one_minus_sigmoid(x: &Tensor) -> Result<Tensor> {
    softplus(x)
}

/// Nearest-neighbour upsampling by an integer factor, written with broadcasts so its
/// gradient accumulates like any other op.
pub fn upsample_nearest(x: &Tensor, factor: usize) -> Result<Tensor> {
    if factor == 1 {
        return Ok(x.clone());
    }
    let (n, c, h, w) = x.dims4()?;
    let y = x
        .reshape((n, c, h, 1, w, 1))?
        .broadcast_as((n, c, h, factor, w, factor))?
        .reshape((n, c, h * factor, w * factor))?;
    Ok(y)
}

pub fn mean_abs_diff(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    Ok((a - b)?.abs()?.mean_all()?)
}

/// Scalar value of a rank-0 or single-element tensor.
pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.flatten_all()?
        .to_dtype(candle_core::DType::F64)?
        .to_vec1::<f64>()?[0])
}

/// Last-axis L2 normalization with a small floor.
pub fn l2_normalize(x: &Tensor) -> Result<Tensor> {
    let norm = x.sqr()?.sum_keepdim(D::Minus1)?.sqrt()?;
    Ok(x.broadcast_div(&(norm + 1e-12)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};

    #[test]
    fn softplus_is_stable() {
        let x = Tensor::new(&[-1000f64, -1.0, 0.0, 1.0, 1000.0], &Device::Cpu).unwrap();
        let y: Vec<f64> = softplus(&x).unwrap().to_vec1().unwrap();
        assert!(y[0].abs() < 1e-12);
        assert!((y[2] - 2f64.ln()).abs() < 1e-12);
        assert!((y[4] - 1000.0).abs() < 1e-9);
        assert!((y[1] - (1.0 + (-1f64).exp()).ln()).abs() < 1e-12);
    }

    #[test]
    fn instance_norm_standardizes() {
        let x = Tensor::arange(0f64, 32.0, &Device::Cpu)
            .unwrap()
            .reshape((1, 2, 4, 4))
            .unwrap();
        let y = instance_norm(&x).unwrap();
        let m: Vec<f64> = y.mean((2, 3)).unwrap().flatten_all().unwrap().to_vec1().unwrap();
        assert!(m.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn upsample_repeats() {
        let x = Tensor::new(&[1f32, 2., 3., 4.], &Device::Cpu)
            .unwrap()
            .reshape((1, 1, 2, 2))
            .unwrap();
        let y = upsample_nearest(&x, 2).unwrap();
        let v: Vec<f32> = y.flatten_all().unwrap().to_vec1().unwrap();
        assert_eq!(v[..8], [1., 1., 2., 2., 1., 1., 2., 2.]);
        let _ = DType::F32;
    }
}
