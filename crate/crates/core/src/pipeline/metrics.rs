//! Image quality metrics on `[0, 1]` images.

use crate::error::{shape_err, Error, Result};
use crate::imaging::{Image, Plane, ValueDomain};
use crate::mask::MaskBitmap;

/// Reported in place of +inf for identical images.
pub const PSNR_CAP: f64 = 99.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn same_shape(a: &Image, b: &Image) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(shape_err(format!("{:?}", a.dims()), format!("{:?}", b.dims())));
    }
    a.expect_domain(ValueDomain::Unit)?;
    b.expect_domain(ValueDomain::Unit)
}

/// `10 log10(1 / MSE)` over all channels, capped at [`PSNR_CAP`].
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    same_shape(a, b)?;
    let n = a.data().len();
    if n == 0 {
        return Err(Error::InvalidInput("empty image".into()));
    }
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        / n as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - r).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering with the SSIM window.
fn filter_valid(src: &[f64], h: usize, w: usize, g: &[f64]) -> (Vec<f64>, usize, usize) {
    let k = g.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut tmp = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            tmp[r * ow + c] = (0..k).map(|i| g[i] * src[r * w + c + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..k).map(|i| g[i] * tmp[(r + i) * ow + c]).sum();
        }
    }
    (out, oh, ow)
}

/// Mean structural similarity of the luma planes, Gaussian window, valid region only.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    same_shape(a, b)?;
    ssim_planes(&a.to_gray(), &b.to_gray())
}

pub fn ssim_planes(a: &Plane, b: &Plane) -> Result<f64> {
    let (h, w) = a.dims();
    if b.dims() != (h, w) {
        return Err(shape_err(format!("{h}x{w}"), format!("{:?}", b.dims())));
    }
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidInput(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        )));
    }
    let g = gaussian_window();
    let x: Vec<f64> = a.data().iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = b.data().iter().map(|&v| v as f64).collect();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let (mx, oh, ow) = filter_valid(&x, h, w, &g);
    let (my, _, _) = filter_valid(&y, h, w, &g);
    let (sxx, _, _) = filter_valid(&xx, h, w, &g);
    let (syy, _, _) = filter_valid(&yy, h, w, &g);
    let (sxy, _, _) = filter_valid(&xy, h, w, &g);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    for i in 0..oh * ow {
        let (ux, uy) = (mx[i], my[i]);
        let vx = sxx[i] - ux * ux;
        let vy = syy[i] - uy * uy;
        let cov = sxy[i] - ux * uy;
        total += ((2.0 * ux * uy + c1) * (2.0 * cov + c2))
            / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    Ok(total / (oh * ow) as f64)
}

/// Intersection over union of `pred >= 0.5` and `truth >= 0.5`, optionally restricted to
/// pixels where `region` is unset. Two empty sets give 1.
pub fn binary_iou(pred: &Plane, truth: &Plane, exclude: Option<&MaskBitmap>) -> Result<f64> {
    if pred.dims() != truth.dims() {
        return Err(shape_err(format!("{:?}", truth.dims()), format!("{:?}", pred.dims())));
    }
    let (h, w) = pred.dims();
    let (mut inter, mut union) = (0usize, 0usize);
    for r in 0..h {
        for c in 0..w {
            if exclude.is_some_and(|m| m.get(r, c)) {
                continue;
            }
            let p = pred.get(r, c) >= 0.5;
            let t = truth.get(r, c) >= 0.5;
            inter += (p && t) as usize;
            union += (p || t) as usize;
        }
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_error() {
        let a = Image::filled(4, 4, [0.5; 3]);
        let b = Image::filled(4, 4, [0.6; 3]);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-5);
    }

    #[test]
    fn ssim_too_small() {
        let a = Image::filled(8, 8, [0.5; 3]);
        assert!(ssim(&a, &a).is_err());
    }
}
