//! Convolution as patch extraction plus matrix multiply.
//!
//! `Im2Col` and `Col2Im` are adjoint linear maps, so each one's backward pass is the other.
//! On CPU this is several times faster than candle's direct convolution, forward and backward.

use candle_core::{CpuStorage, CustomOp1, Layout, Shape, Tensor, WithDType};

use crate::error::{shape_err, Result};

/// Geometry of a square-kernel convolution over an `h x w` image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    dil: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn new(c: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize, dil: usize) -> candle_core::Result<Self> {
        let span = dil * (k - 1) + 1;
        if h + 2 * pad < span || w + 2 * pad < span || stride == 0 {
            candle_core::bail!("convolution of {h}x{w} with kernel span {span} and padding {pad} is empty");
        }
        Ok(Self {
            c,
            h,
            w,
            k,
            stride,
            pad,
            dil,
            oh: (h + 2 * pad - span) / stride + 1,
            ow: (w + 2 * pad - span) / stride + 1,
        })
    }

    /// Calls `f(row, col_index, pixel_index)` for every in-bounds patch entry of one sample.
    #[inline]
    fn for_each(&self, mut f: impl FnMut(usize, usize)) {
        let (k, s, p, d) = (self.k, self.stride, self.pad as isize, self.dil);
        let ncol = self.oh * self.ow;
        for ci in 0..self.c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    for oy in 0..self.oh {
                        let iy = (oy * s + ky * d) as isize - p;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let src_row = (ci * self.h + iy as usize) * self.w;
                        let dst_row = row * ncol + oy * self.ow;
                        for ox in 0..self.ow {
                            let ix = (ox * s + kx * d) as isize - p;
                            if ix < 0 || ix >= self.w as isize {
                                continue;
                            }
                            f(dst_row + ox, src_row + ix as usize);
                        }
                    }
                }
            }
        }
    }

    fn image_len(&self) -> usize {
        self.c * self.h * self.w
    }

    fn cols_len(&self) -> usize {
        self.c * self.k * self.k * self.oh * self.ow
    }
}

fn contiguous<'a, T>(data: &'a [T], layout: &Layout) -> candle_core::Result<&'a [T]> {
    match layout.contiguous_offsets() {
        Some((a, b)) => Ok(&data[a..b]),
        None => candle_core::bail!("im2col expects a contiguous tensor"),
    }
}

fn im2col_typed<T: WithDType>(x: &[T], n: usize, g: &Geometry) -> Vec<T> {
    let (il, cl) = (g.image_len(), g.cols_len());
    let mut out = vec![T::zero(); n * cl];
    for b in 0..n {
        let src = &x[b * il..(b + 1) * il];
        let dst = &mut out[b * cl..(b + 1) * cl];
        g.for_each(|di, si| dst[di] = src[si]);
    }
    out
}

fn col2im_typed<T: WithDType>(cols: &[T], n: usize, g: &Geometry) -> Vec<T> {
    let (il, cl) = (g.image_len(), g.cols_len());
    let mut out = vec![T::zero(); n * il];
    for b in 0..n {
        let src = &cols[b * cl..(b + 1) * cl];
        let dst = &mut out[b * il..(b + 1) * il];
        g.for_each(|ci, ii| dst[ii] += src[ci]);
    }
    out
}

struct Im2Col(Geometry);
struct Col2Im(Geometry);

impl CustomOp1 for Im2Col {
    fn name(&self) -> &'static str {
        "im2col"
    }

    fn cpu_fwd(&self, storage: &CpuStorage, layout: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let g = &self.0;
        let n = layout.dims()[0];
        let shape = Shape::from((n, g.c * g.k * g.k, g.oh * g.ow));
        let out = match storage {
            CpuStorage::F32(d) => CpuStorage::F32(im2col_typed(contiguous(d, layout)?, n, g)),
            CpuStorage::F64(d) => CpuStorage::F64(im2col_typed(contiguous(d, layout)?, n, g)),
            _ => candle_core::bail!("im2col supports f32 and f64"),
        };
        Ok((out, shape))
    }

    fn bwd(&self, _arg: &Tensor, _res: &Tensor, grad: &Tensor) -> candle_core::Result<Option<Tensor>> {
        Ok(Some(grad.contiguous()?.apply_op1(Col2Im(self.0))?))
    }
}

impl CustomOp1 for Col2Im {
    fn name(&self) -> &'static str {
        "col2im"
    }

    fn cpu_fwd(&self, storage: &CpuStorage, layout: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let g = &self.0;
        let n = layout.dims()[0];
        let shape = Shape::from((n, g.c, g.h, g.w));
        let out = match storage {
            CpuStorage::F32(d) => CpuStorage::F32(col2im_typed(contiguous(d, layout)?, n, g)),
            CpuStorage::F64(d) => CpuStorage::F64(col2im_typed(contiguous(d, layout)?, n, g)),
            _ => candle_core::bail!("col2im supports f32 and f64"),
        };
        Ok((out, shape))
    }

    fn bwd(&self, _arg: &Tensor, _res: &Tensor, grad: &Tensor) -> candle_core::Result<Option<Tensor>> {
        Ok(Some(grad.contiguous()?.apply_op1(Im2Col(self.0))?))
    }
}

/// Cross-correlation of `x` `(n, c_in, h, w)` with `weight` `(c_out, c_in, k, k)`.
pub fn conv2d(x: &Tensor, weight: &Tensor, pad: usize, stride: usize, dil: usize) -> Result<Tensor> {
    let (_, c, h, w) = x.dims4()?;
    let (co, ci, k, k2) = weight.dims4()?;
    if ci != c || k != k2 {
        return Err(shape_err(format!("weight with {c} input channels"), format!("{:?}", weight.dims())));
    }
    let g = Geometry::new(c, h, w, k, stride, pad, dil)?;
    let cols = x.contiguous()?.apply_op1(Im2Col(g))?;
    let y = weight.reshape((co, ci * k * k))?.broadcast_matmul(&cols)?;
    Ok(y.reshape((x.dim(0)?, co, g.oh, g.ow))?)
}

/// Transposed convolution of `x` `(n, c_in, h, w)` with `weight` `(c_in, c_out, k, k)`;
/// the adjoint of [`conv2d`] with the same geometry.
pub fn conv_transpose2d(x: &Tensor, weight: &Tensor, pad: usize, stride: usize, dil: usize) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    let (ci, co, k, k2) = weight.dims4()?;
    if ci != c || k != k2 {
        return Err(shape_err(format!("weight with {c} input channels"), format!("{:?}", weight.dims())));
    }
    let span = dil * (k - 1) + 1;
    let out_h = ((h - 1) * stride + span).checked_sub(2 * pad);
    let out_w = ((w - 1) * stride + span).checked_sub(2 * pad);
    let (Some(oh), Some(ow)) = (out_h, out_w) else {
        return Err(shape_err("non-empty transposed convolution output", format!("{h}x{w} with padding {pad}")));
    };
    let g = Geometry::new(co, oh, ow, k, stride, pad, dil)?;
    debug_assert_eq!((g.oh, g.ow), (h, w));
    let wt = weight.reshape((ci, co * k * k))?.t()?;
    let cols = wt.broadcast_matmul(&x.reshape((n, c, h * w))?)?;
    Ok(cols.contiguous()?.apply_op1(Col2Im(g))?)
}
