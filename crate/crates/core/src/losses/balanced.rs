use candle_core::{DType, Tensor};

use crate::error::{shape_err, Result};

/// Mean absolute error over the hole plus mean absolute error over the rest, each
/// normalized by its own area. `mask` is `(n, 1, h, w)` and broadcasts over channels; an
/// empty region contributes 0.
pub fn balanced_l1(pred: &Tensor, target: &Tensor, mask: &Tensor) -> Result<Tensor> {
    if pred.dims() != target.dims() {
        return Err(shape_err(format!("{:?}", pred.dims()), format!("{:?}", target.dims())));
    }
    let (n, c, h, w) = pred.dims4()?;
    if mask.dims() != [n, 1, h, w] {
        return Err(shape_err(format!("[{n}, 1, {h}, {w}]"), format!("{:?}", mask.dims())));
    }
    let mask = mask.to_dtype(pred.dtype())?;
    let diff = (pred - target)?.abs()?;
    let hole_area = mask.sum_all()?.to_dtype(DType::F64)?.to_scalar::<f64>()? * c as f64;
    let total = (n * c * h * w) as f64;
    let valid_area = total - hole_area;

    let mut loss = Tensor::zeros((), pred.dtype(), pred.device())?;
    if hole_area > 0.0 {
        let hole = diff.broadcast_mul(&mask)?.sum_all()?;
        loss = (loss + (hole / hole_area)?)?;
    }
    if valid_area > 0.0 {
        let valid = diff.broadcast_mul(&(1.0 - &mask)?)?.sum_all()?;
        loss = (loss + (valid / valid_area)?)?;
    }
    Ok(loss)
}
