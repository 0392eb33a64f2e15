//! Central finite-difference gradient checking against autodiff.

use candle_core::{DType, Tensor, Var};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub eps: f64,
    /// Denominator floor so near-zero gradients are compared absolutely.
    pub floor: f64,
    /// Check at most this many entries per variable (evenly strided).
    pub max_entries: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            floor: 1e-2,
            max_entries: 64,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst: Option<(usize, usize, f64, f64)>,
}

pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Compares `d loss / d var` from backprop with central differences for every var.
/// `loss` must return a scalar f64 tensor and be a pure function of the vars.
pub fn check_gradients<F>(loss: F, vars: &[&Var], cfg: GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn() -> Result<Tensor>,
{
    let eval = |f: &F| -> Result<f64> {
        let t = f()?;
        if t.dtype() != DType::F64 {
            return Err(Error::InvalidInput("gradient checks need f64".into()));
        }
        Ok(t.reshape(())?.to_scalar::<f64>()?)
    };
    let grads = loss()?.backward()?;
    let mut report = GradCheckReport::default();
    for (vi, var) in vars.iter().enumerate() {
        let shape = var.shape().clone();
        let base: Vec<f64> = var.as_tensor().flatten_all()?.to_vec1()?;
        let analytic: Vec<f64> = match grads.get(var.as_tensor()) {
            Some(g) => g.flatten_all()?.to_vec1()?,
            None => vec![0.0; base.len()],
        };
        let stride = (base.len() / cfg.max_entries.max(1)).max(1);
        let mut work = base.clone();
        for i in (0..base.len()).step_by(stride) {
            work[i] = base[i] + cfg.eps;
            var.set(&Tensor::from_vec(work.clone(), &shape, var.device())?)?;
            let plus = eval(&loss)?;
            work[i] = base[i] - cfg.eps;
            var.set(&Tensor::from_vec(work.clone(), &shape, var.device())?)?;
            let minus = eval(&loss)?;
            work[i] = base[i];
            let numeric = (plus - minus) / (2.0 * cfg.eps);
            let err = relative_error(analytic[i], numeric, cfg.floor);
            report.checked += 1;
            if err > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(err);
                report.worst = Some((vi, i, analytic[i], numeric));
            }
        }
        var.set(&Tensor::from_vec(base, &shape, var.device())?)?;
    }
    Ok(report)
}
