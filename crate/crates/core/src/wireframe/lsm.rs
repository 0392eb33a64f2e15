use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Error, Result};

use super::{LineSegment, MaskBitmap, Wireframe};

/// Masking probability of a single line: 1 when both endpoints fall in the hole,
/// 0 when neither does, `m` when exactly one does.
pub fn lsm_indicator(line: &LineSegment, mask: &MaskBitmap, m: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&m) {
        return Err(Error::InvalidProbability(m));
    }
    let a = mask.contains_point(line.a().x, line.a().y)?;
    let b = mask.contains_point(line.b().x, line.b().y)?;
    Ok(match (a, b) {
        (true, true) => 1.0,
        (false, false) => 0.0,
        _ => m,
    })
}

/// Per-line keep flags: each line is dropped independently with its indicator probability.
pub fn lsm_decisions(wf: &Wireframe, mask: &MaskBitmap, m: f64, seed: u64) -> Result<Vec<bool>> {
    if wf.image_size() != mask.dims() {
        return Err(shape_err(
            format!("{:?}", wf.image_size()),
            format!("{:?}", mask.dims()),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    wf.lines()
        .iter()
        .map(|line| {
            let p = lsm_indicator(line, mask, m)?;
            Ok(if p <= 0.0 {
                true
            } else if p >= 1.0 {
                false
            } else {
                rng.gen::<f64>() >= p
            })
        })
        .collect()
}

/// Drops whole lines per [`lsm_decisions`]; retained lines are untouched.
pub fn lsm_filter(wf: &Wireframe, mask: &MaskBitmap, m: f64, seed: u64) -> Result<Wireframe> {
    wf.select(&lsm_decisions(wf, mask, m, seed)?)
}
