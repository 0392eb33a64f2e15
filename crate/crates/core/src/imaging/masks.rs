//! Seeded hole-mask generators: free-form brush strokes and smooth object-like blobs.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::mask::MaskBitmap;

/// Blob masks are accepted only inside this coverage band.
pub const BLOB_COVERAGE: (f64, f64) = (0.05, 0.40);

pub const BLOB_MAX_TRIES: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskKind {
    Irregular,
    Blob,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stamps a capsule of radius `radius` around segment `a`-`b` (coordinates in pixels).
fn stamp_capsule(mask: &mut MaskBitmap, a: (f64, f64), b: (f64, f64), radius: f64) {
    let (h, w) = mask.dims();
    let x0 = (a.0.min(b.0) - radius).floor().max(0.0) as usize;
    let x1 = (a.0.max(b.0) + radius).ceil().min(w as f64 - 1.0).max(0.0) as usize;
    let y0 = (a.1.min(b.1) - radius).floor().max(0.0) as usize;
    let y1 = (a.1.max(b.1) + radius).ceil().min(h as f64 - 1.0).max(0.0) as usize;
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (px, py) = (x as f64, y as f64);
            let t = if len2 > 0.0 {
                (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (qx, qy) = (a.0 + t * dx - px, a.1 + t * dy - py);
            if qx * qx + qy * qy <= radius * radius {
                mask.set(y, x, true);
            }
        }
    }
}

/// Free-form brush strokes: 1-8 polylines of 4-12 vertices with random turns.
///
/// Stroke width and segment length are specified for a 256 pixel side and scale with
/// the smaller image side.
pub fn gen_irregular_mask(seed: u64, h: usize, w: usize) -> MaskBitmap {
    let mut mask = MaskBitmap::empty(h, w);
    if h == 0 || w == 0 {
        return mask;
    }
    let mut rng = rng_for(seed, 1);
    let scale = h.min(w) as f64 / 256.0;
    let strokes = rng.gen_range(1..=8);
    for _ in 0..strokes {
        let vertices = rng.gen_range(4..=12);
        let width = rng.gen_range(12.0..=40.0) * scale;
        let mut p = (rng.gen_range(0.0..w as f64), rng.gen_range(0.0..h as f64));
        let mut heading = rng.gen_range(0.0..TAU);
        for _ in 1..vertices {
            heading += rng.gen_range(-0.4 * PI..0.4 * PI);
            let len = rng.gen_range(8.0..32.0) * scale;
            let q = (
                (p.0 + len * heading.cos()).clamp(0.0, w as f64 - 1.0),
                (p.1 + len * heading.sin()).clamp(0.0, h as f64 - 1.0),
            );
            stamp_capsule(&mut mask, p, q, width / 2.0);
            p = q;
        }
    }
    mask
}

/// Star-shaped blob whose log-radius follows a closed, smoothed random walk.
fn stamp_blob(mask: &mut MaskBitmap, rng: &mut ChaCha8Rng, radius: f64) {
    let (h, w) = mask.dims();
    const N: usize = 64;
    let step = Normal::new(0.0, 0.15).expect("valid normal");
    let mut walk = vec![0.0f64; N + 1];
    for i in 1..=N {
        walk[i] = walk[i - 1] + step.sample(rng);
    }
    // Remove drift so the perimeter closes.
    let drift = walk[N];
    let closed: Vec<f64> = (0..N).map(|i| walk[i] - drift * i as f64 / N as f64).collect();
    let smooth: Vec<f64> = (0..N)
        .map(|i| (0..5).map(|k| closed[(i + N + k - 2) % N]).sum::<f64>() / 5.0)
        .collect();
    let radii: Vec<f64> = smooth
        .iter()
        .map(|&v| (radius * v.exp()).clamp(0.5 * radius, 1.6 * radius))
        .collect();

    let cx = rng.gen_range(0.2..0.8) * w as f64;
    let cy = rng.gen_range(0.2..0.8) * h as f64;
    let reach = 1.6 * radius + 1.0;
    let x0 = (cx - reach).floor().max(0.0) as usize;
    let x1 = ((cx + reach).ceil() as usize).min(w - 1);
    let y0 = (cy - reach).floor().max(0.0) as usize;
    let y1 = ((cy + reach).ceil() as usize).min(h - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let theta = dy.atan2(dx).rem_euclid(TAU);
            let pos = theta / TAU * N as f64;
            let i = pos.floor() as usize % N;
            let frac = pos - pos.floor();
            let r = radii[i] * (1.0 - frac) + radii[(i + 1) % N] * frac;
            if dx * dx + dy * dy <= r * r {
                mask.set(y, x, true);
            }
        }
    }
}

/// One or two smooth blobs, rejection-sampled into the blob coverage band.
pub fn gen_blob_mask(seed: u64, h: usize, w: usize) -> Result<MaskBitmap> {
    let mut rng = rng_for(seed, 2);
    let side = ((h * w) as f64).sqrt();
    for _ in 0..BLOB_MAX_TRIES {
        let mut mask = MaskBitmap::empty(h, w);
        if h == 0 || w == 0 {
            break;
        }
        let count = rng.gen_range(1..=2);
        let shrink = if count == 2 { std::f64::consts::FRAC_1_SQRT_2 } else { 1.0 };
        for _ in 0..count {
            let radius = rng.gen_range(0.12..0.33) * side * shrink;
            stamp_blob(&mut mask, &mut rng, radius);
        }
        let cov = mask.coverage();
        if (BLOB_COVERAGE.0..=BLOB_COVERAGE.1).contains(&cov) {
            return Ok(mask);
        }
    }
    Err(Error::RejectionBudget(BLOB_MAX_TRIES))
}

/// Picks irregular strokes or a blob with equal probability, all decided by `seed`.
pub fn sample_mask(seed: u64, h: usize, w: usize) -> Result<(MaskKind, MaskBitmap)> {
    let mut rng = rng_for(seed, 0);
    let inner: u64 = rng.gen();
    if rng.gen_bool(0.5) {
        Ok((MaskKind::Irregular, gen_irregular_mask(inner, h, w)))
    } else {
        Ok((MaskKind::Blob, gen_blob_mask(inner, h, w)?))
    }
}
