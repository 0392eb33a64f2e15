//! Canny edge extraction on a `[0, 1]` grayscale plane.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{EdgeMap, Plane};

/// Blur width and hysteresis thresholds, the latter as fractions of the peak gradient magnitude.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CannyConfig {
    pub sigma: f32,
    pub low: f32,
    pub high: f32,
}

impl Default for CannyConfig {
    fn default() -> Self {
        Self {
            sigma: 2.0,
            low: 0.1,
            high: 0.2,
        }
    }
}

pub fn canny_edges(gray: &Plane, sigma: f32) -> Result<EdgeMap> {
    canny_with(
        gray,
        &CannyConfig {
            sigma,
            ..CannyConfig::default()
        },
    )
}

pub fn canny_with(gray: &Plane, cfg: &CannyConfig) -> Result<EdgeMap> {
    if !gray.all_finite() {
        return Err(Error::NonFinite("canny input".into()));
    }
    if !(cfg.sigma > 0.0) || !(0.0..=cfg.high).contains(&cfg.low) || cfg.high > 1.0 {
        return Err(Error::InvalidInput(format!("bad canny config {cfg:?}")));
    }
    let (h, w) = gray.dims();
    if h == 0 || w == 0 {
        return Ok(EdgeMap::zeros(h, w));
    }
    let blurred = gaussian_blur(gray, cfg.sigma);
    let (gx, gy) = sobel(&blurred);
    let mag = Plane::from_fn(h, w, |r, c| gx.get(r, c).hypot(gy.get(r, c)));
    let peak = mag.max_value();
    if peak <= 0.0 {
        return Ok(EdgeMap::zeros(h, w));
    }

    let thin = non_max_suppression(&mag, &gx, &gy);
    let (lo, hi) = (cfg.low * peak, cfg.high * peak);
    Ok(hysteresis(&thin, lo, hi))
}

fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f32> = (-radius..=radius)
        .map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f32 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

#[inline]
fn clamp_idx(i: i64, n: usize) -> usize {
    i.clamp(0, n as i64 - 1) as usize
}

/// Separable Gaussian blur with replicated borders.
pub fn gaussian_blur(src: &Plane, sigma: f32) -> Plane {
    let k = gaussian_kernel(sigma);
    let radius = (k.len() / 2) as i64;
    let (h, w) = src.dims();
    let horiz = Plane::from_fn(h, w, |r, c| {
        k.iter()
            .enumerate()
            .map(|(i, kv)| kv * src.get(r, clamp_idx(c as i64 + i as i64 - radius, w)))
            .sum()
    });
    Plane::from_fn(h, w, |r, c| {
        k.iter()
            .enumerate()
            .map(|(i, kv)| kv * horiz.get(clamp_idx(r as i64 + i as i64 - radius, h), c))
            .sum()
    })
}

fn sobel(src: &Plane) -> (Plane, Plane) {
    let (h, w) = src.dims();
    let at = |r: i64, c: i64| src.get(clamp_idx(r, h), clamp_idx(c, w));
    let gx = Plane::from_fn(h, w, |r, c| {
        let (r, c) = (r as i64, c as i64);
        (at(r - 1, c + 1) + 2.0 * at(r, c + 1) + at(r + 1, c + 1))
            - (at(r - 1, c - 1) + 2.0 * at(r, c - 1) + at(r + 1, c - 1))
    });
    let gy = Plane::from_fn(h, w, |r, c| {
        let (r, c) = (r as i64, c as i64);
        (at(r + 1, c - 1) + 2.0 * at(r + 1, c) + at(r + 1, c + 1))
            - (at(r - 1, c - 1) + 2.0 * at(r - 1, c) + at(r - 1, c + 1))
    });
    (gx, gy)
}

/// Keeps ridge pixels along the quantized gradient direction. Ties resolve toward the
/// lower-index neighbour so a symmetric ridge stays one pixel wide.
fn non_max_suppression(mag: &Plane, gx: &Plane, gy: &Plane) -> Plane {
    let (h, w) = mag.dims();
    let at = |r: i64, c: i64| {
        if r < 0 || c < 0 || r >= h as i64 || c >= w as i64 {
            0.0
        } else {
            mag.get(r as usize, c as usize)
        }
    };
    Plane::from_fn(h, w, |r, c| {
        let m = mag.get(r, c);
        if m <= 0.0 {
            return 0.0;
        }
        let angle = gy.get(r, c).atan2(gx.get(r, c)).to_degrees();
        let angle = if angle < 0.0 { angle + 180.0 } else { angle };
        let (dr, dc) = if !(22.5..157.5).contains(&angle) {
            (0, 1)
        } else if angle < 67.5 {
            (1, 1)
        } else if angle < 112.5 {
            (1, 0)
        } else {
            (1, -1)
        };
        let (r, c) = (r as i64, c as i64);
        let before = at(r - dr, c - dc);
        let after = at(r + dr, c + dc);
        if m > before && m >= after {
            m
        } else {
            0.0
        }
    })
}

fn hysteresis(thin: &Plane, lo: f32, hi: f32) -> EdgeMap {
    let (h, w) = thin.dims();
    let mut out = Plane::zeros(h, w);
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if thin.get(r, c) >= hi {
                out.set(r, c, 1.0);
                stack.push((r, c));
            }
        }
    }
    while let Some((r, c)) = stack.pop() {
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                    continue;
                }
                let (nr, nc) = (nr as usize, nc as usize);
                if out.get(nr, nc) == 0.0 && thin.get(nr, nc) >= lo {
                    out.set(nr, nc, 1.0);
                    stack.push((nr, nc));
                }
            }
        }
    }
    EdgeMap::from_plane_unchecked(out)
}
