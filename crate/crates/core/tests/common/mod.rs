//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use candle_core::{DType, Device, Tensor, Var};
use mst_core::model::ModelConfig;
use mst_core::nn::gradcheck::GradCheckConfig;
use mst_core::nn::{Init, ParamStore};

/// Finite differences in f64 with a small step; far from ReLU kinks with overwhelming odds.
pub fn fd_config() -> GradCheckConfig {
    GradCheckConfig {
        eps: 1e-6,
        floor: 1e-4,
        max_entries: 24,
    }
}

pub fn randn(store: &ParamStore, name: &str, shape: &[usize]) -> Var {
    store.var(name, shape, Init::Normal(1.0)).unwrap()
}

pub fn f64_store(seed: u64) -> ParamStore {
    ParamStore::new(DType::F64, seed)
}

/// A fixed random projection turning any tensor into a scalar, so every output
/// element reaches the gradient.
pub fn probe(t: &Tensor, seed: u64) -> Tensor {
    let store = f64_store(seed);
    let w = store.var("probe", t.dims(), Init::Normal(1.0)).unwrap();
    (t * w.as_tensor()).unwrap().sum_all().unwrap()
}

/// Tiny architecture for fast training tests at 32x32.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        image_size: 32,
        widths: [4, 8, 8],
        stem_kernel: 3,
        n_res_blocks: 2,
        ea_after: 1,
        n_head: 2,
        pds_widths: [8, 4, 4],
        disc_width: 4,
    }
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Nested-loop masked efficient attention for one sample.
///
/// `x` is `d x n` (channels by positions), weights are `d x d` row-major and applied as
/// `W x`. Masked positions are excluded from the key softmax and produce zero rows.
pub fn dense_attention(
    x: &[f64],
    masked: &[bool],
    wq: &[f64],
    wk: &[f64],
    wv: &[f64],
    d: usize,
    heads: usize,
) -> Vec<f64> {
    let n = masked.len();
    let dh = d / heads;
    let proj = |w: &[f64], i: usize, p: usize| -> f64 { (0..d).map(|j| w[i * d + j] * x[j * n + p]).sum() };
    let mut out = vec![0.0; d * n];
    for h in 0..heads {
        let ch = |k: usize| h * dh + k;
        let mut q = vec![vec![0.0; dh]; n];
        let mut k = vec![vec![0.0; n]; dh];
        let mut v = vec![vec![0.0; dh]; n];
        for p in 0..n {
            let row: Vec<f64> = (0..dh).map(|c| proj(wq, ch(c), p)).collect();
            q[p] = if masked[p] { vec![0.0; dh] } else { softmax(&row) };
            for c in 0..dh {
                v[p][c] = proj(wv, ch(c), p);
            }
        }
        for c in 0..dh {
            let col: Vec<f64> = (0..n).map(|p| proj(wk, ch(c), p)).collect();
            let m = (0..n)
                .filter(|&p| !masked[p])
                .map(|p| col[p])
                .fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = (0..n)
                .map(|p| if masked[p] { 0.0 } else { (col[p] - m).exp() })
                .collect();
            let s: f64 = e.iter().sum();
            k[c] = e.into_iter().map(|x| x / s).collect();
        }
        // context[a][b] = sum_p K[a][p] V[p][b]
        let mut context = vec![vec![0.0; dh]; dh];
        for a in 0..dh {
            for b in 0..dh {
                for p in 0..n {
                    context[a][b] += k[a][p] * v[p][b];
                }
            }
        }
        for p in 0..n {
            for b in 0..dh {
                let mut acc = 0.0;
                for a in 0..dh {
                    acc += q[p][a] * context[a][b];
                }
                out[ch(b) * n + p] = acc;
            }
        }
    }
    out
}

/// Coverage of pixel (`row`, `col`) by the unit-wide, square-capped stroke from `a` to
/// `b`, estimated on an `ss x ss` subgrid.
pub fn supersampled_coverage(a: (f64, f64), b: (f64, f64), row: usize, col: usize, ss: usize) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len = (dx * dx + dy * dy).sqrt();
    let (ux, uy) = (dx / len, dy / len);
    let mut hits = 0;
    for i in 0..ss {
        for j in 0..ss {
            let px = col as f64 - 0.5 + (j as f64 + 0.5) / ss as f64;
            let py = row as f64 - 0.5 + (i as f64 + 0.5) / ss as f64;
            let (rx, ry) = (px - a.0, py - a.1);
            let along = rx * ux + ry * uy;
            let across = (-rx * uy + ry * ux).abs();
            if (-0.5..=len + 0.5).contains(&along) && across <= 0.5 {
                hits += 1;
            }
        }
    }
    hits as f64 / (ss * ss) as f64
}

/// Interpolated precision-recall area from an explicit list of ranked hit flags.
///
/// Precision at recall level r is the best precision reached at any recall >= r; the
/// area integrates that step function over recall.
pub fn pr_area(hits: &[bool], n_gt: usize) -> f64 {
    let mut points = Vec::new();
    let mut tp = 0;
    for (i, &h) in hits.iter().enumerate() {
        tp += h as usize;
        points.push((tp as f64 / n_gt as f64, tp as f64 / (i + 1) as f64));
    }
    let mut levels: Vec<f64> = points.iter().map(|p| p.0).collect();
    levels.dedup();
    let mut area = 0.0;
    let mut prev = 0.0;
    for r in levels {
        if r <= prev {
            continue;
        }
        let best = points
            .iter()
            .filter(|p| p.0 >= r)
            .map(|p| p.1)
            .fold(0.0, f64::max);
        area += (r - prev) * best;
        prev = r;
    }
    area
}

/// SSIM with an explicit 2D Gaussian window, evaluated position by position.
pub fn naive_ssim(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let k = 11;
    let sigma: f64 = 1.5;
    let mut win = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            let (y, x) = (i as f64 - 5.0, j as f64 - 5.0);
            win[i * k + j] = (-(x * x + y * y) / (2.0 * sigma * sigma)).exp();
        }
    }
    let s: f64 = win.iter().sum();
    win.iter_mut().for_each(|v| *v /= s);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    let mut count = 0;
    for r in 0..=h - k {
        for c in 0..=w - k {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let g = win[i * k + j];
                    let (x, y) = (a[(r + i) * w + c + j], b[(r + i) * w + c + j]);
                    mx += g * x;
                    my += g * y;
                    sxx += g * x * x;
                    syy += g * y * y;
                    sxy += g * x * y;
                }
            }
            let (vx, vy, cov) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    total / count as f64
}

/// Tensor from host values on the CPU.
pub fn tensor(data: Vec<f64>, shape: &[usize]) -> Tensor {
    Tensor::from_vec(data, shape, &Device::Cpu).unwrap()
}

pub fn host(t: &Tensor) -> Vec<f64> {
    t.to_dtype(DType::F64).unwrap().flatten_all().unwrap().to_vec1().unwrap()
}

/// Bitwise snapshot of every parameter in a store.
pub fn snapshot(store: &ParamStore) -> Vec<(String, Vec<u32>)> {
    store
        .vars()
        .into_iter()
        .map(|(k, v)| {
            let vals: Vec<f32> = v.as_tensor().to_dtype(DType::F32).unwrap().flatten_all().unwrap().to_vec1().unwrap();
            (k, vals.into_iter().map(f32::to_bits).collect())
        })
        .collect()
}

/// Wall time of the fastest of `reps` runs of `f`, in seconds.
pub fn best_time(reps: usize, mut f: impl FnMut()) -> f64 {
    (0..reps)
        .map(|_| {
            let t = std::time::Instant::now();
            f();
            t.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}
