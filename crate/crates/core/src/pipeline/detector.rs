//! Wireframe detection interface and the synthetic oracle backend.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::wireframe::{LineSegment, Wireframe};

/// Hex SHA-256 of the 8-bit RGB pixels plus dimensions.
pub fn image_digest(image: &Image) -> String {
    let (h, w) = image.dims();
    let mut hasher = Sha256::new();
    hasher.update((h as u64).to_le_bytes());
    hasher.update((w as u64).to_le_bytes());
    hasher.update(image.to_unit().to_rgb8());
    hex::encode(hasher.finalize())
}

pub trait WireframeDetector: Send + Sync {
    /// Scored line segments for a `[0, 1]` image.
    fn detect(&self, image: &Image) -> Result<Wireframe>;
}

/// Always returns the same wireframe (rescaled to the image), e.g. one loaded from JSON.
pub struct FixedDetector(pub Wireframe);

impl WireframeDetector for FixedDetector {
    fn detect(&self, image: &Image) -> Result<Wireframe> {
        let (h, w) = image.dims();
        if self.0.image_size() == (h, w) {
            Ok(self.0.clone())
        } else {
            self.0.resized(h, w)
        }
    }
}

/// Sees nothing.
pub struct NullDetector;

impl WireframeDetector for NullDetector {
    fn detect(&self, image: &Image) -> Result<Wireframe> {
        let (h, w) = image.dims();
        Ok(Wireframe::empty(h, w))
    }
}

/// Optional degradation applied by [`OracleDetector`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Corruption {
    pub seed: u64,
    /// Endpoint jitter in pixels (uniform in `[-jitter, jitter]`).
    pub jitter: f64,
    /// Extra low-confidence lines per image.
    pub spurious: usize,
    /// Scores of spurious lines are drawn from this range.
    pub spurious_score: (f64, f64),
}

impl Default for Corruption {
    fn default() -> Self {
        Self {
            seed: 0,
            jitter: 0.0,
            spurious: 4,
            spurious_score: (0.5, 0.9),
        }
    }
}

/// Answers with the planted lines of a known scene. Exact pixel matches are found by
/// digest; otherwise the scene of the same size agreeing on the most pixels wins, as long
/// as at least half the pixels agree (so masked copies still resolve).
pub struct OracleDetector {
    scenes: Vec<(Image, Wireframe)>,
    by_digest: HashMap<String, usize>,
    corruption: Option<Corruption>,
}

pub const ORACLE_MIN_AGREEMENT: f64 = 0.5;

impl OracleDetector {
    pub fn new(scenes: Vec<(Image, Wireframe)>) -> Self {
        let by_digest = scenes
            .iter()
            .enumerate()
            .map(|(i, (img, _))| (image_digest(img), i))
            .collect();
        Self {
            scenes,
            by_digest,
            corruption: None,
        }
    }

    pub fn with_corruption(mut self, c: Corruption) -> Self {
        self.corruption = Some(c);
        self
    }

    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }

    fn lookup(&self, image: &Image) -> Option<usize> {
        if let Some(&i) = self.by_digest.get(&image_digest(image)) {
            return Some(i);
        }
        let query = image.to_unit().to_rgb8();
        let n = image.height() * image.width();
        let mut best: Option<(usize, usize)> = None;
        for (i, (img, _)) in self.scenes.iter().enumerate() {
            if img.dims() != image.dims() {
                continue;
            }
            let agree = img
                .to_rgb8()
                .chunks_exact(3)
                .zip(query.chunks_exact(3))
                .filter(|(a, b)| a.iter().zip(*b).all(|(x, y)| x.abs_diff(*y) <= 2))
                .count();
            if best.map_or(true, |(_, b)| agree > b) {
                best = Some((i, agree));
            }
        }
        best.filter(|&(_, a)| a as f64 >= ORACLE_MIN_AGREEMENT * n as f64)
            .map(|(i, _)| i)
    }

    fn corrupt(&self, wf: &Wireframe, c: &Corruption, digest: &str) -> Result<Wireframe> {
        let (h, w) = wf.image_size();
        let key = u64::from_str_radix(&digest[..16], 16).unwrap_or(0);
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed ^ key);
        let clamp = |v: f64, n: usize| v.clamp(0.0, n as f64 - 1.0);
        let mut lines = Vec::with_capacity(wf.len() + c.spurious);
        for l in wf.lines() {
            let mut j = || {
                if c.jitter > 0.0 {
                    rng.gen_range(-c.jitter..=c.jitter)
                } else {
                    0.0
                }
            };
            let (a, b) = (l.a(), l.b());
            let (x1, y1) = (clamp(a.x + j(), w), clamp(a.y + j(), h));
            let (x2, y2) = (clamp(b.x + j(), w), clamp(b.y + j(), h));
            match LineSegment::from_coords(x1, y1, x2, y2, l.score()) {
                Ok(seg) => lines.push(seg),
                Err(_) => lines.push(*l),
            }
        }
        for _ in 0..c.spurious {
            let x1 = rng.gen_range(0.0..w as f64 - 1.0);
            let y1 = rng.gen_range(0.0..h as f64 - 1.0);
            let x2 = rng.gen_range(0.0..w as f64 - 1.0);
            let y2 = rng.gen_range(0.0..h as f64 - 1.0);
            let score = rng.gen_range(c.spurious_score.0..=c.spurious_score.1);
            if let Ok(seg) = LineSegment::from_coords(x1, y1, x2, y2, score) {
                lines.push(seg);
            }
        }
        Wireframe::new(h, w, lines)
    }
}

impl WireframeDetector for OracleDetector {
    fn detect(&self, image: &Image) -> Result<Wireframe> {
        image.check_domain()?;
        let (h, w) = image.dims();
        let Some(i) = self.lookup(image) else {
            return Ok(Wireframe::empty(h, w));
        };
        let wf = &self.scenes[i].1;
        match &self.corruption {
            Some(c) => self.corrupt(wf, c, &image_digest(&self.scenes[i].0)),
            None => Ok(wf.clone()),
        }
    }
}

/// Wraps a closure as a detector (handy for failure injection in tests).
pub struct FnDetector<F>(pub F);

impl<F> WireframeDetector for FnDetector<F>
where
    F: Fn(&Image) -> Result<Wireframe> + Send + Sync,
{
    fn detect(&self, image: &Image) -> Result<Wireframe> {
        (self.0)(image)
    }
}

pub fn detector_error(msg: impl Into<String>) -> Error {
    Error::Detector(msg.into())
}
