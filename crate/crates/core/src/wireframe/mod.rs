//! Wireframe data model, line segment masking, score thresholding, anti-aliased
//! rasterization and structural average precision.

mod lsm;
mod raster;
mod sap;

pub use lsm::{lsm_decisions, lsm_filter, lsm_indicator};
pub use raster::{rasterize_lines, segment_coverage};
pub use sap::{average_precision, pr_curve, sap_score, segment_distance2};

pub use crate::mask::MaskBitmap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A line endpoint in image coordinates: `x` is the column, `y` the row, pixel centres
/// at integers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Junction {
    pub x: f64,
    pub y: f64,
}

impl Junction {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist2(&self, other: &Junction) -> f64 {
        let (dx, dy) = (self.x - other.x, self.y - other.y);
        dx * dx + dy * dy
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSegment {
    a: Junction,
    b: Junction,
    score: f64,
}

impl LineSegment {
    pub fn new(a: Junction, b: Junction, score: f64) -> Result<Self> {
        if !(a.x.is_finite() && a.y.is_finite() && b.x.is_finite() && b.y.is_finite()) {
            return Err(Error::NonFinite("line endpoint".into()));
        }
        if a == b {
            return Err(Error::ZeroLengthSegment { x: a.x, y: a.y });
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidProbability(score));
        }
        Ok(Self { a, b, score })
    }

    pub fn from_coords(x1: f64, y1: f64, x2: f64, y2: f64, score: f64) -> Result<Self> {
        Self::new(Junction::new(x1, y1), Junction::new(x2, y2), score)
    }

    pub fn a(&self) -> Junction {
        self.a
    }

    pub fn b(&self) -> Junction {
        self.b
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn length(&self) -> f64 {
        self.a.dist2(&self.b).sqrt()
    }

    pub fn with_score(&self, score: f64) -> Result<Self> {
        Self::new(self.a, self.b, score)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Wireframe {
    h: usize,
    w: usize,
    lines: Vec<LineSegment>,
}

#[inline]
fn inside(j: &Junction, h: usize, w: usize) -> bool {
    j.x >= 0.0 && j.y >= 0.0 && j.x < w as f64 && j.y < h as f64
}

impl Wireframe {
    pub fn new(h: usize, w: usize, lines: Vec<LineSegment>) -> Result<Self> {
        for l in &lines {
            for j in [l.a, l.b] {
                if !inside(&j, h, w) {
                    return Err(Error::OutOfBounds { x: j.x, y: j.y, h, w });
                }
            }
        }
        Ok(Self { h, w, lines })
    }

    pub fn empty(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            lines: Vec::new(),
        }
    }

    pub fn image_size(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn lines(&self) -> &[LineSegment] {
        &self.lines
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    /// Distinct junctions in first-seen order.
    pub fn junctions(&self) -> Vec<Junction> {
        let mut out: Vec<Junction> = Vec::new();
        for l in &self.lines {
            for j in [l.a, l.b] {
                if !out.contains(&j) {
                    out.push(j);
                }
            }
        }
        out
    }

    /// Keeps the lines whose flag is set, preserving order.
    pub fn select(&self, keep: &[bool]) -> Result<Self> {
        if keep.len() != self.lines.len() {
            return Err(crate::error::shape_err(self.lines.len(), keep.len()));
        }
        Ok(Self {
            h: self.h,
            w: self.w,
            lines: self
                .lines
                .iter()
                .zip(keep)
                .filter(|(_, &k)| k)
                .map(|(l, _)| *l)
                .collect(),
        })
    }

    /// Rescales coordinates onto an `h x w` grid (pixel centres map to pixel centres
    /// in the continuous sense `x' = (x + 0.5) * w'/w - 0.5`, clamped inside).
    pub fn resized(&self, h: usize, w: usize) -> Result<Self> {
        let sx = w as f64 / self.w as f64;
        let sy = h as f64 / self.h as f64;
        let map = |j: Junction| {
            Junction::new(
                ((j.x + 0.5) * sx - 0.5).clamp(0.0, w as f64 - 1e-6),
                ((j.y + 0.5) * sy - 0.5).clamp(0.0, h as f64 - 1e-6),
            )
        };
        let lines = self
            .lines
            .iter()
            .filter_map(|l| LineSegment::new(map(l.a), map(l.b), l.score).ok())
            .collect();
        Self::new(h, w, lines)
    }

    pub fn to_json(&self) -> WireframeJson {
        WireframeJson {
            h: self.h,
            w: self.w,
            lines: self
                .lines
                .iter()
                .map(|l| LineJson {
                    x1: l.a.x,
                    y1: l.a.y,
                    x2: l.b.x,
                    y2: l.b.y,
                    score: l.score,
                })
                .collect(),
        }
    }

    pub fn from_json(j: &WireframeJson) -> Result<Self> {
        let lines = j
            .lines
            .iter()
            .map(|l| LineSegment::from_coords(l.x1, l.y1, l.x2, l.y2, l.score))
            .collect::<Result<Vec<_>>>()?;
        Self::new(j.h, j.w, lines)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_json())?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Self::from_json(&serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(&self.to_json())?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

/// On-disk / wire wireframe record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireframeJson {
    pub h: usize,
    pub w: usize,
    pub lines: Vec<LineJson>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineJson {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub score: f64,
}

/// Keeps exactly the lines scoring at least `tau`, in their original order.
pub fn threshold_wireframe(wf: &Wireframe, tau: f64) -> Result<Wireframe> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidProbability(tau));
    }
    Ok(Wireframe {
        h: wf.h,
        w: wf.w,
        lines: wf.lines.iter().filter(|l| l.score >= tau).copied().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(x1: f64, y1: f64, x2: f64, y2: f64, s: f64) -> LineSegment {
        LineSegment::from_coords(x1, y1, x2, y2, s).unwrap()
    }

    #[test]
    fn zero_length_and_bad_scores_rejected() {
        assert!(matches!(
            LineSegment::from_coords(1.0, 1.0, 1.0, 1.0, 0.5),
            Err(Error::ZeroLengthSegment { .. })
        ));
        assert!(LineSegment::from_coords(0.0, 0.0, 1.0, 1.0, 1.5).is_err());
        assert!(LineSegment::from_coords(0.0, 0.0, 1.0, f64::NAN, 0.5).is_err());
    }

    #[test]
    fn endpoints_must_be_inside() {
        assert!(Wireframe::new(10, 10, vec![seg(0.0, 0.0, 10.0, 5.0, 1.0)]).is_err());
        assert!(Wireframe::new(10, 10, vec![seg(0.0, 0.0, 9.9, 5.0, 1.0)]).is_ok());
    }

    #[test]
    fn threshold_examples() {
        let wf = Wireframe::new(
            10,
            10,
            vec![seg(0.0, 0.0, 5.0, 5.0, 0.96), seg(1.0, 0.0, 5.0, 9.0, 0.94)],
        )
        .unwrap();
        assert_eq!(threshold_wireframe(&wf, 0.0).unwrap(), wf);
        let kept = threshold_wireframe(&wf, 0.95).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept.lines()[0].score(), 0.96);
        assert!(threshold_wireframe(&wf, 1.0).unwrap().is_empty());
        assert!(threshold_wireframe(&wf, 1.1).is_err());
    }

    #[test]
    fn json_round_trip() {
        let wf = Wireframe::new(
            20,
            30,
            vec![seg(0.5, 1.25, 29.0, 19.5, 0.75), seg(3.0, 4.0, 5.0, 6.0, 1.0)],
        )
        .unwrap();
        let text = wf.to_json_string().unwrap();
        assert!(text.contains("\"x1\""));
        assert_eq!(Wireframe::from_json_str(&text).unwrap(), wf);
    }
}
