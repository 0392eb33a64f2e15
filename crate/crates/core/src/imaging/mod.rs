//! Images, structure maps, Canny edges, pyramid targets and hole-mask generators.

mod canny;
mod image;
pub mod masks;
mod plane;
pub(crate) mod png_io;
mod pyramid;

pub use canny::{canny_edges, canny_with, gaussian_blur, CannyConfig};
pub use image::{normalize_input, Image, ValueDomain, LUMA};
pub use masks::{gen_blob_mask, gen_irregular_mask, sample_mask, MaskKind};
pub use plane::Plane;
pub use pyramid::{dilate_subsample, pyramid_targets, PyramidTargets};

use crate::error::{Error, Result};
use crate::mask::MaskBitmap;

/// Binary edge map, every value is exactly 0 or 1.
#[derive(Clone, PartialEq, Debug)]
pub struct EdgeMap(Plane);

impl EdgeMap {
    pub fn zeros(h: usize, w: usize) -> Self {
        Self(Plane::zeros(h, w))
    }

    pub fn from_plane(p: Plane) -> Result<Self> {
        if p.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidInput("edge map must be binary".into()));
        }
        Ok(Self(p))
    }

    pub(crate) fn from_plane_unchecked(p: Plane) -> Self {
        Self(p)
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.0.get(r, c) != 0.0
    }

    pub fn count(&self) -> usize {
        self.0.count_above(0.5)
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    pub fn plane(&self) -> &Plane {
        &self.0
    }

    pub fn into_plane(self) -> Plane {
        self.0
    }

    /// Clears every edge inside the hole.
    pub fn masked(&self, mask: &MaskBitmap) -> Result<Self> {
        if mask.dims() != self.dims() {
            return Err(crate::error::shape_err(
                format!("{:?}", self.dims()),
                format!("{:?}", mask.dims()),
            ));
        }
        let (h, w) = self.dims();
        Ok(Self(Plane::from_fn(h, w, |r, c| {
            if mask.get(r, c) {
                0.0
            } else {
                self.0.get(r, c)
            }
        })))
    }
}

/// Anti-aliased line raster with values in `[0, 1]`.
#[derive(Clone, PartialEq, Debug)]
pub struct LineMap(Plane);

impl LineMap {
    pub fn zeros(h: usize, w: usize) -> Self {
        Self(Plane::zeros(h, w))
    }

    pub fn from_plane(p: Plane) -> Result<Self> {
        if p.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidInput("line map values must lie in [0, 1]".into()));
        }
        Ok(Self(p))
    }

    pub(crate) fn from_plane_unchecked(p: Plane) -> Self {
        Self(p)
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.0.get(r, c)
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    pub fn plane(&self) -> &Plane {
        &self.0
    }

    pub fn into_plane(self) -> Plane {
        self.0
    }
}

/// Pixels within this Chebyshev distance of a hole never carry input edges.
pub const HOLE_EDGE_MARGIN: usize = 2;

/// Edges the model sees: Canny on the corrupted image (holes painted white), cleared
/// inside the hole and a small margin around it so the hole boundary itself is not an edge.
pub fn masked_edges(img: &Image, mask: &MaskBitmap, cfg: &CannyConfig) -> Result<EdgeMap> {
    let corrupted = img.to_unit().masked_white(mask)?;
    let edges = canny_with(&corrupted.to_gray(), cfg)?;
    edges.masked(&mask.dilated(HOLE_EDGE_MARGIN))
}
