use crate::error::{shape_err, Error, Result};

use super::{EdgeMap, LineMap, Plane};

/// Edge and line supervision at three scales, coarsest first.
///
/// For a 256 source the scales are 64, 128 and 256; the finest level is the source itself.
#[derive(Clone, Debug)]
pub struct PyramidTargets {
    pub edges: [EdgeMap; 3],
    pub lines: [LineMap; 3],
}

impl PyramidTargets {
    pub fn resolutions(&self) -> [usize; 3] {
        [
            self.edges[0].dims().0,
            self.edges[1].dims().0,
            self.edges[2].dims().0,
        ]
    }
}

/// 2x2 dilation followed by nearest-neighbour subsampling by two.
///
/// The structuring element is anchored at the top-left pixel, so each output pixel is the
/// maximum over the corresponding 2x2 source block.
pub fn dilate_subsample(src: &Plane) -> Result<Plane> {
    let (h, w) = src.dims();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::InvalidInput(format!("cannot halve {h}x{w}")));
    }
    let dilated = Plane::from_fn(h, w, |r, c| {
        let r1 = (r + 1).min(h - 1);
        let c1 = (c + 1).min(w - 1);
        src.get(r, c)
            .max(src.get(r, c1))
            .max(src.get(r1, c))
            .max(src.get(r1, c1))
    });
    Ok(Plane::from_fn(h / 2, w / 2, |r, c| dilated.get(2 * r, 2 * c)))
}

pub fn pyramid_targets(edge: &EdgeMap, line: &LineMap) -> Result<PyramidTargets> {
    let (h, w) = edge.dims();
    if line.dims() != (h, w) {
        return Err(shape_err(format!("{h}x{w}"), format!("{:?}", line.dims())));
    }
    if h != w || h % 4 != 0 || h == 0 {
        return Err(Error::InvalidInput(format!(
            "pyramid source must be square with side divisible by 4, got {h}x{w}"
        )));
    }
    let e2 = edge.plane().clone();
    let e1 = dilate_subsample(&e2)?;
    let e0 = dilate_subsample(&e1)?;
    let l2 = line.plane().clone();
    let l1 = dilate_subsample(&l2)?;
    let l0 = dilate_subsample(&l1)?;
    Ok(PyramidTargets {
        edges: [
            EdgeMap::from_plane_unchecked(e0),
            EdgeMap::from_plane_unchecked(e1),
            EdgeMap::from_plane_unchecked(e2),
        ],
        lines: [
            LineMap::from_plane_unchecked(l0),
            LineMap::from_plane_unchecked(l1),
            LineMap::from_plane_unchecked(l2),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeros_stay_zero() {
        let t = pyramid_targets(&EdgeMap::zeros(256, 256), &LineMap::zeros(256, 256)).unwrap();
        assert_eq!(t.resolutions(), [64, 128, 256]);
        for e in &t.edges {
            assert_eq!(e.count(), 0);
        }
        for l in &t.lines {
            assert_eq!(l.plane().max_value(), 0.0);
        }
    }

    #[test]
    fn single_pixel_survives() {
        let mut p = Plane::zeros(256, 256);
        p.set(101, 37, 1.0);
        let e = EdgeMap::from_plane(p).unwrap();
        let t = pyramid_targets(&e, &LineMap::zeros(256, 256)).unwrap();
        assert!(t.edges[1].count() >= 1);
        assert!(t.edges[0].count() >= 1);
    }

    #[test]
    fn wrong_resolution_is_rejected() {
        assert!(pyramid_targets(&EdgeMap::zeros(30, 30), &LineMap::zeros(30, 30)).is_err());
        assert!(pyramid_targets(&EdgeMap::zeros(64, 32), &LineMap::zeros(64, 32)).is_err());
        assert!(pyramid_targets(&EdgeMap::zeros(64, 64), &LineMap::zeros(32, 32)).is_err());
    }
}
