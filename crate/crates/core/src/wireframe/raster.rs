//! Anti-aliased rasterization of line segments.
//!
//! Each segment is drawn as a one pixel wide rectangle with square caps (half a pixel
//! past each endpoint). A pixel's value is the exact area of its unit square covered by
//! that rectangle, and pixels whose centre lies more than one pixel from the segment are
//! left at zero. Overlapping segments combine by per-pixel maximum.

use crate::error::{Error, Result};
use crate::imaging::{LineMap, Plane};

use super::{Junction, Wireframe};

type Pt = (f64, f64);

fn clip_half_plane(poly: &[Pt], inside: impl Fn(Pt) -> f64) -> Vec<Pt> {
    // `inside(p) >= 0` keeps p; the boundary is where it crosses zero (linear in p).
    let mut out = Vec::with_capacity(poly.len() + 2);
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        let (fp, fq) = (inside(p), inside(q));
        if fp >= 0.0 {
            out.push(p);
        }
        if (fp >= 0.0) != (fq >= 0.0) {
            let t = fp / (fp - fq);
            out.push((p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1)));
        }
    }
    out
}

fn polygon_area(poly: &[Pt]) -> f64 {
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        acc += p.0 * q.1 - q.0 * p.1;
    }
    acc.abs() * 0.5
}

fn point_segment_dist(p: Pt, a: &Junction, b: &Junction) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = (((p.0 - a.x) * dx + (p.1 - a.y) * dy) / len2).clamp(0.0, 1.0);
    ((a.x + t * dx - p.0).powi(2) + (a.y + t * dy - p.1).powi(2)).sqrt()
}

fn stroke_rect(a: &Junction, b: &Junction) -> [Pt; 4] {
    let len = a.dist2(b).sqrt();
    let (ux, uy) = ((b.x - a.x) / len * 0.5, (b.y - a.y) / len * 0.5);
    let (nx, ny) = (-uy, ux);
    let (a0, b0) = ((a.x - ux, a.y - uy), (b.x + ux, b.y + uy));
    [
        (a0.0 + nx, a0.1 + ny),
        (b0.0 + nx, b0.1 + ny),
        (b0.0 - nx, b0.1 - ny),
        (a0.0 - nx, a0.1 - ny),
    ]
}

/// Coverage of the pixel centred at (`col`, `row`) by the segment `a`-`b`.
pub fn segment_coverage(a: &Junction, b: &Junction, row: usize, col: usize) -> f64 {
    let centre = (col as f64, row as f64);
    if point_segment_dist(centre, a, b) > 1.0 {
        return 0.0;
    }
    let rect = stroke_rect(a, b);
    let (x0, x1) = (centre.0 - 0.5, centre.0 + 0.5);
    let (y0, y1) = (centre.1 - 0.5, centre.1 + 0.5);
    let mut poly = rect.to_vec();
    poly = clip_half_plane(&poly, |p| p.0 - x0);
    poly = clip_half_plane(&poly, |p| x1 - p.0);
    poly = clip_half_plane(&poly, |p| p.1 - y0);
    poly = clip_half_plane(&poly, |p| y1 - p.1);
    if poly.len() < 3 {
        return 0.0;
    }
    polygon_area(&poly).clamp(0.0, 1.0)
}

/// Rasterizes every line of `wf` onto an `h x w` map.
pub fn rasterize_lines(wf: &Wireframe, h: usize, w: usize) -> Result<LineMap> {
    let mut out = Plane::zeros(h, w);
    for line in wf.lines() {
        let (a, b) = (line.a(), line.b());
        for j in [a, b] {
            if j.x < 0.0 || j.y < 0.0 || j.x >= w as f64 || j.y >= h as f64 {
                return Err(Error::OutOfBounds { x: j.x, y: j.y, h, w });
            }
        }
        let c0 = (a.x.min(b.x) - 1.5).floor().max(0.0) as usize;
        let c1 = ((a.x.max(b.x) + 1.5).ceil() as usize).min(w.saturating_sub(1));
        let r0 = (a.y.min(b.y) - 1.5).floor().max(0.0) as usize;
        let r1 = ((a.y.max(b.y) + 1.5).ceil() as usize).min(h.saturating_sub(1));
        for r in r0..=r1 {
            for c in c0..=c1 {
                let v = segment_coverage(&a, &b, r, c) as f32;
                if v > out.get(r, c) {
                    out.set(r, c, v);
                }
            }
        }
    }
    Ok(LineMap::from_plane_unchecked(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wireframe::LineSegment;

    fn wf(lines: &[(f64, f64, f64, f64)], n: usize) -> Wireframe {
        Wireframe::new(
            n,
            n,
            lines
                .iter()
                .map(|&(x1, y1, x2, y2)| LineSegment::from_coords(x1, y1, x2, y2, 1.0).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn horizontal_segment_on_integer_row() {
        let map = rasterize_lines(&wf(&[(2.0, 5.0, 11.0, 5.0)], 16), 16, 16).unwrap();
        for c in 2..=11 {
            assert!((map.get(5, c) - 1.0).abs() < 1e-6, "col {c}: {}", map.get(5, c));
        }
        for c in 0..16 {
            assert_eq!(map.get(4, c), 0.0);
            assert_eq!(map.get(6, c), 0.0);
        }
        assert_eq!(map.get(5, 0), 0.0);
        assert_eq!(map.get(5, 13), 0.0);
    }

    #[test]
    fn half_pixel_offset_splits_evenly() {
        let map = rasterize_lines(&wf(&[(2.0, 5.5, 11.0, 5.5)], 16), 16, 16).unwrap();
        assert!((map.get(5, 6) - 0.5).abs() < 1e-6);
        assert!((map.get(6, 6) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn empty_wireframe_is_blank() {
        let map = rasterize_lines(&Wireframe::empty(8, 8), 8, 8).unwrap();
        assert_eq!(map.plane().max_value(), 0.0);
    }

    #[test]
    fn out_of_bounds_rejected() {
        assert!(rasterize_lines(&wf(&[(2.0, 5.0, 11.0, 5.0)], 16), 8, 8).is_err());
    }
}
