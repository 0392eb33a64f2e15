//! Synthetic line scenes: rooms seen from the inside and flat backdrops with convex
//! boxes. Every polygon edge is a planted ground-truth line.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::imaging::Image;
use crate::wireframe::{LineSegment, Wireframe};

/// Planted lines carry a confidence in this range.
pub const PLANTED_SCORE: (f64, f64) = (0.95, 1.0);

type Pt = (f64, f64);

#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub seed: u64,
    pub image: Image,
    pub wireframe: Wireframe,
}

struct Region {
    poly: Vec<Pt>,
    color: [f32; 3],
    /// Brightness change per pixel along x and y.
    slope: (f32, f32),
}

fn inside_convex(poly: &[Pt], p: Pt) -> bool {
    let mut sign = 0.0f64;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
        if cross.abs() < 1e-12 {
            continue;
        }
        if sign == 0.0 {
            sign = cross.signum();
        } else if cross.signum() != sign {
            return false;
        }
    }
    true
}

fn luma(c: [f32; 3]) -> f32 {
    0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]
}

/// A colour whose luma differs from every colour in `avoid` by at least 0.15.
fn distinct_color(rng: &mut ChaCha8Rng, avoid: &[[f32; 3]]) -> [f32; 3] {
    let mut best = [0.5; 3];
    let mut best_gap = -1.0f32;
    for _ in 0..64 {
        let c = [
            rng.gen_range(0.1..0.9f32),
            rng.gen_range(0.1..0.9f32),
            rng.gen_range(0.1..0.9f32),
        ];
        let gap = avoid
            .iter()
            .map(|a| (luma(*a) - luma(c)).abs())
            .fold(f32::INFINITY, f32::min);
        if gap >= 0.15 {
            return c;
        }
        if gap > best_gap {
            best_gap = gap;
            best = c;
        }
    }
    best
}

fn polygon_lines(poly: &[Pt]) -> Vec<(Pt, Pt)> {
    (0..poly.len())
        .map(|i| (poly[i], poly[(i + 1) % poly.len()]))
        .collect()
}

/// A convex quad inside `bounds` (x0, y0, x1, y1), possibly rotated.
fn random_box(rng: &mut ChaCha8Rng, bounds: (f64, f64, f64, f64), min_side: f64) -> Option<Vec<Pt>> {
    let (x0, y0, x1, y1) = bounds;
    if x1 - x0 < min_side * 1.5 || y1 - y0 < min_side * 1.5 {
        return None;
    }
    let max_half = ((x1 - x0).min(y1 - y0) / 2.0 - 1.0).min(min_side * 1.6);
    let half_w = rng.gen_range(min_side / 2.0..max_half.max(min_side / 2.0 + 0.5));
    let half_h = rng.gen_range(min_side / 2.0..max_half.max(min_side / 2.0 + 0.5));
    let angle = if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(-0.6..0.6f64) };
    let r = half_w.hypot(half_h);
    if x1 - x0 < 2.0 * r + 2.0 || y1 - y0 < 2.0 * r + 2.0 {
        return None;
    }
    let cx = rng.gen_range(x0 + r + 1.0..x1 - r - 1.0);
    let cy = rng.gen_range(y0 + r + 1.0..y1 - r - 1.0);
    let (s, c) = angle.sin_cos();
    let corners = [(-half_w, -half_h), (half_w, -half_h), (half_w, half_h), (-half_w, half_h)];
    Some(
        corners
            .iter()
            .map(|&(dx, dy)| (cx + dx * c - dy * s, cy + dx * s + dy * c))
            .collect(),
    )
}

fn bbox(poly: &[Pt]) -> (f64, f64, f64, f64) {
    poly.iter().fold(
        (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), p| (a.min(p.0), b.min(p.1), c.max(p.0), d.max(p.1)),
    )
}

fn overlaps(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64), gap: f64) -> bool {
    a.0 - gap < b.2 && b.0 - gap < a.2 && a.1 - gap < b.3 && b.1 - gap < a.3
}

fn place_boxes(
    rng: &mut ChaCha8Rng,
    bounds: (f64, f64, f64, f64),
    count: usize,
    min_side: f64,
) -> Vec<Vec<Pt>> {
    let mut boxes: Vec<Vec<Pt>> = Vec::new();
    for _ in 0..count * 20 {
        if boxes.len() == count {
            break;
        }
        let Some(b) = random_box(rng, bounds, min_side) else {
            continue;
        };
        let bb = bbox(&b);
        if boxes.iter().all(|o| !overlaps(bbox(o), bb, 3.0)) {
            boxes.push(b);
        }
    }
    boxes
}

impl SyntheticScene {
    /// Deterministic `size x size` scene for `seed`.
    pub fn generate(seed: u64, size: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = size as f64;
        let last = s - 1.0;
        let mut regions: Vec<Region> = Vec::new();
        let mut lines: Vec<(Pt, Pt)> = Vec::new();
        let mut colors: Vec<[f32; 3]> = Vec::new();
        let slope = |rng: &mut ChaCha8Rng| {
            let k = 0.15 / s as f32;
            (rng.gen_range(-k..k), rng.gen_range(-k..k))
        };

        let box_area;
        if rng.gen_bool(0.7) {
            let x0 = (rng.gen_range(0.2..0.4) * s).round();
            let x1 = (rng.gen_range(0.6..0.8) * s).round();
            let y0 = (rng.gen_range(0.2..0.4) * s).round();
            let y1 = (rng.gen_range(0.6..0.8) * s).round();
            let wall = vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)];
            let far = |p: Pt, q: Pt| (p.0 + 3.0 * (q.0 - p.0), p.1 + 3.0 * (q.1 - p.1));
            let corners = [(0.0, 0.0), (last, 0.0), (last, last), (0.0, last)];
            let fars: Vec<Pt> = (0..4).map(|i| far(wall[i], corners[i])).collect();
            let wall_color = distinct_color(&mut rng, &colors);
            colors.push(wall_color);
            regions.push(Region { poly: wall.clone(), color: wall_color, slope: slope(&mut rng) });
            let sides = [[0, 1], [1, 2], [2, 3], [3, 0]];
            let mut side_colors: Vec<[f32; 3]> = Vec::new();
            for (k, [i, j]) in sides.iter().enumerate() {
                let mut avoid = vec![wall_color];
                if k > 0 {
                    avoid.push(side_colors[k - 1]);
                }
                if k == 3 {
                    avoid.push(side_colors[0]);
                }
                let c = distinct_color(&mut rng, &avoid);
                side_colors.push(c);
                regions.push(Region {
                    poly: vec![wall[*i], wall[*j], fars[*j], fars[*i]],
                    color: c,
                    slope: slope(&mut rng),
                });
            }
            colors.extend(side_colors);
            lines.extend(polygon_lines(&wall));
            for i in 0..4 {
                lines.push((wall[i], corners[i]));
            }
            box_area = (x0, y0, x1, y1);
        } else {
            let bg = distinct_color(&mut rng, &[]);
            colors.push(bg);
            regions.push(Region {
                poly: vec![(-1.0, -1.0), (s, -1.0), (s, s), (-1.0, s)],
                color: bg,
                slope: slope(&mut rng),
            });
            box_area = (2.0, 2.0, last - 2.0, last - 2.0);
        }

        let n_boxes = rng.gen_range(1..=3usize);
        let min_side = (s * 0.1).max(4.0);
        let mut boxes = place_boxes(&mut rng, box_area, n_boxes, min_side);
        // The painter's order puts boxes on top, so list them first.
        let mut box_regions = Vec::new();
        for b in boxes.drain(..) {
            let c = distinct_color(&mut rng, &[regions[0].color]);
            lines.extend(polygon_lines(&b));
            box_regions.push(Region { poly: b, color: c, slope: slope(&mut rng) });
        }
        box_regions.extend(regions);
        let regions = box_regions;

        const SS: usize = 4;
        let image = Image::from_fn(size, size, |r, c| {
            let mut acc = [0f32; 3];
            for sy in 0..SS {
                for sx in 0..SS {
                    let p = (
                        c as f64 - 0.5 + (sx as f64 + 0.5) / SS as f64,
                        r as f64 - 0.5 + (sy as f64 + 0.5) / SS as f64,
                    );
                    let reg = regions
                        .iter()
                        .find(|g| inside_convex(&g.poly, p))
                        .unwrap_or(regions.last().expect("at least one region"));
                    let shade = reg.slope.0 * (p.0 as f32 - s as f32 / 2.0)
                        + reg.slope.1 * (p.1 as f32 - s as f32 / 2.0);
                    for k in 0..3 {
                        acc[k] += (reg.color[k] + shade).clamp(0.0, 1.0);
                    }
                }
            }
            acc.map(|v| v / (SS * SS) as f32)
        });

        let segs = lines
            .into_iter()
            .map(|(a, b)| {
                let score = rng.gen_range(PLANTED_SCORE.0..=PLANTED_SCORE.1);
                LineSegment::from_coords(a.0, a.1, b.0, b.1, score)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            seed,
            image,
            wireframe: Wireframe::new(size, size, segs)?,
        })
    }
}
