//! Binary hole masks. A set bit marks a corrupted pixel.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::imaging::Plane;

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct MaskBitmap {
    h: usize,
    w: usize,
    bits: Vec<u8>,
}

impl MaskBitmap {
    pub fn empty(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            bits: vec![0; h * w],
        }
    }

    pub fn full(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            bits: vec![1; h * w],
        }
    }

    pub fn from_fn(h: usize, w: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(h * w);
        for r in 0..h {
            for c in 0..w {
                bits.push(f(r, c) as u8);
            }
        }
        Self { h, w, bits }
    }

    /// Builds a mask from raw 0/1 bytes in row-major order.
    pub fn from_bits(h: usize, w: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != h * w {
            return Err(crate::error::shape_err(h * w, bits.len()));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::InvalidInput("mask bits must be 0 or 1".into()));
        }
        Ok(Self { h, w, bits })
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.w + c] != 0
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, on: bool) {
        self.bits[r * self.w + c] = on as u8;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    /// Fraction of masked pixels; 0 for a zero-area mask.
    pub fn coverage(&self) -> f64 {
        if self.bits.is_empty() {
            return 0.0;
        }
        self.count() as f64 / self.bits.len() as f64
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&b| b == 0)
    }

    pub fn is_full(&self) -> bool {
        self.bits.iter().all(|&b| b == 1)
    }

    pub fn inverted(&self) -> Self {
        Self {
            h: self.h,
            w: self.w,
            bits: self.bits.iter().map(|&b| 1 - b).collect(),
        }
    }

    /// Membership of a sub-pixel point: the bit of its nearest pixel centre.
    ///
    /// Pixel centres sit at integer coordinates, `x` is the column and `y` the row.
    pub fn contains_point(&self, x: f64, y: f64) -> Result<bool> {
        let (r, c) = self.nearest_pixel(x, y)?;
        Ok(self.get(r, c))
    }

    pub fn nearest_pixel(&self, x: f64, y: f64) -> Result<(usize, usize)> {
        if !(x.is_finite() && y.is_finite())
            || x < 0.0
            || y < 0.0
            || x >= self.w as f64
            || y >= self.h as f64
        {
            return Err(Error::OutOfBounds {
                x,
                y,
                h: self.h,
                w: self.w,
            });
        }
        // x in [w - 0.5, w) rounds onto the last column.
        let c = (x.round() as usize).min(self.w - 1);
        let r = (y.round() as usize).min(self.h - 1);
        Ok((r, c))
    }

    /// Square dilation by `radius` pixels.
    pub fn dilated(&self, radius: usize) -> Self {
        if radius == 0 {
            return self.clone();
        }
        let r = radius as i64;
        Self::from_fn(self.h, self.w, |y, x| {
            let (y, x) = (y as i64, x as i64);
            for yy in (y - r).max(0)..=(y + r).min(self.h as i64 - 1) {
                for xx in (x - r).max(0)..=(x + r).min(self.w as i64 - 1) {
                    if self.get(yy as usize, xx as usize) {
                        return true;
                    }
                }
            }
            false
        })
    }

    pub fn to_plane(&self) -> Plane {
        Plane::from_vec(self.h, self.w, self.bits.iter().map(|&b| b as f32).collect())
            .expect("mask dims are consistent")
    }

    /// Writes a 1-bit grayscale PNG where white marks the hole.
    pub fn write_png<W: Write>(&self, out: W) -> Result<()> {
        let mut enc = png::Encoder::new(out, self.w as u32, self.h as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::One);
        let mut writer = enc.write_header()?;
        let stride = self.w.div_ceil(8);
        let mut packed = vec![0u8; stride * self.h];
        for r in 0..self.h {
            for c in 0..self.w {
                if self.get(r, c) {
                    packed[r * stride + c / 8] |= 0x80 >> (c % 8);
                }
            }
        }
        writer.write_image_data(&packed)?;
        Ok(())
    }

    /// Reads any grayscale or color PNG; a pixel is masked when its luminance exceeds half range.
    pub fn read_png<R: Read>(input: R) -> Result<Self> {
        let raw = crate::imaging::png_io::decode_rgb8(input)?;
        let bits = raw
            .pixels
            .chunks_exact(3)
            .map(|p| {
                let sum = p[0] as u32 + p[1] as u32 + p[2] as u32;
                (sum > 3 * 127) as u8
            })
            .collect();
        Ok(Self {
            h: raw.h,
            w: raw.w,
            bits,
        })
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_png(&mut buf)?;
        Ok(buf)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_png(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_png(std::io::BufReader::new(f))
    }

    /// Max-pools the mask by an integer factor: a cell is masked when any source pixel is.
    pub fn downsample_any(&self, factor: usize) -> Result<Self> {
        self.downsample_with(factor, |count, _| count > 0)
    }

    /// Downsamples by an integer factor, keeping cells that are at least half masked.
    pub fn downsample_majority(&self, factor: usize) -> Result<Self> {
        self.downsample_with(factor, |count, area| 2 * count >= area)
    }

    fn downsample_with(&self, factor: usize, keep: impl Fn(usize, usize) -> bool) -> Result<Self> {
        if factor == 0 || self.h % factor != 0 || self.w % factor != 0 {
            return Err(Error::InvalidInput(format!(
                "cannot downsample {}x{} by {factor}",
                self.h, self.w
            )));
        }
        let (h, w) = (self.h / factor, self.w / factor);
        Ok(Self::from_fn(h, w, |r, c| {
            let mut count = 0;
            for dr in 0..factor {
                for dc in 0..factor {
                    count += self.get(r * factor + dr, c * factor + dc) as usize;
                }
            }
            keep(count, factor * factor)
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_is_bit_exact() {
        let m = MaskBitmap::from_fn(13, 21, |r, c| (r * 7 + c * 3) % 5 == 0);
        let bytes = m.to_png_bytes().unwrap();
        let back = MaskBitmap::read_png(bytes.as_slice()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn nearest_pixel_rounds_and_clamps() {
        let m = MaskBitmap::empty(4, 4);
        assert_eq!(m.nearest_pixel(1.4, 2.6).unwrap(), (3, 1));
        assert_eq!(m.nearest_pixel(3.9, 0.0).unwrap(), (0, 3));
        assert!(m.nearest_pixel(4.0, 0.0).is_err());
        assert!(m.nearest_pixel(-0.1, 0.0).is_err());
    }

    #[test]
    fn downsampling_rules() {
        let mut m = MaskBitmap::empty(4, 4);
        m.set(0, 0, true);
        assert_eq!(m.downsample_any(2).unwrap().count(), 1);
        assert_eq!(m.downsample_majority(2).unwrap().count(), 0);
        m.set(0, 1, true);
        assert_eq!(m.downsample_majority(2).unwrap().count(), 1);
    }
}
