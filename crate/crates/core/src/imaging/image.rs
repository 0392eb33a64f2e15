use std::io::{Read, Write};

use crate::error::{shape_err, Error, Result};
use crate::mask::MaskBitmap;

use super::png_io;
use super::Plane;

/// Value range an [`Image`] is declared to live in.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ValueDomain {
    /// Storage range `[0, 1]`.
    Unit,
    /// Network range `[-1, 1]`.
    Signed,
}

impl ValueDomain {
    pub fn bounds(self) -> (f32, f32) {
        match self {
            ValueDomain::Unit => (0.0, 1.0),
            ValueDomain::Signed => (-1.0, 1.0),
        }
    }
}

/// Three-channel image stored as interleaved HWC floats.
#[derive(Clone, PartialEq, Debug)]
pub struct Image {
    h: usize,
    w: usize,
    domain: ValueDomain,
    data: Vec<f32>,
}

/// Luma weights used for every grayscale conversion.
pub const LUMA: [f32; 3] = [0.299, 0.587, 0.114];

impl Image {
    pub fn new(h: usize, w: usize, domain: ValueDomain, data: Vec<f32>) -> Result<Self> {
        if data.len() != h * w * 3 {
            return Err(shape_err(h * w * 3, data.len()));
        }
        let img = Self { h, w, domain, data };
        img.check_domain()?;
        Ok(img)
    }

    pub fn filled(h: usize, w: usize, rgb: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(h * w * 3);
        for _ in 0..h * w {
            data.extend_from_slice(&rgb);
        }
        Self {
            h,
            w,
            domain: ValueDomain::Unit,
            data,
        }
    }

    pub fn from_fn(h: usize, w: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(h * w * 3);
        for r in 0..h {
            for c in 0..w {
                data.extend_from_slice(&f(r, c));
            }
        }
        Self {
            h,
            w,
            domain: ValueDomain::Unit,
            data,
        }
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

    pub fn domain(&self) -> ValueDomain {
        self.domain
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn pixel(&self, r: usize, c: usize) -> [f32; 3] {
        let i = (r * self.w + c) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, r: usize, c: usize, rgb: [f32; 3]) {
        let i = (r * self.w + c) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Fails if any value is non-finite or leaves the declared domain.
    pub fn check_domain(&self) -> Result<()> {
        let (lo, hi) = self.domain.bounds();
        for &v in &self.data {
            if !v.is_finite() {
                return Err(Error::NonFinite("image".into()));
            }
            if v < lo - 1e-6 || v > hi + 1e-6 {
                return Err(Error::InvalidInput(format!(
                    "image value {v} outside {:?} domain",
                    self.domain
                )));
            }
        }
        Ok(())
    }

    pub fn expect_domain(&self, domain: ValueDomain) -> Result<()> {
        if self.domain != domain {
            return Err(Error::InvalidInput(format!(
                "expected {domain:?} image, got {:?}",
                self.domain
            )));
        }
        Ok(())
    }

    pub fn to_gray(&self) -> Plane {
        Plane::from_fn(self.h, self.w, |r, c| {
            let p = self.pixel(r, c);
            LUMA[0] * p[0] + LUMA[1] * p[1] + LUMA[2] * p[2]
        })
    }

    /// Maps `[-1, 1]` back to `[0, 1]`.
    pub fn to_unit(&self) -> Image {
        match self.domain {
            ValueDomain::Unit => self.clone(),
            ValueDomain::Signed => Image {
                h: self.h,
                w: self.w,
                domain: ValueDomain::Unit,
                data: self.data.iter().map(|&v| (v + 1.0) * 0.5).collect(),
            },
        }
    }

    /// Plain `[0,1] -> [-1,1]` rescale without mask handling.
    pub fn to_signed(&self) -> Image {
        match self.domain {
            ValueDomain::Signed => self.clone(),
            ValueDomain::Unit => Image {
                h: self.h,
                w: self.w,
                domain: ValueDomain::Signed,
                data: self.data.iter().map(|&v| v * 2.0 - 1.0).collect(),
            },
        }
    }

    /// Keeps unmasked pixels of `self` and takes hole pixels from `fill`.
    pub fn composite(&self, fill: &Image, mask: &MaskBitmap) -> Result<Image> {
        if self.dims() != fill.dims() || self.dims() != mask.dims() {
            return Err(shape_err(
                format!("{:?}", self.dims()),
                format!("{:?} / {:?}", fill.dims(), mask.dims()),
            ));
        }
        if self.domain != fill.domain {
            return Err(Error::InvalidInput("composite across value domains".into()));
        }
        let mut out = self.clone();
        for r in 0..self.h {
            for c in 0..self.w {
                if mask.get(r, c) {
                    out.set_pixel(r, c, fill.pixel(r, c));
                }
            }
        }
        Ok(out)
    }

    /// Unit-domain image with hole pixels painted white, i.e. what a user hands in.
    pub fn masked_white(&self, mask: &MaskBitmap) -> Result<Image> {
        self.expect_domain(ValueDomain::Unit)?;
        self.composite(&Image::filled(self.h, self.w, [1.0; 3]), mask)
    }

    /// Area-averages by an integer factor.
    pub fn downsample_mean(&self, factor: usize) -> Result<Image> {
        if factor == 0 || self.h % factor != 0 || self.w % factor != 0 {
            return Err(Error::InvalidInput(format!(
                "cannot downsample {}x{} by {factor}",
                self.h, self.w
            )));
        }
        let (h, w) = (self.h / factor, self.w / factor);
        let norm = 1.0 / (factor * factor) as f32;
        let mut data = Vec::with_capacity(h * w * 3);
        for r in 0..h {
            for c in 0..w {
                let mut acc = [0f32; 3];
                for dr in 0..factor {
                    for dc in 0..factor {
                        let p = self.pixel(r * factor + dr, c * factor + dc);
                        for k in 0..3 {
                            acc[k] += p[k];
                        }
                    }
                }
                data.extend(acc.iter().map(|v| v * norm));
            }
        }
        Ok(Image {
            h,
            w,
            domain: self.domain,
            data,
        })
    }

    /// Channel-planar copy (`3 x h x w`), the layout tensors use.
    pub fn to_chw(&self) -> Vec<f32> {
        let n = self.h * self.w;
        let mut out = vec![0.0; 3 * n];
        for i in 0..n {
            for k in 0..3 {
                out[k * n + i] = self.data[i * 3 + k];
            }
        }
        out
    }

    pub fn from_chw(h: usize, w: usize, domain: ValueDomain, chw: &[f32]) -> Result<Image> {
        let n = h * w;
        if chw.len() != 3 * n {
            return Err(shape_err(3 * n, chw.len()));
        }
        let mut data = vec![0.0; 3 * n];
        for i in 0..n {
            for k in 0..3 {
                data[i * 3 + k] = chw[k * n + i];
            }
        }
        Ok(Image { h, w, domain, data })
    }

    /// 8-bit quantization of a unit-domain image.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.to_unit()
            .data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn from_rgb8(h: usize, w: usize, pixels: &[u8]) -> Result<Image> {
        if pixels.len() != h * w * 3 {
            return Err(shape_err(h * w * 3, pixels.len()));
        }
        Ok(Image {
            h,
            w,
            domain: ValueDomain::Unit,
            data: pixels.iter().map(|&p| p as f32 / 255.0).collect(),
        })
    }

    pub fn write_png<W: Write>(&self, out: W) -> Result<()> {
        png_io::encode_rgb8(out, self.h, self.w, &self.to_rgb8())
    }

    pub fn read_png<R: Read>(input: R) -> Result<Image> {
        let raw = png_io::decode_rgb8(input)?;
        Image::from_rgb8(raw.h, raw.w, &raw.pixels)
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

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Image> {
        let f = std::fs::File::open(path)?;
        Image::read_png(std::io::BufReader::new(f))
    }
}

/// Maps a unit image into the network domain and paints holes with `+1`.
pub fn normalize_input(img: &Image, mask: &MaskBitmap) -> Result<Image> {
    img.expect_domain(ValueDomain::Unit)?;
    if img.dims() != mask.dims() {
        return Err(shape_err(
            format!("{:?}", img.dims()),
            format!("{:?}", mask.dims()),
        ));
    }
    let mut out = img.to_signed();
    for r in 0..img.h {
        for c in 0..img.w {
            if mask.get(r, c) {
                out.set_pixel(r, c, [1.0; 3]);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_closed_forms() {
        let black = Image::filled(4, 5, [0.0; 3]);
        let out = normalize_input(&black, &MaskBitmap::empty(4, 5)).unwrap();
        assert!(out.data().iter().all(|&v| v == -1.0));

        let out = normalize_input(&black, &MaskBitmap::full(4, 5)).unwrap();
        assert!(out.data().iter().all(|&v| v == 1.0));

        let gray = Image::filled(4, 5, [0.5; 3]);
        let out = normalize_input(&gray, &MaskBitmap::empty(4, 5)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalize_rejects_shape_mismatch() {
        let img = Image::filled(4, 5, [0.2; 3]);
        assert!(normalize_input(&img, &MaskBitmap::empty(5, 4)).is_err());
    }

    #[test]
    fn unmasked_pixels_restore_exactly() {
        let img = Image::from_fn(6, 6, |r, c| [r as f32 / 8.0, c as f32 / 8.0, 0.25]);
        let mask = MaskBitmap::from_fn(6, 6, |r, c| r == c);
        let back = normalize_input(&img, &mask).unwrap().to_unit();
        for r in 0..6 {
            for c in 0..6 {
                if !mask.get(r, c) {
                    assert_eq!(back.pixel(r, c), img.pixel(r, c));
                }
            }
        }
    }

    #[test]
    fn png_round_trip_at_8_bit() {
        let img = Image::from_fn(7, 9, |r, c| {
            [((r * 31 + c) % 256) as f32 / 255.0, (c * 17 % 256) as f32 / 255.0, 1.0]
        });
        let back = Image::read_png(img.to_png_bytes().unwrap().as_slice()).unwrap();
        assert_eq!(img, back);
    }
}
