use std::io::{Read, Write};

use crate::error::{Error, Result};

pub(crate) struct RawRgb8 {
    pub h: usize,
    pub w: usize,
    pub pixels: Vec<u8>,
}

/// Decodes any PNG into interleaved 8-bit RGB, dropping alpha.
pub(crate) fn decode_rgb8<R: Read>(input: R) -> Result<RawRgb8> {
    let mut decoder = png::Decoder::new(input);
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info()?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let data = &buf[..info.buffer_size()];
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        other => {
            return Err(Error::InvalidInput(format!(
                "unsupported png color type {other:?}"
            )))
        }
    };
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::InvalidInput(format!(
            "unsupported png bit depth {:?}",
            info.bit_depth
        )));
    }
    let mut pixels = Vec::with_capacity(w * h * 3);
    for r in 0..h {
        let row = &data[r * info.line_size..][..w * channels];
        for px in row.chunks_exact(channels) {
            match channels {
                1 | 2 => pixels.extend_from_slice(&[px[0], px[0], px[0]]),
                _ => pixels.extend_from_slice(&px[..3]),
            }
        }
    }
    Ok(RawRgb8 { h, w, pixels })
}

pub(crate) fn encode_rgb8<W: Write>(out: W, h: usize, w: usize, pixels: &[u8]) -> Result<()> {
    let mut enc = png::Encoder::new(out, w as u32, h as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header()?;
    writer.write_image_data(pixels)?;
    Ok(())
}

pub(crate) fn encode_gray8<W: Write>(out: W, h: usize, w: usize, pixels: &[u8]) -> Result<()> {
    let mut enc = png::Encoder::new(out, w as u32, h as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header()?;
    writer.write_image_data(pixels)?;
    Ok(())
}
