use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyperparameters shared by encoder, decoder and discriminators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Square training resolution; inference accepts any size divisible by 4.
    pub image_size: usize,
    /// Widths of the three gated input convs; the last is the bottleneck width `d`.
    pub widths: [usize; 3],
    pub stem_kernel: usize,
    pub n_res_blocks: usize,
    /// Attention is inserted after this many residual blocks.
    pub ea_after: usize,
    pub n_head: usize,
    /// Embedding widths of the three PDS blocks, coarsest first.
    pub pds_widths: [usize; 3],
    pub disc_width: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            image_size: 256,
            widths: [64, 128, 256],
            stem_kernel: 7,
            n_res_blocks: 8,
            ea_after: 4,
            n_head: 4,
            pds_widths: [256, 128, 64],
            disc_width: 64,
        }
    }
}

impl ModelConfig {
    /// A 64x64 model small enough to train on a single CPU core in minutes.
    pub fn smoke() -> Self {
        Self {
            image_size: 64,
            widths: [16, 32, 64],
            stem_kernel: 7,
            n_res_blocks: 8,
            ea_after: 4,
            n_head: 4,
            pds_widths: [32, 16, 16],
            disc_width: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.image_size == 0 || self.image_size % 4 != 0 {
            return bad(format!("image size {} is not a multiple of 4", self.image_size));
        }
        if self.widths.iter().chain(&self.pds_widths).any(|&c| c == 0) || self.disc_width == 0 {
            return bad("zero channel width".into());
        }
        if self.pds_widths.iter().any(|c| c % 2 != 0) {
            return bad(format!("PDS widths {:?} must be even", self.pds_widths));
        }
        if self.n_head == 0 || self.widths[2] % self.n_head != 0 {
            return bad(format!(
                "bottleneck width {} not divisible by {} heads",
                self.widths[2], self.n_head
            ));
        }
        if self.ea_after > self.n_res_blocks {
            return bad(format!(
                "attention index {} exceeds {} residual blocks",
                self.ea_after, self.n_res_blocks
            ));
        }
        if self.stem_kernel % 2 == 0 {
            return bad("stem kernel must be odd".into());
        }
        Ok(())
    }

    /// Side lengths of the three pyramid outputs, coarsest first.
    pub fn pyramid_sizes(&self) -> [usize; 3] {
        let s = self.image_size;
        [s / 4, s / 2, s]
    }
}
