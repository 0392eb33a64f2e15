use candle_core::Tensor;

use crate::error::{shape_err, Result};
use crate::nn::{Conv2d, ConvSpec, DilatedResBlock, GatedConv, Mode, ParamStore};

use super::config::ModelConfig;
use super::encoder::gated_stack;

/// Image decoder: gated convs in, residual blocks, gated transposed convs out, tanh head.
pub struct Decoder {
    gated_in: [GatedConv; 3],
    res: Vec<DilatedResBlock>,
    gated_out: [GatedConv; 2],
    head: Conv2d,
}

impl Decoder {
    pub const IN_CHANNELS: usize = 7;

    pub fn new(store: &ParamStore, cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let [w0, w1, w2] = cfg.widths;
        let res = (0..cfg.n_res_blocks)
            .map(|i| DilatedResBlock::new(&store.pp(format!("res{i}")), w2))
            .collect::<Result<Vec<_>>>()?;
        let up = |from, to| {
            ConvSpec::new(from, to, 4)
                .stride(2)
                .padding(1)
                .transposed()
                .spectral(true)
        };
        Ok(Self {
            gated_in: gated_stack(store, Self::IN_CHANNELS, cfg)?,
            res,
            gated_out: [
                GatedConv::new(&store.pp("up0"), up(w2, w1))?,
                GatedConv::new(&store.pp("up1"), up(w1, w0))?,
            ],
            head: Conv2d::new(&store.pp("head"), ConvSpec::new(w0, 3, cfg.stem_kernel))?,
        })
    }

    /// Raw full-frame prediction in (-1, 1) from `[image; mask; sketch]`.
    pub fn forward(&self, image: &Tensor, mask: &Tensor, sketch: &Tensor, mode: Mode) -> Result<Tensor> {
        let (n, _, h, w) = image.dims4()?;
        if image.dim(1)? != 3 || sketch.dims() != [n, 3, h, w] || mask.dims() != [n, 1, h, w] {
            return Err(shape_err(
                "image/sketch (n, 3, h, w) and mask (n, 1, h, w)",
                format!("{:?} {:?} {:?}", image.dims(), mask.dims(), sketch.dims()),
            ));
        }
        let mut x = Tensor::cat(&[image, mask, sketch], 1)?;
        for g in &self.gated_in {
            x = g.forward(&x, mode)?;
        }
        for block in &self.res {
            x = block.forward(&x, mode)?;
        }
        for g in &self.gated_out {
            x = g.forward(&x, mode)?;
        }
        Ok(self.head.forward(&x, mode)?.tanh()?)
    }
}

/// `image * (1 - mask) + pred * mask`, broadcasting the mask over channels.
pub fn composite(image: &Tensor, pred: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let keep = (1.0 - mask)?;
    Ok((image.broadcast_mul(&keep)? + pred.broadcast_mul(mask)?)?)
}
