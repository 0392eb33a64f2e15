//! Pyramid-structure sub-encoder: three gated input convs, dilated residual blocks with one
//! efficient-attention block, and three chained PDS blocks emitting lines, edges and
//! coarse images at 1/4, 1/2 and full resolution.

use candle_core::Tensor;

use crate::error::{shape_err, Result};
use crate::nn::{
    ConvSpec, DilatedResBlock, EAConfig, EfficientAttention, GatedConv, Mode, ParamStore,
    PdsBlock, PdsSpec,
};

use super::config::ModelConfig;
use super::sketch::compose_sketch_tensor;
use super::feature_mask;

/// Network-domain inputs, all NCHW at the same spatial size.
pub struct EncoderInput<'a> {
    /// Masked image in [-1, 1], holes painted +1.
    pub image: &'a Tensor,
    /// 1 marks holes.
    pub mask: &'a Tensor,
    pub lines: &'a Tensor,
    pub edges: &'a Tensor,
}

#[derive(Clone, Debug)]
pub struct PyramidScale {
    pub o_im: Tensor,
    pub o_l: Tensor,
    pub o_e: Tensor,
}

pub struct EncoderOutput {
    /// Coarsest first.
    pub scales: [PyramidScale; 3],
    pub sketch: Tensor,
}

pub struct Encoder {
    gated: [GatedConv; 3],
    res: Vec<DilatedResBlock>,
    attention: EfficientAttention,
    ea_after: usize,
    pds: [PdsBlock; 3],
}

pub(crate) fn gated_stack(store: &ParamStore, in_ch: usize, cfg: &ModelConfig) -> Result<[GatedConv; 3]> {
    let [w0, w1, w2] = cfg.widths;
    Ok([
        GatedConv::new(
            &store.pp("gc0"),
            ConvSpec::new(in_ch, w0, cfg.stem_kernel).spectral(true),
        )?,
        GatedConv::new(
            &store.pp("gc1"),
            ConvSpec::new(w0, w1, 4).stride(2).padding(1).spectral(true),
        )?,
        GatedConv::new(
            &store.pp("gc2"),
            ConvSpec::new(w1, w2, 4).stride(2).padding(1).spectral(true),
        )?,
    ])
}

impl Encoder {
    pub const IN_CHANNELS: usize = 6;

    pub fn new(store: &ParamStore, cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.widths[2];
        let res = (0..cfg.n_res_blocks)
            .map(|i| DilatedResBlock::new(&store.pp(format!("res{i}")), d))
            .collect::<Result<Vec<_>>>()?;
        let [p0, p1, p2] = cfg.pds_widths;
        let pds = [
            PdsBlock::new(&store.pp("pds0"), PdsSpec { in_ch: d, ch: p0, next_ch: Some(p1) })?,
            PdsBlock::new(&store.pp("pds1"), PdsSpec { in_ch: p1, ch: p1, next_ch: Some(p2) })?,
            PdsBlock::new(&store.pp("pds2"), PdsSpec { in_ch: p2, ch: p2, next_ch: None })?,
        ];
        Ok(Self {
            gated: gated_stack(store, Self::IN_CHANNELS, cfg)?,
            res,
            attention: EfficientAttention::new(&store.pp("ea"), EAConfig::new(d, cfg.n_head)?)?,
            ea_after: cfg.ea_after,
            pds,
        })
    }

    pub fn forward(&self, input: &EncoderInput, mode: Mode) -> Result<EncoderOutput> {
        let (n, c, h, w) = input.image.dims4()?;
        if c != 3 {
            return Err(shape_err("3 image channels", c));
        }
        for (name, t) in [("mask", input.mask), ("lines", input.lines), ("edges", input.edges)] {
            if t.dims() != [n, 1, h, w] {
                return Err(shape_err(
                    format!("{name} of shape [{n}, 1, {h}, {w}]"),
                    format!("{:?}", t.dims()),
                ));
            }
        }
        if h % 4 != 0 || w % 4 != 0 {
            return Err(shape_err("spatial size divisible by 4", format!("{h}x{w}")));
        }
        let x = Tensor::cat(&[input.lines, input.edges, input.image, input.mask], 1)?;
        let mut x = x;
        for g in &self.gated {
            x = g.forward(&x, mode)?;
        }
        let attn_mask = feature_mask(input.mask, 4)?;
        for (i, block) in self.res.iter().enumerate() {
            if i == self.ea_after {
                x = (&x + self.attention.forward(&x, &attn_mask)?)?;
            }
            x = block.forward(&x, mode)?;
        }
        if self.ea_after == self.res.len() {
            x = (&x + self.attention.forward(&x, &attn_mask)?)?;
        }

        let mut scales = Vec::with_capacity(3);
        for block in &self.pds {
            let out = block.forward(&x, mode)?;
            scales.push(PyramidScale {
                o_im: out.o_im,
                o_l: out.o_l,
                o_e: out.o_e,
            });
            if let Some(next) = out.x_next {
                x = next;
            }
        }
        let scales: [PyramidScale; 3] = scales.try_into().expect("three PDS blocks");
        let sketch = compose_sketch_tensor(&scales[2].o_l, &scales[2].o_e)?;
        Ok(EncoderOutput { scales, sketch })
    }
}
