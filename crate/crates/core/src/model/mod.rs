//! The full inpainting model: encoder, sketch tensor, decoder and three discriminators.

mod config;
mod decoder;
mod discriminator;
mod encoder;
mod sketch;

use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::ops::upsample_nearest;
use crate::nn::ParamStore;

pub use config::ModelConfig;
pub use decoder::{composite, Decoder};
pub use discriminator::{patch_size, DiscOutput, Discriminator, LEAKY_SLOPE};
pub use encoder::{Encoder, EncoderInput, EncoderOutput, PyramidScale};
pub use sketch::{compose_sketch_tensor, SketchTensor};

pub const MANIFEST_VERSION: u32 = 1;

/// Architecture record stored alongside checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub version: u32,
    pub config: ModelConfig,
    pub choices: Vec<String>,
}

impl ModelManifest {
    pub fn new(config: &ModelConfig) -> Self {
        let choices = [
            format!("attention after residual block {} as x + EA(x)", config.ea_after),
            "attention mask: majority vote over 4x4 cells; ignored when every cell is masked".into(),
            "decoder output ends: 3 gated convs in, 2 gated transposed convs out".into(),
            "PDS up-path: stride-2 transposed conv, instance norm, relu".into(),
            "discriminator: 5 SN convs, k4, strides 2,2,2,1,1".into(),
            "spectral norm on gated and discriminator convs, one power step per training forward".into(),
            "final output composited into the hole".into(),
        ];
        Self {
            version: MANIFEST_VERSION,
            config: config.clone(),
            choices: choices.into_iter().collect(),
        }
    }
}

/// Downsamples a `(n, 1, h, w)` hole mask by `factor` with a majority vote. A sample whose
/// cells are all masked gets an all-clear mask so attention stays defined.
pub fn feature_mask(mask: &Tensor, factor: usize) -> Result<Tensor> {
    let pooled = mask.avg_pool2d(factor)?;
    let bin = pooled.ge(0.5)?.to_dtype(mask.dtype())?;
    let (n, _, h, w) = bin.dims4()?;
    let per_sample: Vec<f64> = bin.flatten_from(1)?.sum(1)?.to_dtype(DType::F64)?.to_vec1()?;
    if per_sample.iter().all(|&s| (s as usize) < h * w) {
        return Ok(bin);
    }
    let rows = (0..n)
        .map(|i| {
            let row = bin.get(i)?;
            if per_sample[i] as usize >= h * w {
                row.zeros_like()
            } else {
                Ok(row)
            }
        })
        .collect::<candle_core::Result<Vec<_>>>()?;
    Ok(Tensor::stack(&rows, 0)?)
}

/// `[up4(coarse); up2(mid); fine]` along channels, the discriminator input for one map kind.
pub fn pyramid_stack(maps: [&Tensor; 3]) -> Result<Tensor> {
    let a = upsample_nearest(maps[0], 4)?;
    let b = upsample_nearest(maps[1], 2)?;
    Ok(Tensor::cat(&[&a, &b, maps[2]], 1)?)
}

/// All networks, each in its own parameter namespace.
pub struct MstModel {
    config: ModelConfig,
    store: ParamStore,
    pub encoder: Encoder,
    pub decoder: Decoder,
    pub d_line: Discriminator,
    pub d_edge: Discriminator,
    pub d_image: Discriminator,
}

pub const NETWORKS: [&str; 5] = ["encoder", "decoder", "d_line", "d_edge", "d_image"];

impl MstModel {
    pub fn new(config: ModelConfig, dtype: DType, seed: u64) -> Result<Self> {
        config.validate()?;
        let store = ParamStore::new(dtype, seed);
        let encoder = Encoder::new(&store.pp("encoder"), &config)?;
        let decoder = Decoder::new(&store.pp("decoder"), &config)?;
        let d_line = Discriminator::new(&store.pp("d_line"), 3, config.disc_width)?;
        let d_edge = Discriminator::new(&store.pp("d_edge"), 3, config.disc_width)?;
        let d_image = Discriminator::new(&store.pp("d_image"), 3, config.disc_width)?;
        Ok(Self {
            config,
            store,
            encoder,
            decoder,
            d_line,
            d_edge,
            d_image,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn manifest(&self) -> ModelManifest {
        ModelManifest::new(&self.config)
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    /// Parameter namespace of one network (see [`NETWORKS`]).
    pub fn network(&self, name: &str) -> ParamStore {
        self.store.pp(name)
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }
}
