//! Turning scenes into training batches: masks, LSM-filtered line maps, Canny edges and
//! multi-scale targets.

use candle_core::{Device, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imaging::{
    canny_with, masked_edges, normalize_input, pyramid_targets, sample_mask, CannyConfig, Image,
    LineMap, Plane, PyramidTargets,
};
use crate::mask::MaskBitmap;
use crate::wireframe::{lsm_filter, rasterize_lines, Wireframe};

/// A clean image with its (precomputed) wireframe and derived ground truth.
#[derive(Clone, Debug)]
pub struct TrainingScene {
    pub image: Image,
    pub wireframe: Wireframe,
    pub targets: PyramidTargets,
    /// Ground-truth images per pyramid scale in [-1, 1], coarsest first.
    pub image_pyramid: [Image; 3],
}

impl TrainingScene {
    pub fn new(image: Image, wireframe: Wireframe, canny: &CannyConfig) -> Result<Self> {
        let image = image.to_unit();
        let (h, w) = image.dims();
        if wireframe.image_size() != (h, w) {
            return Err(Error::InvalidInput(format!(
                "wireframe size {:?} differs from image {h}x{w}",
                wireframe.image_size()
            )));
        }
        let edges = canny_with(&image.to_gray(), canny)?;
        let lines = rasterize_lines(&wireframe, h, w)?;
        let targets = pyramid_targets(&edges, &lines)?;
        let signed = image.to_signed();
        let image_pyramid = [
            signed.downsample_mean(4)?,
            signed.downsample_mean(2)?,
            signed.clone(),
        ];
        Ok(Self {
            image,
            wireframe,
            targets,
            image_pyramid,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.image.dims()
    }
}

/// One sample's network inputs, before stacking.
pub struct PreparedSample {
    pub input: Image,
    pub mask: MaskBitmap,
    pub lines: LineMap,
    pub edges: Plane,
}

/// Builds encoder/decoder inputs for `scene` under `mask`, keeping each line with the
/// LSM rule at masking probability `m`.
pub fn prepare_sample(
    scene: &TrainingScene,
    mask: MaskBitmap,
    m: f64,
    lsm_seed: u64,
    canny: &CannyConfig,
) -> Result<PreparedSample> {
    let (h, w) = scene.dims();
    let kept = lsm_filter(&scene.wireframe, &mask, m, lsm_seed)?;
    let lines = rasterize_lines(&kept, h, w)?;
    let edges = masked_edges(&scene.image, &mask, canny)?.into_plane();
    let input = normalize_input(&scene.image, &mask)?;
    Ok(PreparedSample {
        input,
        mask,
        lines,
        edges,
    })
}

/// Stacked NCHW tensors for one training step.
pub struct Batch {
    pub input: Tensor,
    pub mask: Tensor,
    pub lines: Tensor,
    pub edges: Tensor,
    pub target: Tensor,
    /// Per scale, coarsest first.
    pub line_targets: [Tensor; 3],
    pub edge_targets: [Tensor; 3],
    pub image_targets: [Tensor; 3],
}

fn stack_planes(planes: &[&Plane]) -> Result<Tensor> {
    let (h, w) = planes[0].dims();
    let mut data = Vec::with_capacity(planes.len() * h * w);
    for p in planes {
        data.extend_from_slice(p.data());
    }
    Ok(Tensor::from_vec(data, (planes.len(), 1, h, w), &Device::Cpu)?)
}

fn stack_images(images: &[&Image]) -> Result<Tensor> {
    let (h, w) = images[0].dims();
    let mut data = Vec::with_capacity(images.len() * 3 * h * w);
    for img in images {
        data.extend(img.to_chw());
    }
    Ok(Tensor::from_vec(data, (images.len(), 3, h, w), &Device::Cpu)?)
}

pub fn image_tensor(images: &[&Image]) -> Result<Tensor> {
    stack_images(images)
}

pub fn plane_tensor(planes: &[&Plane]) -> Result<Tensor> {
    stack_planes(planes)
}

pub fn mask_tensor(masks: &[&MaskBitmap]) -> Result<Tensor> {
    let planes: Vec<Plane> = masks.iter().map(|m| m.to_plane()).collect();
    stack_planes(&planes.iter().collect::<Vec<_>>())
}

/// Samples scene indices, masks and LSM seeds for `step` from a stream derived from
/// `(seed, step)`, so any step can be rebuilt independently.
pub fn make_batch(
    scenes: &[TrainingScene],
    batch_size: usize,
    seed: u64,
    step: u64,
    m: f64,
    canny: &CannyConfig,
) -> Result<Batch> {
    if scenes.is_empty() || batch_size == 0 {
        return Err(Error::InvalidInput("empty training set or batch".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step);
    let mut picked = Vec::with_capacity(batch_size);
    let mut prepared = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let scene = &scenes[rng.gen_range(0..scenes.len())];
        let (h, w) = scene.dims();
        let (_, mask) = sample_mask(rng.gen(), h, w)?;
        prepared.push(prepare_sample(scene, mask, m, rng.gen(), canny)?);
        picked.push(scene);
    }
    let scale = |i: usize| -> Result<(Tensor, Tensor, Tensor)> {
        let lines: Vec<&Plane> = picked.iter().map(|s| s.targets.lines[i].plane()).collect();
        let edges: Vec<&Plane> = picked.iter().map(|s| s.targets.edges[i].plane()).collect();
        let imgs: Vec<&Image> = picked.iter().map(|s| &s.image_pyramid[i]).collect();
        Ok((stack_planes(&lines)?, stack_planes(&edges)?, stack_images(&imgs)?))
    };
    let (l0, e0, i0) = scale(0)?;
    let (l1, e1, i1) = scale(1)?;
    let (l2, e2, i2) = scale(2)?;
    Ok(Batch {
        input: stack_images(&prepared.iter().map(|p| &p.input).collect::<Vec<_>>())?,
        mask: mask_tensor(&prepared.iter().map(|p| &p.mask).collect::<Vec<_>>())?,
        lines: stack_planes(&prepared.iter().map(|p| p.lines.plane()).collect::<Vec<_>>())?,
        edges: stack_planes(&prepared.iter().map(|p| &p.edges).collect::<Vec<_>>())?,
        target: i2.clone(),
        line_targets: [l0, l1, l2],
        edge_targets: [e0, e1, e2],
        image_targets: [i0, i1, i2],
    })
}
