//! Training objectives for the encoder and decoder stages.

mod balanced;
mod features;

use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::model::DiscOutput;
use crate::nn::ops::{mean_abs_diff, neg_log_one_minus_sigmoid, neg_log_sigmoid};

pub use balanced::balanced_l1;
pub use features::{FeatureExtractor, RandomConvExtractor, UnavailableExtractor, EXTRACTOR_SEED};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub adversarial: f64,
    pub feature_matching: f64,
    pub perceptual: f64,
    pub style: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            adversarial: 0.1,
            feature_matching: 10.0,
            perceptual: 0.1,
            style: 250.0,
        }
    }
}

impl LossWeights {
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            adversarial: self.adversarial * k,
            feature_matching: self.feature_matching * k,
            perceptual: self.perceptual * k,
            style: self.style * k,
        }
    }
}

/// Generator side of the non-saturating GAN loss: `mean(-log sigmoid(logits))`.
pub fn generator_adversarial(logits: &Tensor) -> Result<Tensor> {
    Ok(neg_log_sigmoid(logits)?.mean_all()?)
}

/// `mean(-log sigmoid(real)) + mean(-log(1 - sigmoid(fake)))`.
pub fn discriminator_loss(real_logits: &Tensor, fake_logits: &Tensor) -> Result<Tensor> {
    let real = neg_log_sigmoid(real_logits)?.mean_all()?;
    let fake = neg_log_one_minus_sigmoid(fake_logits)?.mean_all()?;
    Ok((real + fake)?)
}

/// Sum over layers of the mean L1 between fake features and (detached) real features.
pub fn feature_matching(fake: &DiscOutput, real: &DiscOutput) -> Result<Tensor> {
    if fake.features.len() != real.features.len() {
        return Err(shape_err(real.features.len(), fake.features.len()));
    }
    let mut total: Option<Tensor> = None;
    for (f, r) in fake.features.iter().zip(&real.features) {
        let term = mean_abs_diff(f, &r.detach())?;
        total = Some(match total {
            Some(t) => (t + term)?,
            None => term,
        });
    }
    total.ok_or_else(|| Error::InvalidInput("discriminator returned no features".into()))
}

/// `F F^T / (c h w)` per sample, `(n, c, c)`.
pub fn gram(features: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = features.dims4()?;
    let f = features.reshape((n, c, h * w))?;
    let g = f.matmul(&f.transpose(1, 2)?.contiguous()?)?;
    Ok((g / (c * h * w) as f64)?)
}

/// Per-layer balanced L1 in feature space, averaged over layers. The mask is max-pooled
/// to each layer's resolution.
pub fn perceptual_loss(
    pred_feats: &[Tensor],
    target_feats: &[Tensor],
    mask: &Tensor,
) -> Result<Tensor> {
    if pred_feats.len() != target_feats.len() || pred_feats.is_empty() {
        return Err(shape_err(target_feats.len(), pred_feats.len()));
    }
    let (_, _, h, _) = mask.dims4()?;
    let mut total: Option<Tensor> = None;
    for (p, t) in pred_feats.iter().zip(target_feats) {
        let fh = p.dim(2)?;
        let m = if fh == h { mask.clone() } else { mask.max_pool2d(h / fh)? };
        let term = balanced_l1(p, &t.detach(), &m)?;
        total = Some(match total {
            Some(acc) => (acc + term)?,
            None => term,
        });
    }
    Ok((total.expect("non-empty") / pred_feats.len() as f64)?)
}

/// Sum over layers of the mean L1 between Gram matrices.
pub fn style_loss(pred_feats: &[Tensor], target_feats: &[Tensor]) -> Result<Tensor> {
    if pred_feats.len() != target_feats.len() || pred_feats.is_empty() {
        return Err(shape_err(target_feats.len(), pred_feats.len()));
    }
    let mut total: Option<Tensor> = None;
    for (p, t) in pred_feats.iter().zip(target_feats) {
        let term = mean_abs_diff(&gram(p)?, &gram(&t.detach())?)?;
        total = Some(match total {
            Some(acc) => (acc + term)?,
            None => term,
        });
    }
    Ok(total.expect("non-empty"))
}

/// Per-term breakdown of a generator loss; `total` carries the graph.
pub struct GeneratorLoss {
    pub total: Tensor,
    pub terms: Vec<(&'static str, Tensor)>,
}

impl GeneratorLoss {
    pub fn values(&self) -> Result<Vec<(&'static str, f64)>> {
        self.terms
            .iter()
            .map(|(k, t)| Ok((*k, t.to_dtype(DType::F64)?.to_scalar::<f64>()?)))
            .collect()
    }
}

/// Encoder generator objective from discriminator outputs on fake stacks and real stacks.
/// `reconstruction` holds `(O_im, I)` pairs, one per scale.
pub fn encoder_generator_loss(
    fake_line: &DiscOutput,
    fake_edge: &DiscOutput,
    real_line: &DiscOutput,
    real_edge: &DiscOutput,
    reconstruction: &[(Tensor, Tensor)],
    weights: &LossWeights,
) -> Result<GeneratorLoss> {
    if reconstruction.len() != 3 {
        return Err(shape_err("3 scales", reconstruction.len()));
    }
    let adv = (generator_adversarial(&fake_line.logits)?
        + generator_adversarial(&fake_edge.logits)?)?;
    let fm = (feature_matching(fake_line, real_line)? + feature_matching(fake_edge, real_edge)?)?;
    let mut rec: Option<Tensor> = None;
    for (pred, target) in reconstruction {
        let term = mean_abs_diff(pred, target)?;
        rec = Some(match rec {
            Some(acc) => (acc + term)?,
            None => term,
        });
    }
    let rec = rec.expect("three scales");
    let total = ((&adv * weights.adversarial)? + (&fm * weights.feature_matching)? + &rec)?;
    Ok(GeneratorLoss {
        total,
        terms: vec![("enc_adv", adv), ("enc_fm", fm), ("enc_rec", rec)],
    })
}

/// Decoder generator objective for raw prediction `pred` against target `target`.
pub fn decoder_generator_loss(
    pred: &Tensor,
    target: &Tensor,
    mask: &Tensor,
    fake_image: &DiscOutput,
    extractor: &dyn FeatureExtractor,
    weights: &LossWeights,
) -> Result<GeneratorLoss> {
    let l1 = balanced_l1(pred, target, mask)?;
    let adv = generator_adversarial(&fake_image.logits)?;
    let pf = extractor.features(pred)?;
    let tf = extractor.features(target)?;
    let per = perceptual_loss(&pf, &tf, mask)?;
    let sty = style_loss(&pf, &tf)?;
    let total = (&l1
        + (&adv * weights.adversarial)?
        + (&per * weights.perceptual)?
        + (&sty * weights.style)?)?;
    Ok(GeneratorLoss {
        total,
        terms: vec![
            ("dec_l1", l1),
            ("dec_adv", adv),
            ("dec_per", per),
            ("dec_style", sty),
        ],
    })
}
