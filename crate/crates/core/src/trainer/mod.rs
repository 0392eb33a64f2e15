//! Alternating GAN training of the encoder and decoder with gradient isolation, learning
//! rate and LSM schedules, loss logging and checkpoints.

mod adam;
mod checkpoint;
mod data;

use std::io::Write;

use candle_core::backprop::GradStore;
use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::CannyConfig;
use crate::losses::{
    decoder_generator_loss, discriminator_loss, encoder_generator_loss, FeatureExtractor,
    LossWeights, RandomConvExtractor, EXTRACTOR_SEED,
};
use crate::model::{pyramid_stack, EncoderInput, ModelConfig, MstModel};
use crate::nn::Mode;

pub use adam::Adam;
pub use checkpoint::{load_model, Checkpoint, CheckpointManifest, CHECKPOINT_VERSION};
pub use data::{
    image_tensor, make_batch, mask_tensor, plane_tensor, prepare_sample, Batch, PreparedSample,
    TrainingScene,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub lr_g: f64,
    pub lr_d: f64,
    pub lr_decay: f64,
    pub decay_every: u64,
    /// Whether discriminator rates follow the same decay as the generators.
    pub decay_discriminators: bool,
    pub total_steps: u64,
    /// Defaults to a third of `total_steps`.
    pub encoder_freeze_at: Option<u64>,
    pub batch_size: usize,
    pub seed: u64,
    pub weights: LossWeights,
    pub m_early: f64,
    pub m_late: f64,
    pub canny: CannyConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta1: 0.0,
            beta2: 0.9,
            adam_eps: 1e-8,
            lr_g: 2e-4,
            lr_d: 2e-5,
            lr_decay: 0.75,
            decay_every: 100_000,
            decay_discriminators: true,
            total_steps: 300_000,
            encoder_freeze_at: None,
            batch_size: 4,
            seed: 0,
            weights: LossWeights::default(),
            m_early: 0.5,
            m_late: 1.0,
            canny: CannyConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.lr_g, self.lr_d, self.lr_decay];
        if positive.iter().any(|&v| !(v > 0.0 && v.is_finite())) || self.decay_every == 0 {
            return Err(Error::InvalidInput("learning rates and decay must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch size must be positive".into()));
        }
        if self.freeze_at() > self.total_steps {
            return Err(Error::InvalidInput(format!(
                "encoder_freeze_at {} exceeds total_steps {}",
                self.freeze_at(),
                self.total_steps
            )));
        }
        for m in [self.m_early, self.m_late] {
            if !(0.0..=1.0).contains(&m) {
                return Err(Error::InvalidProbability(m));
            }
        }
        Ok(())
    }

    pub fn freeze_at(&self) -> u64 {
        self.encoder_freeze_at.unwrap_or(self.total_steps / 3)
    }

    /// Reads JSON, or TOML when the path ends in `.toml`.
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::InvalidInput(format!("config: {e}")))?
        } else {
            serde_json::from_str(&text)?
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `lr0 * decay^floor(step / decay_every)`.
pub fn learning_rate(lr0: f64, step: u64, cfg: &TrainConfig) -> f64 {
    lr0 * cfg.lr_decay.powi((step / cfg.decay_every) as i32)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Training { step: u64 },
    Inpaint,
    Removal,
}

/// Line masking probability: `m_early` for the first half of encoder training,
/// `m_late` afterwards; 1 for inpainting inference and 0 for object removal.
pub fn schedule_m(stage: Stage, cfg: &TrainConfig) -> f64 {
    match stage {
        Stage::Training { step } if step < cfg.freeze_at() / 2 => cfg.m_early,
        Stage::Training { .. } => cfg.m_late,
        Stage::Inpaint => 1.0,
        Stage::Removal => 0.0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: u64,
    pub loss_name: String,
    pub value: f64,
}

pub struct StepReport {
    pub step: u64,
    pub records: Vec<LossRecord>,
    /// Largest |gradient| the decoder loss left on any encoder parameter.
    pub encoder_grad_from_decoder: f64,
}

impl StepReport {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.records.iter().find(|r| r.loss_name == name).map(|r| r.value)
    }
}

pub struct Trainer {
    model: MstModel,
    config: TrainConfig,
    extractor: Box<dyn FeatureExtractor>,
    opt_encoder: Adam,
    opt_decoder: Adam,
    opt_d_structure: Adam,
    opt_d_image: Adam,
    step: u64,
    log: Option<Box<dyn Write + Send>>,
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

impl Trainer {
    pub fn new(model_cfg: ModelConfig, config: TrainConfig) -> Result<Self> {
        let model = MstModel::new(model_cfg, DType::F32, config.seed)?;
        let extractor = Box::new(RandomConvExtractor::new(DType::F32, EXTRACTOR_SEED)?);
        Self::with_parts(model, config, extractor)
    }

    pub fn with_parts(
        model: MstModel,
        config: TrainConfig,
        extractor: Box<dyn FeatureExtractor>,
    ) -> Result<Self> {
        config.validate()?;
        let adam = |names: &[&str]| {
            let vars = names.iter().flat_map(|n| model.network(n).vars()).collect();
            Adam::new(vars, config.beta1, config.beta2, config.adam_eps)
        };
        let opt_encoder = adam(&["encoder"])?;
        let opt_decoder = adam(&["decoder"])?;
        let opt_d_structure = adam(&["d_line", "d_edge"])?;
        let opt_d_image = adam(&["d_image"])?;
        Ok(Self {
            model,
            config,
            extractor,
            opt_encoder,
            opt_decoder,
            opt_d_structure,
            opt_d_image,
            step: 0,
            log: None,
        })
    }

    /// Streams every loss record as a JSON line.
    pub fn set_log(&mut self, sink: Box<dyn Write + Send>) {
        self.log = Some(sink);
    }

    pub fn model(&self) -> &MstModel {
        &self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn encoder_frozen(&self) -> bool {
        self.step >= self.config.freeze_at()
    }

    pub(crate) fn optimizers(&self) -> [(&'static str, &Adam); 4] {
        [
            ("encoder", &self.opt_encoder),
            ("decoder", &self.opt_decoder),
            ("d_structure", &self.opt_d_structure),
            ("d_image", &self.opt_d_image),
        ]
    }

    pub(crate) fn optimizers_mut(&mut self) -> [(&'static str, &mut Adam); 4] {
        [
            ("encoder", &mut self.opt_encoder),
            ("decoder", &mut self.opt_decoder),
            ("d_structure", &mut self.opt_d_structure),
            ("d_image", &mut self.opt_d_image),
        ]
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    /// Builds this step's batch from `scenes` and runs one update.
    pub fn train_step(&mut self, scenes: &[TrainingScene]) -> Result<StepReport> {
        let m = schedule_m(Stage::Training { step: self.step }, &self.config);
        let batch = make_batch(
            scenes,
            self.config.batch_size,
            self.config.seed,
            self.step,
            m,
            &self.config.canny,
        )?;
        self.step_on(&batch)
    }

    /// One round of updates: structure discriminators, encoder (both skipped once the
    /// encoder is frozen), image discriminator, decoder.
    pub fn step_on(&mut self, batch: &Batch) -> Result<StepReport> {
        let step = self.step;
        let cfg = self.config.clone();
        let lr_g = learning_rate(cfg.lr_g, step, &cfg);
        let lr_d = if cfg.decay_discriminators {
            learning_rate(cfg.lr_d, step, &cfg)
        } else {
            cfg.lr_d
        };
        let frozen = self.encoder_frozen();
        let model = &self.model;
        let mut values: Vec<(&'static str, f64)> = Vec::new();

        let enc_mode = if frozen { Mode::Eval } else { Mode::Train };
        let enc = model.encoder.forward(
            &EncoderInput {
                image: &batch.input,
                mask: &batch.mask,
                lines: &batch.lines,
                edges: &batch.edges,
            },
            enc_mode,
        )?;

        if !frozen {
            let [s0, s1, s2] = &enc.scales;
            let fake_l = pyramid_stack([&s0.o_l, &s1.o_l, &s2.o_l])?;
            let fake_e = pyramid_stack([&s0.o_e, &s1.o_e, &s2.o_e])?;
            let [l0, l1, l2] = &batch.line_targets;
            let [e0, e1, e2] = &batch.edge_targets;
            let real_l = pyramid_stack([l0, l1, l2])?;
            let real_e = pyramid_stack([e0, e1, e2])?;

            let d_loss = (discriminator_loss(
                &model.d_line.forward(&real_l, Mode::Train)?.logits,
                &model.d_line.forward(&fake_l.detach(), Mode::Train)?.logits,
            )? + discriminator_loss(
                &model.d_edge.forward(&real_e, Mode::Train)?.logits,
                &model.d_edge.forward(&fake_e.detach(), Mode::Train)?.logits,
            )?)?;
            values.push(("enc_d", scalar(&d_loss)?));
            check_finite(step, "enc_d", &values)?;
            self.opt_d_structure.step(&d_loss.backward()?, lr_d)?;

            let reconstruction: Vec<(Tensor, Tensor)> = enc
                .scales
                .iter()
                .zip(&batch.image_targets)
                .map(|(s, t)| (s.o_im.clone(), t.clone()))
                .collect();
            let g = encoder_generator_loss(
                &model.d_line.forward(&fake_l, Mode::Eval)?,
                &model.d_edge.forward(&fake_e, Mode::Eval)?,
                &model.d_line.forward(&real_l, Mode::Eval)?,
                &model.d_edge.forward(&real_e, Mode::Eval)?,
                &reconstruction,
                &cfg.weights,
            )?;
            values.extend(g.values()?);
            values.push(("enc_g", scalar(&g.total)?));
            check_finite(step, "enc_g", &values)?;
            self.opt_encoder.step(&g.total.backward()?, lr_g)?;
        }

        let sketch = enc.sketch.detach();
        let pred = model
            .decoder
            .forward(&batch.input, &batch.mask, &sketch, Mode::Train)?;

        let d_loss = discriminator_loss(
            &model.d_image.forward(&batch.target, Mode::Train)?.logits,
            &model.d_image.forward(&pred.detach(), Mode::Train)?.logits,
        )?;
        values.push(("dec_d", scalar(&d_loss)?));
        check_finite(step, "dec_d", &values)?;
        self.opt_d_image.step(&d_loss.backward()?, lr_d)?;

        let g = decoder_generator_loss(
            &pred,
            &batch.target,
            &batch.mask,
            &model.d_image.forward(&pred, Mode::Eval)?,
            self.extractor.as_ref(),
            &cfg.weights,
        )?;
        values.extend(g.values()?);
        values.push(("dec_g", scalar(&g.total)?));
        check_finite(step, "dec_g", &values)?;
        let grads = g.total.backward()?;
        let leak = encoder_gradient(&model.network("encoder"), &grads)?;
        if leak != 0.0 {
            return Err(Error::InvalidInput(format!(
                "decoder loss reached encoder parameters (|grad| {leak}) at step {step}"
            )));
        }
        self.opt_decoder.step(&grads, lr_g)?;

        let records: Vec<LossRecord> = values
            .into_iter()
            .map(|(name, value)| LossRecord {
                step,
                loss_name: name.to_string(),
                value,
            })
            .collect();
        if let Some(sink) = self.log.as_mut() {
            for r in &records {
                serde_json::to_writer(&mut *sink, r)?;
                sink.write_all(b"\n")?;
            }
        }
        self.step += 1;
        Ok(StepReport {
            step,
            records,
            encoder_grad_from_decoder: leak,
        })
    }
}

fn check_finite(step: u64, stage: &str, values: &[(&'static str, f64)]) -> Result<()> {
    match values.iter().find(|(_, v)| !v.is_finite()) {
        Some((name, v)) => Err(Error::NonFinite(format!(
            "loss {name} = {v} during {stage} at step {step}"
        ))),
        None => Ok(()),
    }
}

/// Max |gradient| over the variables in `store` (0 when none were reached).
pub fn encoder_gradient(store: &crate::nn::ParamStore, grads: &GradStore) -> Result<f64> {
    let mut worst = 0.0f64;
    for (_, var) in store.vars() {
        if let Some(g) = grads.get(var.as_tensor()) {
            worst = worst.max(scalar(&g.abs()?.max_all()?)?);
        }
    }
    Ok(worst)
}
