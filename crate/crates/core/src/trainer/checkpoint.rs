//! Checkpoints as safetensors archives: little-endian f32 tensors plus one JSON manifest
//! stored under the `manifest` metadata key.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use safetensors::tensor::{Dtype, SafeTensors, TensorView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{RandomConvExtractor, EXTRACTOR_SEED};
use crate::model::{ModelManifest, MstModel, MANIFEST_VERSION};

use super::{TrainConfig, Trainer};

pub const CHECKPOINT_VERSION: u32 = 1;
const MANIFEST_KEY: &str = "manifest";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub version: u32,
    pub model: ModelManifest,
    pub train: Option<TrainConfig>,
    pub step: u64,
    pub optimizer_steps: BTreeMap<String, u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    /// Key -> (shape, values).
    pub tensors: BTreeMap<String, (Vec<usize>, Vec<f32>)>,
}

fn host(t: &Tensor) -> Result<(Vec<usize>, Vec<f32>)> {
    Ok((t.dims().to_vec(), t.to_dtype(DType::F32)?.flatten_all()?.to_vec1()?))
}

fn ckpt_err(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    /// Parameters and spectral-norm vectors only.
    pub fn from_model(model: &MstModel) -> Result<Self> {
        let mut tensors = BTreeMap::new();
        for (k, v) in model.store().vars() {
            tensors.insert(format!("param/{k}"), host(v.as_tensor())?);
        }
        for (k, b) in model.store().buffers() {
            let t = b.lock().expect("buffer poisoned").clone();
            tensors.insert(format!("buffer/{k}"), host(&t)?);
        }
        Ok(Self {
            manifest: CheckpointManifest {
                version: CHECKPOINT_VERSION,
                model: model.manifest(),
                train: None,
                step: 0,
                optimizer_steps: BTreeMap::new(),
            },
            tensors,
        })
    }

    /// Full training state: model, optimizer moments and step counters.
    pub fn from_trainer(trainer: &Trainer) -> Result<Self> {
        let mut ckpt = Self::from_model(trainer.model())?;
        for (name, opt) in trainer.optimizers() {
            ckpt.manifest.optimizer_steps.insert(name.to_string(), opt.steps());
            for (key, m, v) in opt.moments() {
                ckpt.tensors.insert(format!("adam/{name}/m/{key}"), host(m)?);
                ckpt.tensors.insert(format!("adam/{name}/v/{key}"), host(v)?);
            }
        }
        ckpt.manifest.train = Some(trainer.config().clone());
        ckpt.manifest.step = trainer.step_count();
        Ok(ckpt)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let bytes: Vec<(&String, Vec<u8>, &Vec<usize>)> = self
            .tensors
            .iter()
            .map(|(k, (shape, data))| {
                (k, data.iter().flat_map(|x| x.to_le_bytes()).collect(), shape)
            })
            .collect();
        let views = bytes
            .iter()
            .map(|(k, b, shape)| {
                TensorView::new(Dtype::F32, shape.to_vec(), b)
                    .map(|v| (k.as_str(), v))
                    .map_err(|e| ckpt_err(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let meta = HashMap::from([(
            MANIFEST_KEY.to_string(),
            serde_json::to_string(&self.manifest)?,
        )]);
        safetensors::serialize(views, Some(meta)).map_err(|e| ckpt_err(e.to_string()))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (_, meta) = SafeTensors::read_metadata(bytes).map_err(|e| ckpt_err(e.to_string()))?;
        let text = meta
            .metadata()
            .as_ref()
            .and_then(|m| m.get(MANIFEST_KEY))
            .ok_or_else(|| ckpt_err("archive has no manifest"))?;
        let manifest: CheckpointManifest = serde_json::from_str(text)
            .map_err(|e| ckpt_err(format!("unreadable manifest: {e}")))?;
        if manifest.version != CHECKPOINT_VERSION {
            return Err(ckpt_err(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                manifest.version
            )));
        }
        if manifest.model.version != MANIFEST_VERSION {
            return Err(ckpt_err(format!(
                "model manifest version {} is not supported (expected {MANIFEST_VERSION})",
                manifest.model.version
            )));
        }
        let st = SafeTensors::deserialize(bytes).map_err(|e| ckpt_err(e.to_string()))?;
        let mut tensors = BTreeMap::new();
        for (name, view) in st.tensors() {
            if view.dtype() != Dtype::F32 {
                return Err(ckpt_err(format!("tensor {name} is not f32")));
            }
            let data = view
                .data()
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.insert(name, (view.shape().to_vec(), data));
        }
        Ok(Self { manifest, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)
            .map_err(|e| ckpt_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }

    fn tensor(&self, key: &str) -> Result<Tensor> {
        let (shape, data) = self
            .tensors
            .get(key)
            .ok_or_else(|| ckpt_err(format!("missing tensor {key}")))?;
        Ok(Tensor::from_vec(data.clone(), shape.as_slice(), &Device::Cpu)?)
    }

    /// Copies parameters and buffers into `model`; every model key must be present with
    /// a matching shape.
    pub fn apply_to_model(&self, model: &MstModel) -> Result<()> {
        if self.manifest.model.config != *model.config() {
            return Err(ckpt_err(format!(
                "architecture mismatch: checkpoint {:?} vs model {:?}",
                self.manifest.model.config,
                model.config()
            )));
        }
        let store = model.store();
        for (k, _) in store.vars() {
            store.assign(&k, &self.tensor(&format!("param/{k}"))?)?;
        }
        for (k, _) in store.buffers() {
            store.assign_buffer(&k, &self.tensor(&format!("buffer/{k}"))?)?;
        }
        Ok(())
    }

    pub fn into_model(&self) -> Result<MstModel> {
        let model = MstModel::new(self.manifest.model.config.clone(), DType::F32, 0)?;
        self.apply_to_model(&model)?;
        Ok(model)
    }

    /// Rebuilds a trainer that continues exactly where this checkpoint was taken.
    pub fn into_trainer(&self) -> Result<Trainer> {
        let train = self
            .manifest
            .train
            .clone()
            .ok_or_else(|| ckpt_err("checkpoint holds no training state"))?;
        let model = self.into_model()?;
        let extractor = Box::new(RandomConvExtractor::new(DType::F32, EXTRACTOR_SEED)?);
        let mut trainer = Trainer::with_parts(model, train, extractor)?;
        for (name, opt) in trainer.optimizers_mut() {
            let steps = *self
                .manifest
                .optimizer_steps
                .get(name)
                .ok_or_else(|| ckpt_err(format!("missing optimizer {name}")))?;
            opt.set_steps(steps);
            let keys: Vec<String> = opt.vars().map(|(k, _)| k.to_string()).collect();
            for key in keys {
                let m = self.tensor(&format!("adam/{name}/m/{key}"))?;
                let v = self.tensor(&format!("adam/{name}/v/{key}"))?;
                opt.set_moments(&key, m, v);
            }
        }
        trainer.set_step(self.manifest.step);
        Ok(trainer)
    }
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MstModel> {
    Checkpoint::load(path)?.into_model()
}
