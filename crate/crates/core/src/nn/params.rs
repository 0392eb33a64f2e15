//! Named, seeded parameter storage shared by every network in the model.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use candle_core::{DType, Device, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub enum Init {
    Zeros,
    Const(f64),
    /// Zero-mean normal with the given standard deviation.
    Normal(f64),
    /// He-style normal scaled by `gain / sqrt(fan_in)`.
    FanIn { fan_in: usize, gain: f64 },
}

/// A mutable non-trainable tensor (e.g. a power-iteration vector).
pub type Buffer = Arc<Mutex<Tensor>>;

#[derive(Default)]
struct Inner {
    vars: BTreeMap<String, Var>,
    buffers: BTreeMap<String, Buffer>,
}

/// Hierarchical parameter namespace. Clones share storage; [`ParamStore::pp`] pushes a
/// path segment so keys read like `encoder.res.3.conv1.weight`.
#[derive(Clone)]
pub struct ParamStore {
    prefix: String,
    inner: Arc<Mutex<Inner>>,
    rng: Arc<Mutex<ChaCha8Rng>>,
    dtype: DType,
    device: Device,
}

impl ParamStore {
    pub fn new(dtype: DType, seed: u64) -> Self {
        Self {
            prefix: String::new(),
            inner: Arc::new(Mutex::new(Inner::default())),
            rng: Arc::new(Mutex::new(ChaCha8Rng::seed_from_u64(seed))),
            dtype,
            device: Device::Cpu,
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn pp(&self, segment: impl std::fmt::Display) -> Self {
        let prefix = if self.prefix.is_empty() {
            segment.to_string()
        } else {
            format!("{}.{}", self.prefix, segment)
        };
        Self {
            prefix,
            inner: self.inner.clone(),
            rng: self.rng.clone(),
            dtype: self.dtype,
            device: self.device.clone(),
        }
    }

    fn key(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{}", self.prefix, name)
        }
    }

    fn sample(&self, n: usize, init: Init) -> Vec<f64> {
        match init {
            Init::Zeros => vec![0.0; n],
            Init::Const(v) => vec![v; n],
            Init::Normal(std) => self.normal(n, std),
            Init::FanIn { fan_in, gain } => self.normal(n, gain / (fan_in.max(1) as f64).sqrt()),
        }
    }

    fn normal(&self, n: usize, std: f64) -> Vec<f64> {
        let dist = Normal::new(0.0, std).expect("finite std");
        let mut rng = self.rng.lock().expect("param rng poisoned");
        (0..n).map(|_| dist.sample(&mut *rng)).collect()
    }

    pub fn var(&self, name: &str, shape: &[usize], init: Init) -> Result<Var> {
        let key = self.key(name);
        let n = shape.iter().product();
        let data = self.sample(n, init);
        let t = Tensor::from_vec(data, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let mut inner = self.inner.lock().expect("param store poisoned");
        if inner.vars.contains_key(&key) {
            return Err(Error::InvalidInput(format!("duplicate parameter {key}")));
        }
        inner.vars.insert(key, var.clone());
        Ok(var)
    }

    pub fn buffer(&self, name: &str, shape: &[usize], init: Init) -> Result<Buffer> {
        let key = self.key(name);
        let n = shape.iter().product();
        let data = self.sample(n, init);
        let t = Tensor::from_vec(data, shape, &self.device)?.to_dtype(self.dtype)?;
        let buf = Arc::new(Mutex::new(t));
        let mut inner = self.inner.lock().expect("param store poisoned");
        if inner.buffers.contains_key(&key) {
            return Err(Error::InvalidInput(format!("duplicate buffer {key}")));
        }
        inner.buffers.insert(key, buf.clone());
        Ok(buf)
    }

    /// Every trainable variable under this prefix, sorted by key.
    pub fn vars(&self) -> Vec<(String, Var)> {
        let inner = self.inner.lock().expect("param store poisoned");
        inner
            .vars
            .iter()
            .filter(|(k, _)| self.owns(k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    pub fn buffers(&self) -> Vec<(String, Buffer)> {
        let inner = self.inner.lock().expect("param store poisoned");
        inner
            .buffers
            .iter()
            .filter(|(k, _)| self.owns(k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    fn owns(&self, key: &str) -> bool {
        self.prefix.is_empty()
            || key
                .strip_prefix(&self.prefix)
                .is_some_and(|rest| rest.starts_with('.'))
    }

    pub fn num_params(&self) -> usize {
        self.vars().iter().map(|(_, v)| v.elem_count()).sum()
    }

    /// Overwrites a variable in place (checkpoint restore, tests).
    pub fn assign(&self, key: &str, value: &Tensor) -> Result<()> {
        let inner = self.inner.lock().expect("param store poisoned");
        let var = inner
            .vars
            .get(key)
            .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {key}")))?;
        if var.dims() != value.dims() {
            return Err(Error::Checkpoint(format!(
                "parameter {key}: shape {:?} != stored {:?}",
                var.dims(),
                value.dims()
            )));
        }
        var.set(&value.to_dtype(self.dtype)?)?;
        Ok(())
    }

    pub fn assign_buffer(&self, key: &str, value: &Tensor) -> Result<()> {
        let inner = self.inner.lock().expect("param store poisoned");
        let buf = inner
            .buffers
            .get(key)
            .ok_or_else(|| Error::Checkpoint(format!("unknown buffer {key}")))?;
        let mut slot = buf.lock().expect("buffer poisoned");
        if slot.dims() != value.dims() {
            return Err(Error::Checkpoint(format!(
                "buffer {key}: shape {:?} != stored {:?}",
                slot.dims(),
                value.dims()
            )));
        }
        *slot = value.to_dtype(self.dtype)?;
        Ok(())
    }
}
