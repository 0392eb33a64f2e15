use candle_core::backprop::GradStore;
use candle_core::{Tensor, Var};

use crate::error::Result;

/// Adam with bias correction. Moments live next to their variable, keyed by name, so
/// they can be checkpointed and restored.
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    steps: u64,
    slots: Vec<Slot>,
}

struct Slot {
    name: String,
    var: Var,
    m: Tensor,
    v: Tensor,
}

impl Adam {
    pub fn new(vars: Vec<(String, Var)>, beta1: f64, beta2: f64, eps: f64) -> Result<Self> {
        let slots = vars
            .into_iter()
            .map(|(name, var)| {
                let m = var.as_tensor().zeros_like()?;
                let v = var.as_tensor().zeros_like()?;
                Ok(Slot { name, var, m, v })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            beta1,
            beta2,
            eps,
            steps: 0,
            slots,
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn set_steps(&mut self, steps: u64) {
        self.steps = steps;
    }

    pub fn vars(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.slots.iter().map(|s| (s.name.as_str(), &s.var))
    }

    /// `(name, first moment, second moment)` for every slot.
    pub fn moments(&self) -> impl Iterator<Item = (&str, &Tensor, &Tensor)> {
        self.slots.iter().map(|s| (s.name.as_str(), &s.m, &s.v))
    }

    pub fn set_moments(&mut self, name: &str, m: Tensor, v: Tensor) -> bool {
        match self.slots.iter_mut().find(|s| s.name == name) {
            Some(slot) => {
                slot.m = m;
                slot.v = v;
                true
            }
            None => false,
        }
    }

    /// One update with learning rate `lr`. Variables without a gradient are untouched.
    pub fn step(&mut self, grads: &GradStore, lr: f64) -> Result<()> {
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for slot in &mut self.slots {
            let Some(g) = grads.get(slot.var.as_tensor()) else {
                continue;
            };
            // Gradients reference the forward graph; keep it out of the moments.
            let g = &g.detach();
            slot.m = ((&slot.m * self.beta1)? + (g * (1.0 - self.beta1))?)?;
            slot.v = ((&slot.v * self.beta2)? + (g.sqr()? * (1.0 - self.beta2))?)?;
            let m_hat = (&slot.m / c1)?;
            let v_hat = (&slot.v / c2)?;
            let update = (m_hat / (v_hat.sqrt()? + self.eps)?)?;
            slot.var.set(&(slot.var.as_tensor() - (update * lr)?)?)?;
        }
        Ok(())
    }
}
