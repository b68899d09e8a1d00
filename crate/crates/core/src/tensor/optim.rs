//! Adam with bias correction.

use std::collections::BTreeMap;

use super::{Float, Params, Tensor};
use crate::error::{config_err, shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(config_err!("learning rate must be > 0, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return Err(config_err!("invalid Adam betas/eps: {:?}", self));
        }
        Ok(())
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Params<T>,
    pub v: Params<T>,
}

#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub state: AdamState<T>,
}

impl<T: Float> Adam<T> {
    pub fn new(config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Adam {
            config,
            state: AdamState {
                step: 0,
                m: Params::new(),
                v: Params::new(),
            },
        })
    }

    pub fn with_state(config: AdamConfig, state: AdamState<T>) -> Result<Self> {
        config.validate()?;
        Ok(Adam { config, state })
    }

    /// Applies one update to every parameter named in `grads`.
    pub fn step(&mut self, params: &mut Params<T>, grads: &BTreeMap<String, Tensor<T>>) -> Result<()> {
        self.state.step += 1;
        let t = self.state.step as f64;
        let c = self.config;
        let bc1 = T::from_f64(1.0 - c.beta1.powf(t));
        let bc2 = T::from_f64(1.0 - c.beta2.powf(t));
        let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
        let (lr, eps) = (T::from_f64(c.lr), T::from_f64(c.eps));
        for (name, g) in grads {
            let p = params
                .get_mut(name)
                .ok_or_else(|| shape_err!("gradient for unknown parameter `{name}`"))?;
            if p.shape() != g.shape() {
                return Err(shape_err!("`{name}`: param {:?} vs grad {:?}", p.shape(), g.shape()));
            }
            if !self.state.m.contains(name) {
                self.state.m.insert(name.clone(), Tensor::zeros(g.shape()));
                self.state.v.insert(name.clone(), Tensor::zeros(g.shape()));
            }
            let m = self.state.m.get_mut(name).expect("inserted").data_mut();
            let v = self.state.v.get_mut(name).expect("inserted").data_mut();
            if m.len() != g.len() || v.len() != g.len() {
                return Err(shape_err!("`{name}`: optimizer state does not match gradient"));
            }
            for (((pi, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (T::one() - b1) * gi;
                *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *pi -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
