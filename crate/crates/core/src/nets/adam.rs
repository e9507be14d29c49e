use alloc::vec::Vec;

use crate::diffcore::{Gradients, ParamStore, Tensor};
use crate::error::{dim_err, Error, Result};
use crate::math::sqrt;

/// Adam hyperparameters with decoupled weight decay and global-norm clipping.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global L2 norm the gradient is clipped to; `None` disables clipping.
    pub clip: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.005,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-7,
            clip: Some(1.0),
        }
    }
}

/// Rescales `grads` so their global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// Moment estimates and step counter for one parameter store.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    config: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|(_, _, t)| Tensor::zeros(t.shape()))
                .collect::<Vec<_>>()
        };
        Self {
            config,
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update. Clips `grads` in place and returns the pre-clip norm.
    ///
    /// Non-finite gradients leave parameters and moments untouched and
    /// return a numeric error.
    pub fn step(&mut self, params: &mut ParamStore, grads: &mut Gradients) -> Result<f64> {
        if grads.len() != params.len() || grads.len() != self.m.len() {
            return Err(dim_err!(
                "optimizer tracks {} tensors, got {} gradients",
                self.m.len(),
                grads.len()
            ));
        }
        if !grads.is_finite() {
            return Err(Error::Numeric("parameter gradients".into()));
        }
        let norm = match self.config.clip {
            Some(c) => clip_global_norm(grads, c),
            None => grads.global_norm(),
        };
        self.step += 1;
        let c = &self.config;
        let bc1 = 1.0 - crate::math::powi(c.beta1, self.step.min(i32::MAX as u64) as i32);
        let bc2 = 1.0 - crate::math::powi(c.beta2, self.step.min(i32::MAX as u64) as i32);
        for (((id, g), m), v) in params
            .ids()
            .zip(grads.iter())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            let p = params.get_mut(id);
            if p.shape() != g.shape() {
                return Err(dim_err!(
                    "gradient shape {:?} vs parameter {:?}",
                    g.shape(),
                    p.shape()
                ));
            }
            let iter = p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut());
            for (((p, &g), m), v) in iter {
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                let update = (*m / bc1) / (sqrt(*v / bc2) + c.eps);
                *p -= c.lr * (update + c.weight_decay * *p);
            }
        }
        Ok(norm)
    }
}
