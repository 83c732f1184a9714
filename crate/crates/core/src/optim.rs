//! Adam with decoupled weight decay.

use alloc::vec::Vec;

use crate::error::{check_dim, Error, Result};
use crate::params::{Kind, ParamStore};
use crate::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Optimizer state for the trainable entries of one [`ParamStore`], in its
/// canonical order.
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub config: AdamWConfig,
    steps: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(config: AdamWConfig, store: &ParamStore<T>) -> Result<Self> {
        if !(config.lr > 0.0)
            || !(0.0..1.0).contains(&config.beta1)
            || !(0.0..1.0).contains(&config.beta2)
        {
            return Err(Error::invalid(
                "adamw",
                "learning rate must be positive and betas in [0, 1)",
            ));
        }
        let zeros: Vec<Vec<T>> = store
            .trainable()
            .map(|e| alloc::vec![T::zero(); e.value.numel()])
            .collect();
        Ok(AdamW {
            config,
            steps: 0,
            m: zeros.clone(),
            v: zeros,
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One update: `w ← w·(1 − lr·wd)`, then the bias-corrected Adam step.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[Tensor<T>]) -> Result<()> {
        check_dim("adamw", "gradient count", self.m.len(), grads.len())?;
        self.steps += 1;
        let c = self.config;
        let t = self.steps as i32;
        let bc1 = T::of(1.0 - num_traits::Float::powi(c.beta1, t));
        let bc2 = T::of(1.0 - num_traits::Float::powi(c.beta2, t));
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (lr, eps) = (T::of(c.lr), T::of(c.eps));
        let decay = T::one() - T::of(c.lr * c.weight_decay);
        let params = store
            .entries_mut()
            .iter_mut()
            .filter(|e| e.kind == Kind::Param);
        for (((entry, grad), m), v) in params.zip(grads).zip(&mut self.m).zip(&mut self.v) {
            check_dim("adamw", "gradient size", entry.value.numel(), grad.numel())?;
            for (((w, &g), m), v) in entry
                .value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let mh = *m / bc1;
                let vh = *v / bc2;
                *w = *w * decay - lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}
