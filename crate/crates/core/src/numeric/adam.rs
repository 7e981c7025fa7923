use serde::{Deserialize, Serialize};

use super::{ParamStore, Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid Adam settings {self:?}")));
        }
        Ok(())
    }
}

/// First and second moment estimates for every parameter of one store.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    config: AdamConfig,
    step: u64,
    moments: Vec<(Tensor<T>, Tensor<T>)>,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig, store: &ParamStore<T>) -> Self {
        let moments = store
            .iter()
            .map(|p| {
                let (r, c) = p.shape();
                (Tensor::zeros(r, c), Tensor::zeros(r, c))
            })
            .collect();
        Self {
            config,
            step: 0,
            moments,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn first_moment(&self, index: usize) -> Option<&Tensor<T>> {
        self.moments.get(index).map(|m| &m.0)
    }

    /// One bias-corrected Adam update of every parameter, then zeroes the
    /// gradients.
    pub fn step(&mut self, store: &mut ParamStore<T>) -> Result<()> {
        if store.len() != self.moments.len() {
            return Err(Error::Internal(format!(
                "optimizer tracks {} parameters, store has {}",
                self.moments.len(),
                store.len()
            )));
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        let step_size = T::of(lr / bc1);
        let (b1, b2, eps) = (T::of(beta1), T::of(beta2), T::of(epsilon));
        let inv_bc2_sqrt = T::of(1.0 / bc2.sqrt());
        let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
        for (p, (m, v)) in store.iter_mut().zip(self.moments.iter_mut()) {
            if m.shape() != p.shape() {
                return Err(Error::Internal(format!(
                    "optimizer state for `{}` has shape {:?}, parameter has {:?}",
                    p.name(),
                    m.shape(),
                    p.shape()
                )));
            }
            let grad = p.grad().clone();
            for (((w, &g), mi), vi) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = b1 * *mi + one_b1 * g;
                *vi = b2 * *vi + one_b2 * g * g;
                *w -= step_size * *mi / (vi.sqrt() * inv_bc2_sqrt + eps);
            }
            p.zero_grad();
        }
        Ok(())
    }
}
