use ndarray::{ArrayD, Zip};
use serde::{Deserialize, Serialize};

use crate::models::ParamStore;
use crate::tensor::Real;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| (0.0..1.0).contains(&b);
        if !(self.lr >= 0.0) || !unit(self.beta1) || !unit(self.beta2) || !(self.eps > 0.0) {
            return Err(Error::param(format!("invalid Adam settings {self:?}")));
        }
        Ok(())
    }
}

/// First and second moments per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<S: Real> {
    pub m: Vec<ArrayD<S>>,
    pub v: Vec<ArrayD<S>>,
    pub step: u64,
}

impl<S: Real> OptimizerState<S> {
    pub fn new(params: &ParamStore<S>) -> Self {
        let zeros = || -> Vec<ArrayD<S>> {
            params.tensors.iter().map(|t| ArrayD::zeros(t.value.raw_dim())).collect()
        };
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. Leaves everything untouched and errors
/// if any gradient entry is non-finite.
pub fn adam_step<S: Real>(
    params: &mut ParamStore<S>,
    grads: &[ArrayD<S>],
    state: &mut OptimizerState<S>,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.tensors.len() || state.m.len() != params.tensors.len() {
        return Err(Error::shape(format!(
            "{} parameters, {} gradients, {} moment slots",
            params.tensors.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, g) in grads.iter().enumerate() {
        if g.shape() != params.tensors[i].value.shape() {
            return Err(Error::shape(format!(
                "gradient for {} has shape {:?}, parameter {:?}",
                params.names[i],
                g.shape(),
                params.tensors[i].value.shape()
            )));
        }
        if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite gradient {bad} in {} at step {}",
                params.names[i],
                state.step + 1
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (S::of(cfg.beta1), S::of(cfg.beta2));
    let c1 = S::one() / (S::one() - b1.powi(t));
    let c2 = S::one() / (S::one() - b2.powi(t));
    let (lr, eps) = (S::of(cfg.lr), S::of(cfg.eps));
    for (i, g) in grads.iter().enumerate() {
        Zip::from(&mut params.tensors[i].value)
            .and(&mut state.m[i])
            .and(&mut state.v[i])
            .and(g)
            .for_each(|w, m, v, &g| {
                *m = b1 * *m + (S::one() - b1) * g;
                *v = b2 * *v + (S::one() - b2) * g * g;
                let m_hat = *m * c1;
                let v_hat = *v * c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            });
    }
    Ok(())
}
