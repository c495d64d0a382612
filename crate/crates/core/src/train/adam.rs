//! ADAM with a step learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ppdn::PpdnWeights;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// `lr(t) = lr0 * factor^floor(t / every)` with a 0-based step counter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub lr0: f64,
    pub decay_every: u64,
    pub decay_factor: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            lr0: 3e-4,
            decay_every: 48_000,
            decay_factor: 0.1,
        }
    }
}

impl LrSchedule {
    pub fn lr(&self, step: u64) -> f64 {
        let k = step / self.decay_every.max(1);
        self.lr0 * self.decay_factor.powi(k.min(i32::MAX as u64) as i32)
    }
}

/// First and second moment estimates plus the number of updates taken.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: PpdnWeights<T>,
    pub v: PpdnWeights<T>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(like: &PpdnWeights<T>) -> Self {
        Self {
            step: 0,
            m: PpdnWeights::zeros(*like.config()),
            v: PpdnWeights::zeros(*like.config()),
        }
    }
}

/// One update with learning rate `lr`; advances `state.step`.
pub fn adam_step<T: Scalar>(
    weights: &mut PpdnWeights<T>,
    grads: &PpdnWeights<T>,
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
    lr: f64,
) -> Result<()> {
    weights.check_same_shape(grads)?;
    weights.check_same_shape(&state.m)?;
    if !(lr >= 0.0) {
        return Err(Error::Config(format!("learning rate must be nonnegative, got {lr}")));
    }
    let t = (state.step + 1) as i32;
    let b1 = T::of(cfg.beta1);
    let b2 = T::of(cfg.beta2);
    let c1 = T::of(1.0 - cfg.beta1.powi(t));
    let c2 = T::of(1.0 - cfg.beta2.powi(t));
    let eps = T::of(cfg.eps);
    let lr = T::of(lr);
    let one = T::one();

    let ws = weights.param_slices_mut();
    let gs = grads.param_slices();
    let ms = state.m.param_slices_mut();
    let vs = state.v.param_slices_mut();
    for (((w, g), m), v) in ws.into_iter().zip(gs).zip(ms).zip(vs) {
        for i in 0..w.len() {
            m[i] = b1 * m[i] + (one - b1) * g[i];
            v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            w[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    state.step += 1;
    Ok(())
}
