//! Adam with bias correction, plus global-norm gradient clipping.

use crate::error::{Error, Result};
use crate::params::ParamRegistry;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update over every parameter, then zero the grads.
pub fn adam_step<F: Scalar>(registry: &mut ParamRegistry<F>, cfg: &AdamConfig) -> Result<()> {
    if cfg.lr <= 0.0 || cfg.lr.is_nan() {
        return Err(Error::contract("adam: lr must be positive"));
    }
    if !(0.0..1.0).contains(&cfg.beta1) || !(0.0..1.0).contains(&cfg.beta2) {
        return Err(Error::contract("adam: betas must lie in [0, 1)"));
    }
    let b1 = F::from_f64(cfg.beta1);
    let b2 = F::from_f64(cfg.beta2);
    let one_m_b1 = F::ONE - b1;
    let one_m_b2 = F::ONE - b2;
    let lr = F::from_f64(cfg.lr);
    let eps = F::from_f64(cfg.eps);

    for p in registry.iter_mut() {
        p.step_count += 1;
        let t = p.step_count as i32;
        let corr1 = F::from_f64(1.0 - cfg.beta1.powi(t));
        let corr2 = F::from_f64(1.0 - cfg.beta2.powi(t));
        let n = p.value.len();
        let value = p.value.data_mut();
        let grad = p.grad.data_mut();
        let m = p.adam_m.data_mut();
        let v = p.adam_v.data_mut();
        for i in 0..n {
            let g = grad[i];
            m[i] = b1 * m[i] + one_m_b1 * g;
            v[i] = b2 * v[i] + one_m_b2 * g * g;
            let m_hat = m[i] / corr1;
            let v_hat = v[i] / corr2;
            value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        grad.fill(F::ZERO);
    }
    Ok(())
}

/// Scale all gradients so their joint Euclidean norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm<F: Scalar>(registry: &mut ParamRegistry<F>, max_norm: f64) -> f64 {
    let norm = registry.grad_norm();
    if norm > max_norm && norm > 0.0 {
        let scale = F::from_f64(max_norm / norm);
        for p in registry.iter_mut() {
            for g in p.grad.data_mut() {
                *g *= scale;
            }
        }
    }
    norm
}
