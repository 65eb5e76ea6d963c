//! Adam with bias correction over [`ModelParams`].

use super::ModelParams;
use crate::error::{config_err, Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(config_err(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(config_err(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(config_err("epsilon must be positive"));
        }
        Ok(())
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub m: ModelParams<T>,
    pub v: ModelParams<T>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One Adam step with learning rate `lr` (which may differ from `cfg.learning_rate` under a schedule).
/// Non-finite gradients leave the parameters untouched and return an error.
pub fn adam_update<T: Real>(
    params: &mut ModelParams<T>,
    grads: &ModelParams<T>,
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
    lr: f64,
) -> Result<()> {
    if grads.config() != params.config() || state.m.config() != params.config() {
        return Err(Error::Usage("gradient layout does not match parameters".into()));
    }
    if !grads.all_finite() {
        return Err(Error::NonFiniteGradient);
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let (one_b1, one_b2) = (T::lit(1.0 - cfg.beta1), T::lit(1.0 - cfg.beta2));
    let step = T::lit(lr / bc1);
    let inv_bc2 = T::lit(1.0 / bc2);
    let eps = T::lit(cfg.epsilon);
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    for (((p, g), m), v) in params.tensors_mut().iter_mut().zip(grads.tensors()).zip(ms).zip(vs) {
        for j in 0..p.data.len() {
            let gj = g.data[j];
            m.data[j] = b1 * m.data[j] + one_b1 * gj;
            v.data[j] = b2 * v.data[j] + one_b2 * gj * gj;
            p.data[j] = p.data[j] - step * m.data[j] / ((v.data[j] * inv_bc2).sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::ArchConfig;
    use super::*;

    fn tiny() -> ModelParams<f64> {
        let mut c = ArchConfig::conv(8);
        c.width = 2;
        c.depth = 1;
        ModelParams::init(c, 0).unwrap()
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = tiny();
        let before = p.clone();
        let mut g = p.zeros_like();
        for t in g.tensors_mut() {
            t.data.fill(0.37);
        }
        let mut s = AdamState::new(&p);
        let cfg = AdamConfig::default();
        adam_update(&mut p, &g, &mut s, &cfg, cfg.learning_rate).unwrap();
        for (a, b) in p.tensors().iter().zip(before.tensors()) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert!((y - x - 1e-3).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_non_finite_gradients() {
        let mut p = tiny();
        let before = p.clone();
        let mut g = p.zeros_like();
        g.tensors_mut()[0].data[0] = f64::NAN;
        let mut s = AdamState::new(&p);
        let err = adam_update(&mut p, &g, &mut s, &AdamConfig::default(), 1e-3).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient));
        assert_eq!(p.tensors(), before.tensors());
        assert_eq!(s.step, 0);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = tiny();
        let mut s = AdamState::new(&p);
        let cfg = AdamConfig {
            learning_rate: 0.05,
            ..AdamConfig::default()
        };
        for _ in 0..2000 {
            let g = p.clone();
            adam_update(&mut p, &g, &mut s, &cfg, cfg.learning_rate).unwrap();
        }
        assert!(p.max_abs() < 1e-2);
    }

    #[test]
    fn config_validation() {
        assert!(AdamConfig::default().validate().is_ok());
        let bad = AdamConfig {
            beta1: 1.0,
            ..AdamConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
