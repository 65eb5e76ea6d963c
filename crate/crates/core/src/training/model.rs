use super::{NormStats, Objective};
use crate::error::{config_err, Error, Result};
use crate::integrators::{rollout_derivative, rollout_state, DerivativeSource, IntegratorKind, Rollout, RolloutOptions};
use crate::pde_data::Equation;
use crate::scalar::Real;
use crate::surrogate::{Conditioning, ConditioningPolicy, Model};

/// Everything besides the weights that inference needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateMeta {
    pub objective: Objective,
    pub norm: NormStats,
    pub policy: ConditioningPolicy,
    /// Frame spacing of the training data; a state model always advances by this.
    pub dt: f64,
    pub equation: Equation,
}

/// A trained network together with its normalization and conditioning conventions.
/// All public methods take and return physical (un-normalized) fields.
#[derive(Debug, Clone)]
pub struct Surrogate<T: Real> {
    pub model: Model<T>,
    pub meta: SurrogateMeta,
}

impl<T: Real> Surrogate<T> {
    pub fn new(model: Model<T>, meta: SurrogateMeta) -> Self {
        Self { model, meta }
    }

    pub fn conditioning(&self, t: f64, coefficient: f64) -> Conditioning {
        self.meta.policy.scale(t, coefficient).0
    }

    /// Network output mapped back to physical units (a state or a derivative).
    pub fn output(&self, u: &[T], t: f64, coefficient: f64) -> Result<Vec<T>> {
        let x = self.meta.norm.normalize_input(u);
        let y = self.model.predict(&x, &self.conditioning(t, coefficient))?;
        Ok(self.meta.norm.denormalize_target(&y))
    }

    pub fn derivative(&self, u: &[T], t: f64, coefficient: f64) -> Result<Vec<T>> {
        if self.meta.objective != Objective::Derivative {
            return Err(Error::Usage("state-prediction model queried for a derivative".into()));
        }
        self.output(u, t, coefficient)
    }

    pub fn next_state(&self, u: &[T], t: f64, coefficient: f64) -> Result<Vec<T>> {
        if self.meta.objective != Objective::State {
            return Err(Error::Usage("derivative-prediction model queried for a next state".into()));
        }
        self.output(u, t, coefficient)
    }

    pub fn source(&self, coefficient: f64) -> ModelSource<'_, T> {
        ModelSource {
            surrogate: self,
            coefficient,
        }
    }

    /// Rolls out from `u0`. State models ignore `kind` and require `opts.dt` to equal
    /// their training spacing.
    pub fn rollout(&self, u0: &[T], coefficient: f64, opts: RolloutOptions, kind: IntegratorKind) -> Result<Rollout<T>> {
        match self.meta.objective {
            Objective::Derivative => rollout_derivative(&mut self.source(coefficient), u0, opts, kind),
            Objective::State => {
                if (opts.dt - self.meta.dt).abs() > 1e-9 * self.meta.dt {
                    return Err(config_err(format!(
                        "state model trained at Δt = {} cannot step by {}",
                        self.meta.dt, opts.dt
                    )));
                }
                rollout_state(|u, t| self.next_state(u, t, coefficient), u0, opts)
            }
        }
    }
}

/// Derivative source backed by a trained derivative-prediction surrogate.
pub struct ModelSource<'a, T: Real> {
    surrogate: &'a Surrogate<T>,
    coefficient: f64,
}

impl<T: Real> DerivativeSource<T> for ModelSource<'_, T> {
    fn derivative(&mut self, u: &[T], t: f64) -> Result<Vec<T>> {
        self.surrogate.derivative(u, t, self.coefficient)
    }
}
