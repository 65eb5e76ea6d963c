use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SpatialGrid;
use crate::error::{config_err, Result};
use crate::scalar::Real;

/// Distribution of random sums of sines `Σ_j A_j sin(2π l_j x / L + φ_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialConditionSpec {
    pub modes: usize,
    pub amplitude_range: (f64, f64),
    pub wavenumbers: Vec<u32>,
    pub seed: u64,
}

impl Default for InitialConditionSpec {
    fn default() -> Self {
        Self {
            modes: 5,
            amplitude_range: (-0.5, 0.5),
            wavenumbers: vec![1, 2, 3],
            seed: 0,
        }
    }
}

impl InitialConditionSpec {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes == 0 {
            return Err(config_err("initial condition needs at least one mode"));
        }
        let (lo, hi) = self.amplitude_range;
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(config_err(format!("amplitude range [{lo}, {hi}] is reversed or not finite")));
        }
        if self.wavenumbers.is_empty() {
            return Err(config_err("wavenumber set is empty"));
        }
        if self.wavenumbers.contains(&0) {
            return Err(config_err("wavenumbers must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineMode {
    pub amplitude: f64,
    pub wavenumber: u32,
    pub phase: f64,
}

/// A concrete draw from an [`InitialConditionSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct SineSeries {
    pub modes: Vec<SineMode>,
}

impl SineSeries {
    pub fn sample(spec: &InitialConditionSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let (lo, hi) = spec.amplitude_range;
        let modes = (0..spec.modes)
            .map(|_| {
                let amplitude = lo + (hi - lo) * rng.random::<f64>();
                let wavenumber = spec.wavenumbers[rng.random_range(0..spec.wavenumbers.len())];
                let phase = 2.0 * PI * rng.random::<f64>();
                SineMode {
                    amplitude,
                    wavenumber,
                    phase,
                }
            })
            .collect();
        Ok(Self { modes })
    }

    /// Value at position `x` on a domain of length `length`.
    pub fn value_at(&self, x: f64, length: f64) -> f64 {
        self.modes
            .iter()
            .map(|m| m.amplitude * (2.0 * PI * m.wavenumber as f64 * x / length + m.phase).sin())
            .sum()
    }

    pub fn evaluate<T: Real>(&self, grid: &SpatialGrid) -> Vec<T> {
        (0..grid.n_x())
            .map(|m| T::lit(self.value_at(grid.x(m), grid.length())))
            .collect()
    }
}

/// Samples `u(0, x_m)` on `grid`; deterministic in `spec.seed`.
pub fn sample_initial_condition<T: Real>(
    spec: &InitialConditionSpec,
    grid: &SpatialGrid,
) -> Result<Vec<T>> {
    Ok(SineSeries::sample(spec)?.evaluate(grid))
}
