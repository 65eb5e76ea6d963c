use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::metrics::{validation_rollout_loss, DIVERGENCE_CEILING};
use crate::error::{config_err, Result};
use crate::integrators::IntegratorKind;
use crate::scalar::l2_norm;
use crate::surrogate::{Model, ModelParams};
use crate::training::{Sample, Surrogate};

#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeSpec {
    pub seed_delta: u64,
    pub seed_gamma: u64,
    /// Values taken by both `a` and `b`.
    pub coords: Vec<f64>,
    /// Integrator for derivative models; ignored by state models.
    pub kind: IntegratorKind,
}

impl LandscapeSpec {
    /// `points` evenly spaced coordinates on `[−extent, extent]`.
    pub fn square(points: usize, extent: f64, seed_delta: u64, seed_gamma: u64, kind: IntegratorKind) -> Result<Self> {
        if points < 2 || !(extent > 0.0) {
            return Err(config_err("landscape needs >= 2 points and a positive extent"));
        }
        let coords = (0..points)
            .map(|i| -extent + 2.0 * extent * i as f64 / (points - 1) as f64)
            .collect();
        Ok(Self {
            seed_delta,
            seed_gamma,
            coords,
            kind,
        })
    }
}

/// Losses `L(θ* + a_i δ + b_j γ)` stored as `values[i][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeGrid {
    pub coords: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl LandscapeGrid {
    /// Whether the cell at `(0, 0)` is no larger than any other cell.
    pub fn center_is_minimum(&self) -> Option<bool> {
        let c = self.coords.iter().position(|&x| x == 0.0)?;
        let center = self.values[c][c];
        Some(self.values.iter().flatten().all(|&v| center <= v))
    }
}

/// Gaussian direction with each tensor rescaled to the norm of the matching trained tensor.
pub fn filter_normalized_direction(params: &ModelParams<f64>, seed: u64) -> ModelParams<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dir = params.zeros_like();
    for (d, p) in dir.tensors_mut().iter_mut().zip(params.tensors()) {
        for x in d.data.iter_mut() {
            *x = StandardNormal.sample(&mut rng);
        }
        let dn = l2_norm(&d.data);
        let scale = if dn > 0.0 { l2_norm(&p.data) / dn } else { 0.0 };
        for x in d.data.iter_mut() {
            *x *= scale;
        }
    }
    dir
}

/// Evaluates the validation rollout loss on the plane spanned by two filter-normalized
/// directions. Cells are capped at [`DIVERGENCE_CEILING`]; `(0, 0)` reproduces the
/// unperturbed parameters exactly.
pub fn loss_landscape(surrogate: &Surrogate<f64>, samples: &[Sample], spec: &LandscapeSpec) -> Result<LandscapeGrid> {
    if samples.is_empty() {
        return Err(config_err("landscape needs validation samples"));
    }
    let base = surrogate.model.params();
    let delta = filter_normalized_direction(base, spec.seed_delta);
    let gamma = filter_normalized_direction(base, spec.seed_gamma);
    let mut values = Vec::with_capacity(spec.coords.len());
    for &a in &spec.coords {
        let mut row = Vec::with_capacity(spec.coords.len());
        for &b in &spec.coords {
            let mut p = base.clone();
            for ((t, d), g) in p.tensors_mut().iter_mut().zip(delta.tensors()).zip(gamma.tensors()) {
                for ((x, &dx), &gx) in t.data.iter_mut().zip(&d.data).zip(&g.data) {
                    // Summing the offset first keeps the grid exactly transposed under δ ↔ γ.
                    *x += a * dx + b * gx;
                }
            }
            let perturbed = Surrogate::new(Model::new(p), surrogate.meta);
            let loss = validation_rollout_loss(&perturbed, samples, spec.kind)?;
            row.push(if loss.is_finite() { loss.min(DIVERGENCE_CEILING) } else { DIVERGENCE_CEILING });
        }
        values.push(row);
    }
    Ok(LandscapeGrid {
        coords: spec.coords.clone(),
        values,
    })
}
