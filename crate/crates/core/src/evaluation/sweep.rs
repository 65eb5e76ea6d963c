use rayon::prelude::*;

use super::metrics::{rollout_error, DIVERGENCE_CEILING};
use crate::error::{config_err, Result};
use crate::frames::Frames;
use crate::integrators::{IntegratorKind, RolloutOptions};
use crate::pde_data::{solve_advection, solve_heat, solve_ks, Equation, PdeConfig, Trajectory};
use crate::training::{Objective, Sample, Surrogate};

/// Step counts of the default sweep over a fixed horizon.
pub const SWEEP_STEPS: [usize; 10] = [124, 80, 60, 50, 40, 30, 25, 15, 12, 8];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub dts: Vec<f64>,
    /// Physical time covered by every rollout; each `Δt` tiles it to within one native frame.
    pub horizon: f64,
    pub integrators: Vec<IntegratorKind>,
    pub objectives: Vec<Objective>,
}

impl SweepSpec {
    /// The default grid for a dataset with `n_t` frames spaced `native_dt`.
    pub fn for_native(native_dt: f64, n_t: usize) -> Self {
        let horizon = native_dt * (n_t - 1) as f64;
        Self {
            dts: SWEEP_STEPS.iter().map(|&s| horizon / s as f64).collect(),
            horizon,
            integrators: IntegratorKind::ALL.to_vec(),
            objectives: vec![Objective::State, Objective::Derivative],
        }
    }

    /// Number of steps for `dt`, checked to tile the horizon within `tolerance`.
    pub fn steps(&self, dt: f64, tolerance: f64) -> Result<usize> {
        if !(dt > 0.0) {
            return Err(config_err(format!("sweep Δt must be positive, got {dt}")));
        }
        let steps = (self.horizon / dt).round() as usize;
        if steps == 0 || (steps as f64 * dt - self.horizon).abs() > tolerance {
            return Err(config_err(format!("Δt = {dt} does not tile the horizon {}", self.horizon)));
        }
        Ok(steps)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub dt: f64,
    pub steps: usize,
    pub objective: Objective,
    /// `None` for state prediction.
    pub integrator: Option<IntegratorKind>,
    pub rollout_error: f64,
    /// `c_max Δt / Δx` for advection.
    pub cfl: Option<f64>,
    pub diverged: usize,
}

/// Ground truth for `sample`'s initial condition and coefficient at frames `k·dt`, `k ≤ steps`.
pub fn regenerate_truth(sample: &Trajectory<f64>, dt: f64, steps: usize) -> Result<Frames<f64>> {
    let t0 = sample.times[0];
    let times: Vec<f64> = (0..=steps).map(|k| t0 + k as f64 * dt).collect();
    let u0 = sample.frame(0);
    let traj = match sample.equation {
        Equation::Advection => solve_advection(u0, sample.coefficient, &times, &sample.grid)?,
        Equation::Heat => solve_heat(u0, sample.coefficient, &times, &sample.grid)?,
        Equation::KuramotoSivashinsky => {
            let cfg = PdeConfig {
                n_t: steps + 1,
                t_end: (steps + 1) as f64 * dt,
                burn_in: 0.0,
                solver_dt: PdeConfig::ks().solver_dt.min(dt),
                ..PdeConfig::ks()
            };
            solve_ks(u0, &cfg, &sample.grid)?
        }
    };
    Ok(traj.u)
}

fn mean_error(
    surrogate: &Surrogate<f64>,
    samples: &[Sample],
    truths: &[Frames<f64>],
    dt: f64,
    steps: usize,
    kind: IntegratorKind,
) -> Result<(f64, usize)> {
    let per = samples
        .par_iter()
        .zip(truths)
        .map(|(s, truth)| {
            let opts = RolloutOptions {
                t0: s.traj.times[0],
                ..RolloutOptions::new(dt, steps)
            };
            let r = surrogate.rollout(s.traj.frame(0), s.traj.coefficient, opts, kind)?;
            if r.is_complete() {
                Ok((rollout_error(&r.frames, truth)?.min(DIVERGENCE_CEILING), false))
            } else {
                Ok((DIVERGENCE_CEILING, true))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let m = per.len() as f64;
    Ok((per.iter().map(|p| p.0).sum::<f64>() / m, per.iter().filter(|p| p.1).count()))
}

/// Runs every (Δt, objective, integrator) cell. Derivative cells all use `derivative`;
/// state cells use the model in `state_models` whose training spacing equals the cell's Δt.
pub fn timescale_sweep(
    spec: &SweepSpec,
    samples: &[Sample],
    derivative: Option<&Surrogate<f64>>,
    state_models: &[&Surrogate<f64>],
) -> Result<Vec<SweepRow>> {
    let first = samples.first().ok_or_else(|| config_err("sweep needs samples"))?;
    let native_dt = first.traj.uniform_dt()?;
    let c_max = samples.iter().map(|s| s.traj.coefficient).fold(0.0, f64::max);
    let mut rows = Vec::new();
    for &dt in &spec.dts {
        let steps = spec.steps(dt, native_dt)?;
        let truths = samples
            .par_iter()
            .map(|s| regenerate_truth(&s.traj, dt, steps))
            .collect::<Result<Vec<_>>>()?;
        let cfl = (first.traj.equation == Equation::Advection).then(|| c_max * dt / first.traj.grid.dx());
        for &objective in &spec.objectives {
            match objective {
                Objective::Derivative => {
                    let model = derivative.ok_or_else(|| config_err("sweep needs a derivative-prediction model"))?;
                    for &kind in &spec.integrators {
                        let (err, diverged) = mean_error(model, samples, &truths, dt, steps, kind)?;
                        rows.push(SweepRow {
                            dt,
                            steps,
                            objective,
                            integrator: Some(kind),
                            rollout_error: err,
                            cfl,
                            diverged,
                        });
                    }
                }
                Objective::State => {
                    let model = state_models
                        .iter()
                        .find(|m| (m.meta.dt - dt).abs() <= 1e-9 * dt)
                        .ok_or_else(|| config_err(format!("no state-prediction model trained at Δt = {dt}")))?;
                    let (err, diverged) = mean_error(model, samples, &truths, dt, steps, IntegratorKind::ForwardEuler)?;
                    rows.push(SweepRow {
                        dt,
                        steps,
                        objective,
                        integrator: None,
                        rollout_error: err,
                        cfl,
                        diverged,
                    });
                }
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_matches_step_counts() {
        let spec = SweepSpec::for_native(0.016, 125);
        assert_eq!(spec.dts.len(), 10);
        assert!((spec.dts[0] - 0.016).abs() < 1e-15);
        assert!((spec.dts[9] - 0.248).abs() < 1e-12);
        for (dt, s) in spec.dts.iter().zip(SWEEP_STEPS) {
            assert_eq!(spec.steps(*dt, 0.016).unwrap(), s);
        }
        assert!(spec.steps(0.3, 0.016).is_err());
    }
}
