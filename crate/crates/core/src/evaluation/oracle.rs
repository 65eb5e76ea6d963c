use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::metrics::{error_curve, DIVERGENCE_CEILING};
use crate::error::{config_err, Result};
use crate::frames::Frames;
use crate::integrators::{rollout_derivative, IntegratorKind, OracleSource, Rollout, RolloutOptions};
use crate::labels::{compute_derivative_labels, DerivativeField, LabelScheme};
use crate::pde_data::Trajectory;
use crate::scalar::l2_norm;
use crate::training::{Sample, Surrogate};

/// Rolls out with stored derivatives at every `stride`-th frame spacing, over the whole trajectory.
/// Off-grid stage times are linearly interpolated.
pub fn oracle_rollout(
    traj: &Trajectory<f64>,
    labels: &DerivativeField<f64>,
    stride: usize,
    kind: IntegratorKind,
) -> Result<(Rollout<f64>, usize)> {
    let steps = coarse_steps(traj, stride)?;
    let dt = traj.uniform_dt()? * stride as f64;
    let mut src = OracleSource::new(&traj.times, &labels.dudt, true)?;
    let r = rollout_derivative(&mut src, traj.frame(0), opts(traj, dt, steps), kind)?;
    Ok((r, src.interpolated_lookups()))
}

fn coarse_steps(traj: &Trajectory<f64>, stride: usize) -> Result<usize> {
    if stride == 0 {
        return Err(config_err("stride must be >= 1"));
    }
    let steps = (traj.n_t() - 1) / stride;
    if steps == 0 {
        return Err(config_err(format!("stride {stride} leaves no step in a {}-frame trajectory", traj.n_t())));
    }
    Ok(steps)
}

fn opts(traj: &Trajectory<f64>, dt: f64, steps: usize) -> RolloutOptions {
    RolloutOptions {
        t0: traj.times[0],
        ..RolloutOptions::new(dt, steps)
    }
}

/// Every `stride`-th frame, limited to the frames a coarse rollout visits.
fn coarse_truth(traj: &Trajectory<f64>, stride: usize, steps: usize) -> Result<Frames<f64>> {
    let rows: Vec<&[f64]> = (0..=steps).map(|k| traj.frame(k * stride)).collect();
    Frames::from_rows(&rows)
}

/// Which derivative source produced an error curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveSource {
    Oracle,
    Model,
}

impl CurveSource {
    pub fn name(self) -> &'static str {
        match self {
            CurveSource::Oracle => "oracle",
            CurveSource::Model => "model",
        }
    }
}

/// Mean per-frame relative error of one (source, integrator) pair over the samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurve {
    pub source: CurveSource,
    pub kind: IntegratorKind,
    pub dt: f64,
    pub times: Vec<f64>,
    pub errors: Vec<f64>,
    /// Oracle lookups answered by time interpolation (0 for model curves).
    pub interpolated_lookups: usize,
    pub diverged: usize,
}

impl ErrorCurve {
    pub fn mean(&self) -> f64 {
        self.errors.iter().sum::<f64>() / self.errors.len().max(1) as f64
    }
}

/// Oracle rollouts (and, if given, model rollouts) at `stride ×` the stored frame spacing.
/// Samples without labels get them computed with `scheme`.
pub fn oracle_comparison(
    samples: &[Sample],
    stride: usize,
    kinds: &[IntegratorKind],
    scheme: LabelScheme,
    model: Option<&Surrogate<f64>>,
) -> Result<Vec<ErrorCurve>> {
    let first = samples.first().ok_or_else(|| config_err("oracle comparison needs samples"))?;
    let steps = coarse_steps(&first.traj, stride)?;
    let dt = first.traj.uniform_dt()? * stride as f64;
    let times: Vec<f64> = (1..=steps).map(|k| first.traj.times[k * stride]).collect();
    let labels: Vec<DerivativeField<f64>> = samples
        .iter()
        .map(|s| match &s.labels {
            Some(l) => Ok(l.clone()),
            None => compute_derivative_labels(&s.traj, scheme),
        })
        .collect::<Result<_>>()?;
    let m = samples.len() as f64;
    let mut out = Vec::new();
    let sources: &[CurveSource] = if model.is_some() {
        &[CurveSource::Oracle, CurveSource::Model]
    } else {
        &[CurveSource::Oracle]
    };
    for &kind in kinds {
        for &source in sources {
            let mut errors = vec![0.0; steps];
            let mut interpolated = 0;
            let mut diverged = 0;
            for (s, l) in samples.iter().zip(&labels) {
                let truth = coarse_truth(&s.traj, stride, steps)?;
                let r = match (source, model) {
                    (CurveSource::Model, Some(sur)) => sur.rollout(s.traj.frame(0), s.traj.coefficient, opts(&s.traj, dt, steps), kind)?,
                    _ => {
                        let (r, n) = oracle_rollout(&s.traj, l, stride, kind)?;
                        interpolated += n;
                        r
                    }
                };
                let curve = if r.is_complete() {
                    error_curve(&r.frames, &truth)?
                } else {
                    diverged += 1;
                    vec![DIVERGENCE_CEILING; steps]
                };
                for (e, c) in errors.iter_mut().zip(curve) {
                    *e += c / m;
                }
            }
            out.push(ErrorCurve {
                source,
                kind,
                dt,
                times: times.clone(),
                errors,
                interpolated_lookups: interpolated,
                diverged,
            });
        }
    }
    Ok(out)
}

/// Result of perturbing a trajectory with Gaussian noise and relabelling it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseProbe {
    pub variance: f64,
    /// `‖ũ − u‖ / ‖u‖` over the whole trajectory.
    pub state_relative: f64,
    /// `‖L(ũ) − L(u)‖ / ‖L(u)‖`.
    pub label_relative: f64,
    /// RMS of `L(ũ) − L(u)`.
    pub label_noise_rms: f64,
    /// `σ · gain / Δt` from the stencil weights.
    pub predicted_label_noise_rms: f64,
}

impl NoiseProbe {
    pub fn amplification(&self) -> f64 {
        self.label_relative / self.state_relative
    }

    pub fn gain_ratio(&self) -> f64 {
        self.label_noise_rms / self.predicted_label_noise_rms
    }
}

/// Adds i.i.d. `N(0, variance)` noise to every value of `traj` and measures how much
/// the states and the derivative labels move.
pub fn noise_probe(traj: &Trajectory<f64>, variance: f64, scheme: LabelScheme, seed: u64) -> Result<NoiseProbe> {
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(config_err(format!("noise variance must be positive, got {variance}")));
    }
    let sigma = variance.sqrt();
    let normal = Normal::new(0.0, sigma).map_err(|e| config_err(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noisy = traj.clone();
    for v in noisy.u.as_mut_slice() {
        *v += normal.sample(&mut rng);
    }
    let clean = compute_derivative_labels(traj, scheme)?;
    let perturbed = compute_derivative_labels(&noisy, scheme)?;
    let diff = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x - y).collect() };
    let du = diff(noisy.u.as_slice(), traj.u.as_slice());
    let dl = diff(perturbed.dudt.as_slice(), clean.dudt.as_slice());
    let u_norm = l2_norm(traj.u.as_slice());
    let l_norm = l2_norm(clean.dudt.as_slice());
    if u_norm == 0.0 || l_norm == 0.0 {
        return Err(crate::error::Error::DivisionGuard("noise probe on an all-zero trajectory".into()));
    }
    Ok(NoiseProbe {
        variance,
        state_relative: l2_norm(&du) / u_norm,
        label_relative: l2_norm(&dl) / l_norm,
        label_noise_rms: l2_norm(&dl) / (dl.len() as f64).sqrt(),
        predicted_label_noise_rms: sigma * scheme.noise_gain(traj.n_t()) / clean.source_dt,
    })
}
