use std::time::Instant;

use super::metrics::{rollout_error, DIVERGENCE_CEILING};
use super::oracle::oracle_rollout;
use crate::error::{config_err, Result};
use crate::integrators::{IntegratorKind, RolloutOptions};
use crate::labels::{compute_derivative_labels, LabelScheme};
use crate::pde_data::{solve_advection, solve_heat, solve_ks, Equation, PdeConfig};
use crate::training::{Objective, Sample, Surrogate};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub label: String,
    pub integrator: Option<IntegratorKind>,
    pub steps: usize,
    /// Derivative or state evaluations per rollout.
    pub evaluations: usize,
    /// Median over repeats of the mean wall time of one rollout.
    pub seconds_per_rollout: f64,
    pub rollout_error: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

struct Pass {
    seconds: f64,
    error: f64,
    evaluations: usize,
}

/// Times serial full-length rollouts of every sample. Integrators are interleaved within
/// each repeat so slow drifts in machine load affect them equally.
pub fn timing_bench(
    models: &[(&str, &Surrogate<f64>)],
    samples: &[Sample],
    kinds: &[IntegratorKind],
    repeats: usize,
) -> Result<Vec<BenchRow>> {
    let first = samples.first().ok_or_else(|| config_err("bench needs samples"))?;
    if repeats == 0 {
        return Err(config_err("bench needs at least one repeat"));
    }
    let steps = first.traj.n_t() - 1;
    let dt = first.traj.uniform_dt()?;
    let opts = RolloutOptions::new(dt, steps);
    let m = samples.len() as f64;
    let mut rows = Vec::new();

    let run_model = |sur: &Surrogate<f64>, kind: IntegratorKind| -> Result<Pass> {
        let start = Instant::now();
        let mut err = 0.0;
        let mut evaluations = 0;
        for s in samples {
            let r = sur.rollout(s.traj.frame(0), s.traj.coefficient, opts, kind)?;
            evaluations = r.evaluations;
            err += if r.is_complete() {
                rollout_error(&r.frames, &s.traj.u)?
            } else {
                DIVERGENCE_CEILING
            };
        }
        Ok(Pass {
            seconds: start.elapsed().as_secs_f64() / m,
            error: err / m,
            evaluations,
        })
    };

    for &(label, sur) in models {
        let kinds_for: Vec<Option<IntegratorKind>> = match sur.meta.objective {
            Objective::State => vec![None],
            Objective::Derivative => kinds.iter().copied().map(Some).collect(),
        };
        // Warm caches and allocator before timing.
        run_model(sur, kinds_for[0].unwrap_or(IntegratorKind::ForwardEuler))?;
        let mut times = vec![Vec::with_capacity(repeats); kinds_for.len()];
        let mut last = Vec::new();
        for _ in 0..repeats {
            last.clear();
            for (i, k) in kinds_for.iter().enumerate() {
                let pass = run_model(sur, k.unwrap_or(IntegratorKind::ForwardEuler))?;
                times[i].push(pass.seconds);
                last.push(pass);
            }
        }
        for ((k, t), pass) in kinds_for.iter().zip(times).zip(last) {
            rows.push(BenchRow {
                label: label.to_string(),
                integrator: *k,
                steps,
                evaluations: pass.evaluations,
                seconds_per_rollout: median(t),
                rollout_error: pass.error,
            });
        }
    }

    // Context rows: oracle-driven rollouts and the reference solver.
    let labels = samples
        .iter()
        .map(|s| match &s.labels {
            Some(l) => Ok(l.clone()),
            None => compute_derivative_labels(&s.traj, LabelScheme::default()),
        })
        .collect::<Result<Vec<_>>>()?;
    for &kind in kinds {
        let mut t = Vec::with_capacity(repeats);
        let mut err = 0.0;
        let mut evaluations = 0;
        for _ in 0..repeats {
            let start = Instant::now();
            err = 0.0;
            for (s, l) in samples.iter().zip(&labels) {
                let (r, _) = oracle_rollout(&s.traj, l, 1, kind)?;
                evaluations = r.evaluations;
                err += rollout_error(&r.frames, &s.traj.u)?;
            }
            t.push(start.elapsed().as_secs_f64() / m);
        }
        rows.push(BenchRow {
            label: "oracle".into(),
            integrator: Some(kind),
            steps,
            evaluations,
            seconds_per_rollout: median(t),
            rollout_error: err / m,
        });
    }
    let mut t = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        for s in samples {
            let u0 = s.traj.frame(0);
            match s.traj.equation {
                Equation::Advection => {
                    solve_advection(u0, s.traj.coefficient, &s.traj.times, &s.traj.grid)?;
                }
                Equation::Heat => {
                    solve_heat(u0, s.traj.coefficient, &s.traj.times, &s.traj.grid)?;
                }
                Equation::KuramotoSivashinsky => {
                    let cfg = PdeConfig {
                        n_t: s.traj.n_t(),
                        t_end: dt * s.traj.n_t() as f64,
                        burn_in: 0.0,
                        ..PdeConfig::ks()
                    };
                    solve_ks(u0, &cfg, &s.traj.grid)?;
                }
            }
        }
        t.push(start.elapsed().as_secs_f64() / m);
    }
    rows.push(BenchRow {
        label: "solver".into(),
        integrator: None,
        steps,
        evaluations: 0,
        seconds_per_rollout: median(t),
        rollout_error: 0.0,
    });
    Ok(rows)
}
