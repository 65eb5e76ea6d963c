use rayon::prelude::*;

use crate::error::{shape_err, Error, Result};
use crate::frames::Frames;
use crate::integrators::{integrate_step, IntegratorKind, RolloutOptions, RolloutState};
use crate::scalar::{l2_distance, l2_norm, Real};
use crate::training::{Objective, Sample, Surrogate};

/// Error assigned to rollouts and grid cells that hit the divergence sentinel.
pub const DIVERGENCE_CEILING: f64 = 1e3;

/// Pearson threshold below which a prediction counts as decorrelated.
pub const CORRELATION_THRESHOLD: f64 = 0.8;

/// `‖pred_i − truth_i‖₂ / ‖truth_i‖₂` for every frame `i ≥ 1`; row 0 is the shared initial condition.
pub fn error_curve<T: Real>(pred: &Frames<T>, truth: &Frames<T>) -> Result<Vec<f64>> {
    if !pred.same_shape(truth) {
        return Err(shape_err(format!(
            "prediction is {}x{}, truth {}x{}",
            pred.rows(),
            pred.cols(),
            truth.rows(),
            truth.cols()
        )));
    }
    (1..truth.rows())
        .map(|i| {
            let den = l2_norm(truth.row(i)).as_f64();
            if den == 0.0 {
                return Err(Error::DegenerateTruth { frame: i });
            }
            Ok(l2_distance(pred.row(i), truth.row(i)).as_f64() / den)
        })
        .collect()
}

/// Mean per-frame relative L2 error over the predicted frames (rows `1..`).
pub fn rollout_error<T: Real>(pred: &Frames<T>, truth: &Frames<T>) -> Result<f64> {
    let curve = error_curve(pred, truth)?;
    if curve.is_empty() {
        return Err(shape_err("rollout error needs at least one predicted frame"));
    }
    Ok(curve.iter().sum::<f64>() / curve.len() as f64)
}

/// Pearson correlation of two equally long vectors; `None` when either has zero variance.
pub fn pearson<T: Real>(a: &[T], b: &[T]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().map(|x| x.as_f64()).sum::<f64>() / n;
    let mb = b.iter().map(|x| x.as_f64()).sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x.as_f64() - ma, y.as_f64() - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        None
    } else {
        Some(sab / (saa * sbb).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationTime {
    /// Time of the first frame whose correlation drops below the threshold, else the final time.
    pub time: f64,
    pub frame: Option<usize>,
    /// Frames where a field had zero spatial variance (correlation taken as 0).
    pub flagged: Vec<usize>,
}

pub fn correlation_time<T: Real>(
    pred: &Frames<T>,
    truth: &Frames<T>,
    times: &[f64],
    threshold: f64,
) -> Result<CorrelationTime> {
    if !pred.same_shape(truth) || times.len() != truth.rows() || times.is_empty() {
        return Err(shape_err("correlation time needs matching fields and one time per frame"));
    }
    let mut flagged = Vec::new();
    for (i, &t) in times.iter().enumerate() {
        let r = pearson(pred.row(i), truth.row(i)).unwrap_or_else(|| {
            flagged.push(i);
            0.0
        });
        if r < threshold {
            return Ok(CorrelationTime {
                time: t,
                frame: Some(i),
                flagged,
            });
        }
    }
    Ok(CorrelationTime {
        time: *times.last().expect("non-empty"),
        frame: None,
        flagged,
    })
}

/// Summary of one surrogate (and integrator) over a validation split.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub label: String,
    pub objective: Objective,
    /// `None` for state prediction.
    pub integrator: Option<IntegratorKind>,
    pub rollout_error: f64,
    pub correlation_time: f64,
    pub next_step_error: f64,
    pub derivative_error: Option<f64>,
    /// Mean error per predicted frame.
    pub error_curve: Vec<f64>,
    pub diverged: usize,
}

/// Rollout error and correlation time of one sample at native resolution.
struct SampleRollout {
    error: f64,
    curve: Vec<f64>,
    corr: f64,
    diverged: bool,
}

fn sample_rollout<T: Real>(surrogate: &Surrogate<T>, s: &Sample, kind: IntegratorKind) -> Result<SampleRollout> {
    let truth: Frames<T> = s.traj.u.cast();
    let steps = truth.rows() - 1;
    let dt = s.traj.uniform_dt()?;
    let r = surrogate.rollout(truth.row(0), s.traj.coefficient, RolloutOptions::new(dt, steps), kind)?;
    if r.is_complete() {
        let curve = error_curve(&r.frames, &truth)?;
        let corr = correlation_time(&r.frames, &truth, &s.traj.times, CORRELATION_THRESHOLD)?.time;
        Ok(SampleRollout {
            error: curve.iter().sum::<f64>() / curve.len() as f64,
            curve,
            corr,
            diverged: false,
        })
    } else {
        let kept = r.frames.rows();
        let head = Frames::from_rows(&truth.iter_rows().take(kept).collect::<Vec<_>>())?;
        let corr = correlation_time(&r.frames, &head, &s.traj.times[..kept], CORRELATION_THRESHOLD)?;
        let corr = match corr.frame {
            Some(_) => corr.time,
            None => s.traj.times[kept.min(steps)],
        };
        Ok(SampleRollout {
            error: DIVERGENCE_CEILING,
            curve: vec![DIVERGENCE_CEILING; steps],
            corr,
            diverged: true,
        })
    }
}

/// Mean rollout error over `samples` at native resolution; divergent rollouts count as
/// [`DIVERGENCE_CEILING`].
pub fn validation_rollout_loss<T: Real>(surrogate: &Surrogate<T>, samples: &[Sample], kind: IntegratorKind) -> Result<f64> {
    let errors = samples
        .par_iter()
        .map(|s| sample_rollout(surrogate, s, kind).map(|r| r.error))
        .collect::<Result<Vec<_>>>()?;
    Ok(errors.iter().sum::<f64>() / errors.len().max(1) as f64)
}

/// One-step errors averaged over every validation `(sample, timestep)` pair. For derivative
/// models also returns the raw derivative error against the samples' labels.
pub fn next_step_errors<T: Real>(
    surrogate: &Surrogate<T>,
    samples: &[Sample],
    kind: IntegratorKind,
) -> Result<(f64, Option<f64>)> {
    let objective = surrogate.meta.objective;
    let per_sample = samples
        .par_iter()
        .map(|s| -> Result<(f64, usize, f64, usize)> {
            let (mut ns, mut ns_n, mut de, mut de_n) = (0.0, 0, 0.0, 0);
            let c = s.traj.coefficient;
            for n in 0..s.traj.n_t() {
                let u: Vec<T> = s.traj.frame(n).iter().map(|&x| T::lit(x)).collect();
                let t = s.traj.times[n];
                if objective == Objective::Derivative {
                    let labels = s
                        .labels
                        .as_ref()
                        .ok_or_else(|| Error::Config("derivative error requires labels".into()))?;
                    let reference: Vec<T> = labels.dudt.row(n).iter().map(|&x| T::lit(x)).collect();
                    let den = l2_norm(&reference).as_f64();
                    if den == 0.0 {
                        return Err(Error::DegenerateTruth { frame: n });
                    }
                    let f = surrogate.derivative(&u, t, c)?;
                    de += l2_distance(&f, &reference).as_f64() / den;
                    de_n += 1;
                }
                if n + 1 < s.traj.n_t() {
                    let dt = s.traj.times[n + 1] - t;
                    let next = match objective {
                        Objective::State => surrogate.next_state(&u, t, c)?,
                        Objective::Derivative => {
                            integrate_step(&mut surrogate.source(c), RolloutState::new(u, t), dt, kind)?.u
                        }
                    };
                    let truth: Vec<T> = s.traj.frame(n + 1).iter().map(|&x| T::lit(x)).collect();
                    let den = l2_norm(&truth).as_f64();
                    if den == 0.0 {
                        return Err(Error::DegenerateTruth { frame: n + 1 });
                    }
                    ns += l2_distance(&next, &truth).as_f64() / den;
                    ns_n += 1;
                }
            }
            Ok((ns, ns_n, de, de_n))
        })
        .collect::<Result<Vec<_>>>()?;
    let (ns, ns_n, de, de_n) = per_sample
        .into_iter()
        .fold((0.0, 0, 0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2, a.3 + b.3));
    let derivative = (objective == Objective::Derivative).then(|| de / de_n.max(1) as f64);
    Ok((ns / ns_n.max(1) as f64, derivative))
}

/// Full metrics record for one surrogate / integrator pair.
pub fn evaluate<T: Real>(
    label: &str,
    surrogate: &Surrogate<T>,
    samples: &[Sample],
    kind: IntegratorKind,
) -> Result<MetricsRecord> {
    if samples.is_empty() {
        return Err(Error::Config("evaluation needs at least one validation sample".into()));
    }
    let runs = samples
        .par_iter()
        .map(|s| sample_rollout(surrogate, s, kind))
        .collect::<Result<Vec<_>>>()?;
    let m = runs.len() as f64;
    let steps = runs.iter().map(|r| r.curve.len()).max().unwrap_or(0);
    let mut curve = vec![0.0; steps];
    for r in &runs {
        for (c, v) in curve.iter_mut().zip(&r.curve) {
            *c += v / m;
        }
    }
    let (next_step_error, derivative_error) = next_step_errors(surrogate, samples, kind)?;
    let objective = surrogate.meta.objective;
    Ok(MetricsRecord {
        label: label.to_string(),
        objective,
        integrator: (objective == Objective::Derivative).then_some(kind),
        rollout_error: runs.iter().map(|r| r.error).sum::<f64>() / m,
        correlation_time: runs.iter().map(|r| r.corr).sum::<f64>() / m,
        next_step_error,
        derivative_error,
        error_curve: curve,
        diverged: runs.iter().filter(|r| r.diverged).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(rows: &[[f64; 2]]) -> Frames<f64> {
        Frames::from_rows(rows).unwrap()
    }

    #[test]
    fn rollout_error_cases() {
        let truth = f(&[[3.0, 4.0], [1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(rollout_error(&truth, &truth).unwrap(), 0.0);
        let double = truth.map(|x| 2.0 * x);
        assert!((rollout_error(&double, &truth).unwrap() - 1.0).abs() < 1e-15);
        let pred = f(&[[3.0, 4.0], [1.0, 0.0], [0.0, 0.0]]);
        assert!((rollout_error(&pred, &truth).unwrap() - 0.5).abs() < 1e-15);
        let zero = f(&[[1.0, 1.0], [0.0, 0.0]]);
        assert!(matches!(rollout_error(&zero, &zero), Err(Error::DegenerateTruth { frame: 1 })));
        assert!(rollout_error(&truth, &zero).is_err());
    }

    #[test]
    fn correlation_time_cases() {
        let truth = f(&[[1.0, 2.0], [2.0, 1.0], [1.0, 3.0], [0.0, 1.0]]);
        let times = [0.0, 0.5, 1.0, 1.5];
        let same = correlation_time(&truth, &truth, &times, 0.8).unwrap();
        assert_eq!(same.time, 1.5);
        assert_eq!(same.frame, None);
        let mut flipped = truth.clone();
        for i in 2..4 {
            for v in flipped.row_mut(i) {
                *v = -*v;
            }
        }
        let ct = correlation_time(&flipped, &truth, &times, 0.8).unwrap();
        assert_eq!((ct.time, ct.frame), (1.0, Some(2)));
        let mut flat = truth.clone();
        flat.row_mut(1).fill(7.0);
        let ct = correlation_time(&flat, &truth, &times, 0.8).unwrap();
        assert_eq!(ct.frame, Some(1));
        assert_eq!(ct.flagged, vec![1]);
    }

    proptest::proptest! {
        #[test]
        fn rollout_error_scale_covariant(seed in 0u64..1000, alpha in prop_alpha()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut gen = || Frames::from_vec(4, 8, (0..32).map(|_| rng.random::<f64>() - 0.5).collect()).unwrap();
            let (p, t) = (gen(), gen());
            let base = rollout_error(&p, &t).unwrap();
            let scaled = rollout_error(&p.map(|x| alpha * x), &t.map(|x| alpha * x)).unwrap();
            proptest::prop_assert!((base - scaled).abs() <= 1e-12 * base.max(1.0));
        }

        #[test]
        fn correlation_time_affine_invariant(seed in 0u64..1000, a in 0.1f64..10.0, b in -5.0f64..5.0) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let truth = Frames::from_vec(6, 8, (0..48).map(|_| rng.random::<f64>()).collect()).unwrap();
            let pred = Frames::from_vec(6, 8, truth.as_slice().iter().enumerate().map(|(k, x)| x + 0.15 * (k / 8) as f64 * rng.random::<f64>()).collect()).unwrap();
            let times: Vec<f64> = (0..6).map(|i| i as f64).collect();
            let base = correlation_time(&pred, &truth, &times, 0.8).unwrap();
            let moved = correlation_time(&pred.map(|x| a * x + b), &truth.map(|x| a * x + b), &times, 0.8).unwrap();
            proptest::prop_assert_eq!(base.frame, moved.frame);
        }
    }

    fn prop_alpha() -> impl proptest::strategy::Strategy<Value = f64> {
        proptest::prop_oneof![-100.0f64..-0.01, 0.01f64..100.0]
    }
}
