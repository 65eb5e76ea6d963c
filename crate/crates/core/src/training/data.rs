use rand::Rng;

use super::{Normalization, Objective, TrainConfig};
use crate::error::{config_err, shape_err, Result};
use crate::labels::{compute_derivative_labels, DerivativeField};
use crate::pde_data::Trajectory;
use crate::scalar::Real;

/// One trajectory with its (optional) cached derivative labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub traj: Trajectory<f64>,
    pub labels: Option<DerivativeField<f64>>,
}

impl Sample {
    /// Timesteps `n` usable as inputs: state prediction needs `u(t_{n+1})`.
    pub fn eligible_steps(&self, objective: Objective) -> usize {
        match objective {
            Objective::State => self.traj.n_t().saturating_sub(1),
            Objective::Derivative => self.traj.n_t(),
        }
    }

    /// Physical-space target for input frame `n`.
    pub fn target(&self, n: usize, objective: Objective) -> Result<&[f64]> {
        match objective {
            Objective::State => Ok(self.traj.frame(n + 1)),
            Objective::Derivative => self
                .labels
                .as_ref()
                .map(|l| l.dudt.row(n))
                .ok_or_else(|| config_err("derivative prediction requires derivative labels")),
        }
    }
}

/// Train/validation split by whole trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
}

impl TrainingData {
    /// The last `n_val` trajectories form the validation split.
    pub fn split(
        trajectories: Vec<Trajectory<f64>>,
        labels: Option<Vec<DerivativeField<f64>>>,
        n_val: usize,
    ) -> Result<Self> {
        if n_val >= trajectories.len() {
            return Err(config_err(format!(
                "validation split of {n_val} leaves no training data out of {} trajectories",
                trajectories.len()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != trajectories.len() {
                return Err(shape_err("one label field per trajectory required"));
            }
        }
        let mut labels = labels.map(|l| l.into_iter().map(Some).collect::<Vec<_>>());
        let mut samples: Vec<Sample> = trajectories
            .into_iter()
            .enumerate()
            .map(|(i, traj)| Sample {
                traj,
                labels: labels.as_mut().and_then(|l| l[i].take()),
            })
            .collect();
        let val = samples.split_off(samples.len() - n_val);
        Ok(Self { train: samples, val })
    }

    pub fn samples(&self) -> impl Iterator<Item = &Sample> {
        self.train.iter().chain(&self.val)
    }

    /// Applies the label scheme and temporal stride of `cfg`: labels are (re)computed at
    /// the stored resolution when missing or of another scheme, then both fields are
    /// subsampled.
    pub fn prepared(&self, cfg: &TrainConfig) -> Result<Self> {
        let prep = |s: &Sample| -> Result<Sample> {
            let labels = match (&s.labels, cfg.objective) {
                (Some(l), _) if l.scheme == cfg.label_scheme => Some(l.clone()),
                (_, Objective::Derivative) => Some(compute_derivative_labels(&s.traj, cfg.label_scheme)?),
                (_, Objective::State) => None,
            };
            let stride = cfg.temporal_stride;
            Ok(Sample {
                traj: s.traj.subsample(stride),
                labels: labels.map(|l| DerivativeField {
                    dudt: l.dudt.subsample_rows(stride),
                    scheme: l.scheme,
                    source_dt: l.source_dt,
                }),
            })
        };
        Ok(Self {
            train: self.train.iter().map(prep).collect::<Result<_>>()?,
            val: self.val.iter().map(prep).collect::<Result<_>>()?,
        })
    }
}

/// A drawn `(sample, timestep)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchItem {
    pub sample: usize,
    pub n: usize,
}

/// Draws `batch_size` pairs uniformly over all eligible `(sample, timestep)` pairs.
pub fn sample_batch(
    samples: &[Sample],
    batch_size: usize,
    objective: Objective,
    rng: &mut impl Rng,
) -> Result<Vec<BatchItem>> {
    if objective == Objective::Derivative && samples.iter().any(|s| s.labels.is_none()) {
        return Err(config_err("derivative prediction requires derivative labels"));
    }
    let counts: Vec<usize> = samples.iter().map(|s| s.eligible_steps(objective)).collect();
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(config_err("dataset has no eligible timesteps"));
    }
    Ok((0..batch_size)
        .map(|_| {
            let mut k = rng.random_range(0..total);
            let mut sample = 0;
            while k >= counts[sample] {
                k -= counts[sample];
                sample += 1;
            }
            BatchItem { sample, n: k }
        })
        .collect())
}

/// `Σ(pred − target)² / n_x` and its gradient `2(pred − target)/n_x`.
pub fn compute_loss<T: Real>(pred: &[T], target: &[T]) -> Result<(T, Vec<T>)> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(shape_err(format!(
            "prediction has {} values, target {}",
            pred.len(),
            target.len()
        )));
    }
    let inv_n = T::one() / T::from_count(pred.len());
    let two = T::lit(2.0);
    let mut loss = T::zero();
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let r = p - t;
            loss = loss + r * r;
            two * r * inv_n
        })
        .collect();
    Ok((loss * inv_n, grad))
}

/// Global mean and standard deviation of inputs and of targets over the training split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub u_mean: f64,
    pub u_std: f64,
    pub y_mean: f64,
    pub y_std: f64,
}

impl Default for NormStats {
    fn default() -> Self {
        Self::identity()
    }
}

fn mean_std<'a>(values: impl Iterator<Item = &'a [f64]>) -> (f64, f64) {
    let (mut n, mut sum, mut sum_sq) = (0usize, 0.0, 0.0);
    let rows: Vec<&[f64]> = values.collect();
    for r in &rows {
        n += r.len();
        sum += r.iter().sum::<f64>();
    }
    let mean = sum / n.max(1) as f64;
    for r in &rows {
        sum_sq += r.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    }
    let std = (sum_sq / n.max(1) as f64).sqrt();
    // Constant data: keep the transform invertible.
    (mean, if std > 0.0 { std } else { 1.0 })
}

impl NormStats {
    pub fn identity() -> Self {
        Self {
            u_mean: 0.0,
            u_std: 1.0,
            y_mean: 0.0,
            y_std: 1.0,
        }
    }

    /// State targets share the input statistics; derivative targets use label statistics.
    pub fn compute(train: &[Sample], objective: Objective, normalization: Normalization) -> Result<Self> {
        if normalization == Normalization::None {
            return Ok(Self::identity());
        }
        let (u_mean, u_std) = mean_std(train.iter().map(|s| s.traj.u.as_slice()));
        let (y_mean, y_std) = match objective {
            Objective::State => (u_mean, u_std),
            Objective::Derivative => {
                if train.iter().any(|s| s.labels.is_none()) {
                    return Err(config_err("derivative prediction requires derivative labels"));
                }
                mean_std(train.iter().map(|s| s.labels.as_ref().expect("checked").dudt.as_slice()))
            }
        };
        Ok(Self {
            u_mean,
            u_std,
            y_mean,
            y_std,
        })
    }

    pub fn normalize_input<T: Real>(&self, u: &[T]) -> Vec<T> {
        affine(u, 1.0 / self.u_std, -self.u_mean / self.u_std)
    }

    pub fn denormalize_input<T: Real>(&self, u: &[T]) -> Vec<T> {
        affine(u, self.u_std, self.u_mean)
    }

    pub fn normalize_target<T: Real>(&self, y: &[T]) -> Vec<T> {
        affine(y, 1.0 / self.y_std, -self.y_mean / self.y_std)
    }

    pub fn denormalize_target<T: Real>(&self, y: &[T]) -> Vec<T> {
        affine(y, self.y_std, self.y_mean)
    }
}

fn affine<T: Real>(v: &[T], scale: f64, shift: f64) -> Vec<T> {
    let (a, b) = (T::lit(scale), T::lit(shift));
    v.iter().map(|&x| a * x + b).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::Frames;
    use crate::pde_data::{Equation, SpatialGrid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy(n_t: usize, seed: u64) -> Sample {
        let grid = SpatialGrid::new(16, 1.0).unwrap();
        let times: Vec<f64> = (0..n_t).map(|n| n as f64 * 0.1).collect();
        let data: Vec<f64> = (0..n_t * 16).map(|k| (k as f64 * 0.37 + seed as f64).sin()).collect();
        let traj = Trajectory::new(grid, times, Frames::from_vec(n_t, 16, data).unwrap(), Equation::Heat, 0.3, seed).unwrap();
        Sample { traj, labels: None }
    }

    #[test]
    fn loss_closed_forms() {
        let (l, g) = compute_loss(&[1.0; 64], &[1.0; 64]).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
        let (l, g) = compute_loss(&[1.0; 64], &[0.0; 64]).unwrap();
        assert_eq!(l, 1.0);
        assert!(g.iter().all(|&x| x == 2.0 / 64.0));
        assert!(compute_loss(&[1.0; 3], &[1.0; 4]).is_err());
    }

    #[test]
    fn loss_gradient_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p: Vec<f64> = (0..20).map(|_| rng.random()).collect();
        let t: Vec<f64> = (0..20).map(|_| rng.random()).collect();
        let (_, g) = compute_loss(&p, &t).unwrap();
        for j in 0..20 {
            let h = 1e-6;
            let mut a = p.clone();
            a[j] += h;
            let mut b = p.clone();
            b[j] -= h;
            let fd = (compute_loss(&a, &t).unwrap().0 - compute_loss(&b, &t).unwrap().0) / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn state_batches_exclude_last_frame() {
        let samples = vec![toy(2, 0)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = sample_batch(&samples, 200, Objective::State, &mut rng).unwrap();
        assert!(batch.iter().all(|b| b.n == 0));
        assert!(sample_batch(&samples, 1, Objective::Derivative, &mut rng).is_err());
    }

    #[test]
    fn batches_are_reproducible() {
        let samples = vec![toy(9, 0), toy(9, 1)];
        let a = sample_batch(&samples, 5, Objective::State, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = sample_batch(&samples, 5, Objective::State, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn timestep_histogram_is_uniform() {
        let mut s = toy(125, 0);
        s.labels = Some(compute_derivative_labels(&s.traj, crate::labels::LabelScheme::Central2).unwrap());
        let samples = vec![s];
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let draws = 10_000;
        let batch = sample_batch(&samples, draws, Objective::Derivative, &mut rng).unwrap();
        let mut hist = [0usize; 125];
        for b in batch {
            hist[b.n] += 1;
        }
        let expected = draws as f64 / 125.0;
        let chi2: f64 = hist.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 124 degrees of freedom: mean 124, sd √248 ≈ 15.7; 3σ bound.
        assert!(chi2 < 124.0 + 3.0 * 248f64.sqrt(), "chi2 = {chi2}");
        let sigma = (expected * (1.0 - 1.0 / 125.0)).sqrt();
        assert!(hist.iter().all(|&c| (c as f64 - expected).abs() < 4.5 * sigma));
    }

    #[test]
    fn normalization_round_trip() {
        let samples = vec![toy(10, 0), toy(10, 5)];
        let stats = NormStats::compute(&samples, Objective::State, Normalization::Standardize).unwrap();
        assert!(stats.u_std > 0.0);
        let u = samples[0].traj.frame(3);
        let back = stats.denormalize_input(&stats.normalize_input(u));
        for (a, b) in u.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
        let y = stats.denormalize_target(&stats.normalize_target(u));
        for (a, b) in u.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(
            NormStats::compute(&samples, Objective::State, Normalization::None).unwrap(),
            NormStats::identity()
        );
    }

    #[test]
    fn split_keeps_whole_trajectories() {
        let trajs: Vec<_> = (0..5).map(|i| toy(4, i).traj).collect();
        let d = TrainingData::split(trajs, None, 2).unwrap();
        assert_eq!(d.train.len(), 3);
        assert_eq!(d.val.iter().map(|s| s.traj.seed).collect::<Vec<_>>(), vec![3, 4]);
        assert!(TrainingData::split(vec![toy(4, 0).traj], None, 1).is_err());
    }
}
