use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{compute_loss, sample_batch, NormStats, Objective, Pushforward, Sample, Surrogate, SurrogateMeta, TrainConfig, TrainingData};
use crate::error::{config_err, shape_err, Error, Result};
use crate::integrators::{integrate_step, IntegratorKind, RolloutState};
use crate::scalar::Real;
use crate::surrogate::{adam_update, AdamState, ConditioningPolicy, Model, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Cumulative since training started.
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T: Real> {
    pub surrogate: Surrogate<T>,
    pub log: Vec<EpochLog>,
}

fn to_real<T: Real>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::lit(x)).collect()
}

/// Loss and gradient of one example; `input` and `target` are physical fields.
fn example_grad<T: Real>(
    surrogate: &Surrogate<T>,
    input: &[T],
    t: f64,
    coefficient: f64,
    target: &[f64],
) -> Result<(T, ModelParams<T>)> {
    let meta = &surrogate.meta;
    let x = meta.norm.normalize_input(input);
    let y: Vec<T> = meta.norm.normalize_target(&to_real::<T>(target));
    let (pred, tape) = surrogate.model.forward(&x, &surrogate.conditioning(t, coefficient))?;
    let (loss, grad) = compute_loss(&pred, &y)?;
    Ok((loss, surrogate.model.backward(&tape, &grad)?))
}

fn plain_example<T: Real>(surrogate: &Surrogate<T>, s: &Sample, n: usize) -> Result<(T, ModelParams<T>)> {
    let target = s.target(n, surrogate.meta.objective)?;
    example_grad(surrogate, &to_real::<T>(s.traj.frame(n)), s.traj.times[n], s.traj.coefficient, target)
}

/// How the frozen first step of a pushforward example is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirstStep {
    /// The model's own prediction (integrated with the given integrator for derivative models).
    Model(IntegratorKind),
    /// The ground-truth next frame, i.e. a perfect first step.
    Truth,
}

/// Loss and gradient of one pushforward example starting at frame `n`: the first step is
/// evaluated without a tape, and only the second prediction is differentiated. State models
/// are compared with `u(t_{n+2})`, derivative models with the label at `t_{n+1}`.
/// Returns `None` when the trajectory is too short after `n`.
pub fn pushforward_step<T: Real>(
    surrogate: &Surrogate<T>,
    s: &Sample,
    n: usize,
    first: FirstStep,
) -> Result<Option<(T, ModelParams<T>)>> {
    let objective = surrogate.meta.objective;
    let need = match objective {
        Objective::State => n + 2,
        Objective::Derivative => n + 1,
    };
    if need >= s.traj.n_t() {
        return Ok(None);
    }
    let c = s.traj.coefficient;
    let u_n: Vec<T> = to_real(s.traj.frame(n));
    let dt = s.traj.times[n + 1] - s.traj.times[n];
    let perturbed = match (first, objective) {
        (FirstStep::Truth, _) => to_real(s.traj.frame(n + 1)),
        (FirstStep::Model(_), Objective::State) => surrogate.next_state(&u_n, s.traj.times[n], c)?,
        (FirstStep::Model(kind), Objective::Derivative) => {
            let state = RolloutState::new(u_n, s.traj.times[n]);
            integrate_step(&mut surrogate.source(c), state, dt, kind)?.u
        }
    };
    let target = s.target(n + 1, objective)?;
    example_grad(surrogate, &perturbed, s.traj.times[n + 1], c, target).map(Some)
}

/// Mean one-step loss over a fixed set of validation pairs (four per trajectory).
pub(crate) fn validation_loss<T: Real>(surrogate: &Surrogate<T>, val: &[Sample]) -> Result<f64> {
    let objective = surrogate.meta.objective;
    let pairs: Vec<(usize, usize)> = val
        .iter()
        .enumerate()
        .flat_map(|(i, s)| {
            let e = s.eligible_steps(objective);
            let mut ns: Vec<usize> = (0..4).map(|q| q * e / 4).collect();
            ns.dedup();
            ns.into_iter().map(move |n| (i, n))
        })
        .collect();
    if pairs.is_empty() {
        return Ok(f64::NAN);
    }
    let meta = &surrogate.meta;
    let losses = pairs
        .par_iter()
        .map(|&(i, n)| {
            let s = &val[i];
            let x = meta.norm.normalize_input(&to_real::<T>(s.traj.frame(n)));
            let y = meta.norm.normalize_target(&to_real::<T>(s.target(n, objective)?));
            let pred = surrogate.model.predict(&x, &surrogate.conditioning(s.traj.times[n], s.traj.coefficient))?;
            Ok(compute_loss(&pred, &y)?.0.as_f64())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Trains `model` on `data` under `cfg`. Each epoch draws `⌈n_train / batch_size⌉`
/// batches; per-example gradients are summed in batch order, so results are
/// reproducible regardless of thread count.
pub fn train<T: Real>(cfg: &TrainConfig, data: &TrainingData, model: Model<T>) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let data = data.prepared(cfg)?;
    let first = data
        .train
        .first()
        .ok_or_else(|| config_err("training split is empty"))?;
    if first.traj.n_x() != model.config().n_x {
        return Err(shape_err(format!(
            "model expects {} nodes, data has {}",
            model.config().n_x,
            first.traj.n_x()
        )));
    }
    let dt = first.traj.uniform_dt()?;
    let meta = SurrogateMeta {
        objective: cfg.objective,
        norm: NormStats::compute(&data.train, cfg.objective, cfg.normalization)?,
        policy: ConditioningPolicy {
            time_scale: dt * first.traj.n_t() as f64,
            coefficient_range: first.traj.equation.coefficient_range(),
        },
        dt,
        equation: first.traj.equation,
    };
    let mut surrogate = Surrogate::new(model, meta);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    let mut adam = AdamState::new(surrogate.model.params());
    let n_batches = data.train.len().div_ceil(cfg.batch_size);
    let start = Instant::now();
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate(epoch);
        let push = match cfg.pushforward {
            Pushforward::On { warmup_epochs, integrator } if epoch >= warmup_epochs => Some(integrator),
            _ => None,
        };
        let mut epoch_loss = 0.0;
        let mut epoch_items = 0usize;
        for batch in 0..n_batches {
            let items = sample_batch(&data.train, cfg.batch_size, cfg.objective, &mut rng)?;
            let results = items
                .par_iter()
                .map(|it| {
                    let s = &data.train[it.sample];
                    match push {
                        Some(kind) => pushforward_step(&surrogate, s, it.n, FirstStep::Model(kind)),
                        None => plain_example(&surrogate, s, it.n).map(Some),
                    }
                })
                .collect::<Vec<_>>();
            let mut grads = surrogate.model.params().zeros_like();
            let mut loss = T::zero();
            let mut used = 0usize;
            for r in results {
                match r {
                    Ok(Some((l, g))) => {
                        loss = loss + l;
                        grads.axpy(T::one(), &g);
                        used += 1;
                    }
                    Ok(None) => {}
                    Err(Error::RolloutDivergence { .. }) => return Err(Error::TrainingDivergence { epoch, batch }),
                    Err(e) => return Err(e),
                }
            }
            if used == 0 {
                continue;
            }
            let mean_loss = loss.as_f64() / used as f64;
            if !mean_loss.is_finite() {
                return Err(Error::TrainingDivergence { epoch, batch });
            }
            grads.scale(T::one() / T::from_count(used));
            match adam_update(surrogate.model.params_mut(), &grads, &mut adam, &cfg.adam, lr) {
                Ok(()) => {}
                Err(Error::NonFiniteGradient) => return Err(Error::TrainingDivergence { epoch, batch }),
                Err(e) => return Err(e),
            }
            epoch_loss += mean_loss * used as f64;
            epoch_items += used;
        }
        let val_loss = validation_loss(&surrogate, &data.val)?;
        let entry = EpochLog {
            epoch,
            train_loss: epoch_loss / epoch_items.max(1) as f64,
            val_loss,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        log::debug!(
            "epoch {epoch}: train {:.4e} val {:.4e} ({:.1}s)",
            entry.train_loss,
            entry.val_loss,
            entry.wall_seconds
        );
        log.push(entry);
    }
    Ok(TrainOutcome { surrogate, log })
}
