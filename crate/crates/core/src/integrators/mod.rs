//! Time integrators driven by predicted or oracle derivatives, and autoregressive rollouts.

use std::time::Instant;

use crate::error::{config_err, Error, Result};
use crate::frames::Frames;
use crate::scalar::{max_abs, Real};

/// `‖u‖_∞` beyond which a rollout is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IntegratorKind {
    ForwardEuler,
    AdamsBashforth2,
    Heun,
    Rk4,
}

impl IntegratorKind {
    pub const ALL: [IntegratorKind; 4] = [
        IntegratorKind::ForwardEuler,
        IntegratorKind::AdamsBashforth2,
        IntegratorKind::Heun,
        IntegratorKind::Rk4,
    ];

    /// Derivative evaluations per step (AB2 reuses its cached previous derivative).
    pub fn evaluations_per_step(self) -> usize {
        match self {
            IntegratorKind::ForwardEuler | IntegratorKind::AdamsBashforth2 => 1,
            IntegratorKind::Heun => 2,
            IntegratorKind::Rk4 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            IntegratorKind::ForwardEuler => "fe",
            IntegratorKind::AdamsBashforth2 => "ab2",
            IntegratorKind::Heun => "heun",
            IntegratorKind::Rk4 => "rk4",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fe" | "euler" | "forward-euler" => Some(IntegratorKind::ForwardEuler),
            "ab2" | "adams" | "adams-bashforth" => Some(IntegratorKind::AdamsBashforth2),
            "heun" => Some(IntegratorKind::Heun),
            "rk4" => Some(IntegratorKind::Rk4),
            _ => None,
        }
    }
}

/// Anything that returns `∂u/∂t` at `(u, t)`.
pub trait DerivativeSource<T> {
    fn derivative(&mut self, u: &[T], t: f64) -> Result<Vec<T>>;
}

/// Adapts a closure into a [`DerivativeSource`].
pub struct FnSource<F>(pub F);

impl<T, F: FnMut(&[T], f64) -> Result<Vec<T>>> DerivativeSource<T> for FnSource<F> {
    fn derivative(&mut self, u: &[T], t: f64) -> Result<Vec<T>> {
        (self.0)(u, t)
    }
}

/// Numerical oracle: returns stored derivatives at the query time, ignoring `u`.
///
/// Queries must coincide with stored frame times to `1e-9` unless interpolation is
/// enabled, in which case off-grid times (RK4 and Heun stages) are linearly
/// interpolated between neighbouring frames and counted.
pub struct OracleSource<'a, T> {
    times: &'a [f64],
    dudt: &'a Frames<T>,
    interpolate: bool,
    interpolated: usize,
}

impl<'a, T: Real> OracleSource<'a, T> {
    pub fn new(times: &'a [f64], dudt: &'a Frames<T>, interpolate: bool) -> Result<Self> {
        if times.len() != dudt.rows() || times.len() < 2 {
            return Err(config_err("oracle needs one derivative frame per time, at least two"));
        }
        Ok(Self {
            times,
            dudt,
            interpolate,
            interpolated: 0,
        })
    }

    /// Number of off-grid lookups answered by interpolation.
    pub fn interpolated_lookups(&self) -> usize {
        self.interpolated
    }
}

impl<T: Real> DerivativeSource<T> for OracleSource<'_, T> {
    fn derivative(&mut self, _u: &[T], t: f64) -> Result<Vec<T>> {
        const TOL: f64 = 1e-9;
        let last = self.times.len() - 1;
        if t < self.times[0] - TOL || t > self.times[last] + TOL {
            return Err(Error::Input(format!(
                "oracle query t = {t} outside stored range [{}, {}]",
                self.times[0], self.times[last]
            )));
        }
        let hi = self.times.partition_point(|&s| s < t).min(last);
        for idx in [hi.saturating_sub(1), hi] {
            if (self.times[idx] - t).abs() <= TOL {
                return Ok(self.dudt.row(idx).to_vec());
            }
        }
        if !self.interpolate {
            return Err(Error::Input(format!("oracle query t = {t} does not coincide with a stored frame")));
        }
        let lo = hi - 1;
        let w = T::lit((t - self.times[lo]) / (self.times[hi] - self.times[lo]));
        self.interpolated += 1;
        Ok(self
            .dudt
            .row(lo)
            .iter()
            .zip(self.dudt.row(hi))
            .map(|(&a, &b)| a + w * (b - a))
            .collect())
    }
}

/// Integrator state between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutState<T> {
    pub u: Vec<T>,
    pub t: f64,
    /// `f(u_{n−1}, t_{n−1})`, kept only by Adams–Bashforth; absent at step 0.
    pub cache: Option<Vec<T>>,
    pub step: usize,
    pub evaluations: usize,
}

impl<T: Real> RolloutState<T> {
    pub fn new(u0: Vec<T>, t0: f64) -> Self {
        Self {
            u: u0,
            t: t0,
            cache: None,
            step: 0,
            evaluations: 0,
        }
    }
}

fn axpy<T: Real>(u: &[T], h: T, k: &[T]) -> Vec<T> {
    u.iter().zip(k).map(|(&a, &b)| a + h * b).collect()
}

fn eval<T: Real>(src: &mut impl DerivativeSource<T>, state: &mut RolloutState<T>, u: &[T], t: f64) -> Result<Vec<T>> {
    state.evaluations += 1;
    let f = src.derivative(u, t)?;
    if f.len() != u.len() {
        return Err(Error::Shape(format!(
            "derivative source returned {} values for a {}-node field",
            f.len(),
            u.len()
        )));
    }
    Ok(f)
}

/// Advances `state` by one step of `kind`.
pub fn integrate_step<T: Real>(
    src: &mut impl DerivativeSource<T>,
    mut state: RolloutState<T>,
    dt: f64,
    kind: IntegratorKind,
) -> Result<RolloutState<T>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(config_err(format!("time step must be positive, got {dt}")));
    }
    let h = T::lit(dt);
    let u = std::mem::take(&mut state.u);
    let t = state.t;
    let next = match kind {
        IntegratorKind::ForwardEuler => {
            let f = eval(src, &mut state, &u, t)?;
            axpy(&u, h, &f)
        }
        IntegratorKind::AdamsBashforth2 => {
            let f = eval(src, &mut state, &u, t)?;
            let next = match &state.cache {
                None => axpy(&u, h, &f),
                Some(prev) => {
                    let a = T::lit(1.5 * dt);
                    let b = T::lit(0.5 * dt);
                    u.iter()
                        .zip(&f)
                        .zip(prev)
                        .map(|((&x, &fn_), &fp)| x + a * fn_ - b * fp)
                        .collect()
                }
            };
            state.cache = Some(f);
            next
        }
        IntegratorKind::Heun => {
            let k1 = eval(src, &mut state, &u, t)?;
            let predictor = axpy(&u, h, &k1);
            let k2 = eval(src, &mut state, &predictor, t + dt)?;
            let half = T::lit(0.5 * dt);
            u.iter()
                .zip(k1.iter().zip(&k2))
                .map(|(&x, (&a, &b))| x + half * (a + b))
                .collect()
        }
        IntegratorKind::Rk4 => {
            let half = T::lit(0.5 * dt);
            let k1 = eval(src, &mut state, &u, t)?;
            let k2 = eval(src, &mut state, &axpy(&u, half, &k1), t + 0.5 * dt)?;
            let k3 = eval(src, &mut state, &axpy(&u, half, &k2), t + 0.5 * dt)?;
            let k4 = eval(src, &mut state, &axpy(&u, h, &k3), t + dt)?;
            let sixth = T::lit(dt / 6.0);
            let two = T::lit(2.0);
            (0..u.len())
                .map(|j| u[j] + sixth * (k1[j] + two * k2[j] + two * k3[j] + k4[j]))
                .collect()
        }
    };
    state.step += 1;
    if next.iter().any(|x: &T| !x.is_finite()) {
        return Err(Error::RolloutDivergence { step: state.step });
    }
    state.u = next;
    state.t = t + dt;
    Ok(state)
}

/// Settings of one rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutOptions {
    pub dt: f64,
    pub n_steps: usize,
    /// Record every `keep_every`-th step; 2 with a halved `dt` yields native-resolution frames.
    pub keep_every: usize,
    pub t0: f64,
}

impl RolloutOptions {
    pub fn new(dt: f64, n_steps: usize) -> Self {
        Self {
            dt,
            n_steps,
            keep_every: 1,
            t0: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(config_err("n_steps must be >= 1"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(config_err(format!("time step must be positive, got {}", self.dt)));
        }
        if self.keep_every == 0 || !self.n_steps.is_multiple_of(self.keep_every) {
            return Err(config_err("keep_every must divide n_steps"));
        }
        Ok(())
    }
}

/// A predicted trajectory. Frame 0 is the given initial condition. On divergence the
/// frames recorded so far are kept and `diverged_at` holds the failing step.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout<T> {
    pub frames: Frames<T>,
    pub times: Vec<f64>,
    pub evaluations: usize,
    pub wall_seconds: f64,
    pub diverged_at: Option<usize>,
}

impl<T: Real> Rollout<T> {
    pub fn is_complete(&self) -> bool {
        self.diverged_at.is_none()
    }
}

struct Recorder<T> {
    rows: Vec<Vec<T>>,
    times: Vec<f64>,
}

impl<T: Real> Recorder<T> {
    fn finish(self, n_x: usize, evaluations: usize, start: Instant, diverged_at: Option<usize>) -> Rollout<T> {
        let data: Vec<T> = self.rows.into_iter().flatten().collect();
        let rows = data.len() / n_x.max(1);
        Rollout {
            frames: Frames::from_vec(rows, n_x, data).expect("rows have equal length"),
            times: self.times,
            evaluations,
            wall_seconds: start.elapsed().as_secs_f64(),
            diverged_at,
        }
    }
}

fn exceeds_limit<T: Real>(u: &[T]) -> bool {
    max_abs(u).as_f64() > DIVERGENCE_LIMIT
}

/// Integrates `∂u/∂t = src(u, t)` from `u0` with `kind`.
pub fn rollout_derivative<T: Real>(
    src: &mut impl DerivativeSource<T>,
    u0: &[T],
    opts: RolloutOptions,
    kind: IntegratorKind,
) -> Result<Rollout<T>> {
    opts.validate()?;
    let start = Instant::now();
    let n_x = u0.len();
    let mut rec = Recorder {
        rows: vec![u0.to_vec()],
        times: vec![opts.t0],
    };
    let mut state = RolloutState::new(u0.to_vec(), opts.t0);
    for step in 1..=opts.n_steps {
        let evaluations = state.evaluations;
        state = match integrate_step(src, state, opts.dt, kind) {
            Ok(s) => s,
            Err(Error::RolloutDivergence { .. }) => {
                return Ok(rec.finish(n_x, evaluations + kind.evaluations_per_step(), start, Some(step)));
            }
            Err(e) => return Err(e),
        };
        // Exact frame times, free of accumulated rounding.
        state.t = opts.t0 + step as f64 * opts.dt;
        if exceeds_limit(&state.u) {
            return Ok(rec.finish(n_x, state.evaluations, start, Some(step)));
        }
        if step % opts.keep_every == 0 {
            rec.rows.push(state.u.clone());
            rec.times.push(state.t);
        }
    }
    Ok(rec.finish(n_x, state.evaluations, start, None))
}

/// Autoregressive state rollout `u_{k+1} = next(u_k, t_k)`.
pub fn rollout_state<T: Real>(
    mut next: impl FnMut(&[T], f64) -> Result<Vec<T>>,
    u0: &[T],
    opts: RolloutOptions,
) -> Result<Rollout<T>> {
    opts.validate()?;
    let start = Instant::now();
    let n_x = u0.len();
    let mut rec = Recorder {
        rows: vec![u0.to_vec()],
        times: vec![opts.t0],
    };
    let mut u = u0.to_vec();
    for step in 1..=opts.n_steps {
        let t = opts.t0 + (step - 1) as f64 * opts.dt;
        u = next(&u, t)?;
        if u.len() != n_x {
            return Err(Error::Shape("state model changed the field length".into()));
        }
        if u.iter().any(|x| !x.is_finite()) || exceeds_limit(&u) {
            return Ok(rec.finish(n_x, step, start, Some(step)));
        }
        if step % opts.keep_every == 0 {
            rec.rows.push(u.clone());
            rec.times.push(opts.t0 + step as f64 * opts.dt);
        }
    }
    Ok(rec.finish(n_x, opts.n_steps, start, None))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay() -> FnSource<impl FnMut(&[f64], f64) -> Result<Vec<f64>>> {
        FnSource(|u: &[f64], _t: f64| Ok(u.iter().map(|x| -x).collect()))
    }

    fn one_step(kind: IntegratorKind) -> f64 {
        integrate_step(&mut decay(), RolloutState::new(vec![1.0], 0.0), 0.1, kind).unwrap().u[0]
    }

    #[test]
    fn hand_evaluated_single_steps() {
        assert!((one_step(IntegratorKind::ForwardEuler) - 0.9).abs() < 1e-15);
        assert!((one_step(IntegratorKind::Heun) - 0.905).abs() < 1e-15);
        assert!((one_step(IntegratorKind::Rk4) - 0.904_837_5).abs() < 1e-15);
        assert!((one_step(IntegratorKind::AdamsBashforth2) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn adams_second_step_uses_cache() {
        let mut src = decay();
        let s1 = integrate_step(&mut src, RolloutState::new(vec![1.0], 0.0), 0.1, IntegratorKind::AdamsBashforth2).unwrap();
        assert_eq!(s1.cache, Some(vec![-1.0]));
        let s2 = integrate_step(&mut src, s1, 0.1, IntegratorKind::AdamsBashforth2).unwrap();
        let (f0, f1, u1) = (-1.0, -0.9, 0.9);
        assert!((s2.u[0] - (u1 + 0.15 * f1 - 0.05 * f0)).abs() < 1e-15);
        assert_eq!(s2.evaluations, 2);
    }

    #[test]
    fn zero_dynamics_leave_field_unchanged() {
        for kind in IntegratorKind::ALL {
            let mut src = FnSource(|u: &[f64], _| Ok(vec![0.0; u.len()]));
            let r = rollout_derivative(&mut src, &[1.0, -2.0, 3.0], RolloutOptions::new(0.3, 5), kind).unwrap();
            assert!(r.frames.iter_rows().all(|row| row == [1.0, -2.0, 3.0]));
            assert_eq!(r.evaluations, 5 * kind.evaluations_per_step());
        }
    }

    #[test]
    fn rk4_stage_times() {
        let mut seen = Vec::new();
        let mut src = FnSource(|u: &[f64], t: f64| {
            seen.push(t);
            Ok(vec![0.0; u.len()])
        });
        integrate_step(&mut src, RolloutState::new(vec![0.0], 1.0), 0.5, IntegratorKind::Rk4).unwrap();
        assert_eq!(seen, vec![1.0, 1.25, 1.25, 1.5]);
    }

    #[test]
    fn half_step_rollout_keeps_native_times() {
        let dt = 0.016;
        let native = rollout_derivative(&mut decay(), &[1.0], RolloutOptions::new(dt, 124), IntegratorKind::Rk4).unwrap();
        let opts = RolloutOptions {
            keep_every: 2,
            ..RolloutOptions::new(dt / 2.0, 248)
        };
        let fine = rollout_derivative(&mut decay(), &[1.0], opts, IntegratorKind::Rk4).unwrap();
        assert_eq!(native.times, fine.times);
        assert_eq!(fine.frames.rows(), 125);
        assert_eq!(fine.evaluations, 248 * 4);
    }

    #[test]
    fn divergence_reports_partial_rollout() {
        let mut src = FnSource(|u: &[f64], _| Ok(u.iter().map(|x| 10.0 * x).collect()));
        let r = rollout_derivative(&mut src, &[1.0], RolloutOptions::new(1.0, 50), IntegratorKind::ForwardEuler).unwrap();
        // 11^6 > 1e6 first at step 6.
        assert_eq!(r.diverged_at, Some(6));
        assert_eq!(r.frames.rows(), 6);
        let mut nan = FnSource(|_: &[f64], _| Ok(vec![f64::NAN]));
        let r = rollout_derivative(&mut nan, &[1.0], RolloutOptions::new(1.0, 3), IntegratorKind::Heun).unwrap();
        assert_eq!(r.diverged_at, Some(1));
        assert!(matches!(
            integrate_step(&mut FnSource(|_: &[f64], _| Ok(vec![f64::INFINITY])), RolloutState::new(vec![0.0], 0.0), 1.0, IntegratorKind::ForwardEuler),
            Err(Error::RolloutDivergence { step: 1 })
        ));
    }

    #[test]
    fn oracle_lookup_and_interpolation() {
        let times = [0.0, 0.5, 1.0];
        let dudt = Frames::from_rows(&[[0.0], [1.0], [4.0]]).unwrap();
        let mut strict = OracleSource::new(&times, &dudt, false).unwrap();
        assert_eq!(strict.derivative(&[9.0], 0.5 + 1e-12).unwrap(), vec![1.0]);
        assert!(strict.derivative(&[9.0], 0.25).is_err());
        assert!(strict.derivative(&[9.0], 1.5).is_err());
        let mut lin = OracleSource::new(&times, &dudt, true).unwrap();
        assert_eq!(lin.derivative(&[0.0], 0.75).unwrap(), vec![2.5]);
        assert_eq!(lin.interpolated_lookups(), 1);
    }

    #[test]
    fn identity_state_model_freezes_initial_condition() {
        let r = rollout_state(|u: &[f64], _| Ok(u.to_vec()), &[0.5, 0.25], RolloutOptions::new(0.1, 7)).unwrap();
        assert_eq!(r.frames.rows(), 8);
        assert!(r.frames.iter_rows().all(|row| row == [0.5, 0.25]));
        assert_eq!(r.evaluations, 7);
    }
}
