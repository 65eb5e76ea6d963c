use num_complex::Complex;

use super::{wavenumber, Equation, PdeConfig, SpatialGrid, SpectralTransform, Trajectory};
use crate::error::{config_err, shape_err, Error, Result};
use crate::frames::Frames;
use crate::scalar::Real;

/// Contour points used to evaluate the ETDRK4 φ-functions.
const CONTOUR_POINTS: usize = 32;
/// Any `|u|` above this is treated as blow-up.
const DIVERGENCE_LIMIT: f64 = 1e6;

/// ETDRK4 integrator for `u_t + u u_x + u_xx + u_xxxx = 0` at a fixed step `h`.
///
/// The linear part `L = k² − k⁴` is applied exactly; the nonlinear term
/// `−½ (u²)_x` is evaluated pseudospectrally with 2/3-rule dealiasing.
#[derive(Debug, Clone)]
pub struct KsSolver<T: Real> {
    h: f64,
    fft: SpectralTransform<T>,
    e: Vec<T>,
    e2: Vec<T>,
    q: Vec<T>,
    f1: Vec<T>,
    f2: Vec<T>,
    f3: Vec<T>,
    /// `−½ i k`, zeroed outside the dealiased band.
    g: Vec<Complex<T>>,
}

impl<T: Real> KsSolver<T> {
    pub fn new(grid: &SpatialGrid, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(config_err(format!("KS step must be positive, got {h}")));
        }
        let n = grid.n_x();
        let cutoff = n / 3;
        let roots: Vec<Complex<f64>> = (0..CONTOUR_POINTS)
            .map(|j| {
                Complex::from_polar(
                    1.0,
                    std::f64::consts::PI * (j as f64 + 0.5) / CONTOUR_POINTS as f64,
                )
            })
            .collect();
        let mut e = Vec::with_capacity(n);
        let mut e2 = Vec::with_capacity(n);
        let mut q = Vec::with_capacity(n);
        let mut f1 = Vec::with_capacity(n);
        let mut f2 = Vec::with_capacity(n);
        let mut f3 = Vec::with_capacity(n);
        let mut g = Vec::with_capacity(n);
        for m in 0..n {
            let k = wavenumber(m, n, grid.length());
            let l = k * k - k.powi(4);
            e.push(T::lit((h * l).exp()));
            e2.push(T::lit((h * l / 2.0).exp()));
            // Contour means of the φ-function combinations; real parts by symmetry.
            let (mut sq, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
            for r in &roots {
                let lr = h * l + r;
                let ex = lr.exp();
                let lr3 = lr * lr * lr;
                sq += (((lr / 2.0).exp() - 1.0) / lr).re;
                s1 += ((-4.0 - lr + ex * (4.0 - 3.0 * lr + lr * lr)) / lr3).re;
                s2 += ((2.0 + lr + ex * (-2.0 + lr)) / lr3).re;
                s3 += ((-4.0 - 3.0 * lr - lr * lr + ex * (4.0 - lr)) / lr3).re;
            }
            let mean = CONTOUR_POINTS as f64;
            q.push(T::lit(h * sq / mean));
            f1.push(T::lit(h * s1 / mean));
            f2.push(T::lit(h * s2 / mean));
            f3.push(T::lit(h * s3 / mean));
            let signed = if m <= n / 2 { m } else { n - m };
            let gk = if signed < cutoff && m != n / 2 { -0.5 * k } else { 0.0 };
            g.push(Complex::new(T::zero(), T::lit(gk)));
        }
        Ok(Self {
            h,
            fft: SpectralTransform::new(n),
            e,
            e2,
            q,
            f1,
            f2,
            f3,
            g,
        })
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    fn nonlinear(&self, v: &[Complex<T>]) -> (Vec<Complex<T>>, T) {
        let n = v.len();
        let mut buf = v.to_vec();
        self.fft.inverse_in_place(&mut buf);
        let scale = T::one() / T::from_count(n);
        let mut peak = T::zero();
        for z in buf.iter_mut() {
            let u = z.re * scale;
            if !u.is_finite() {
                peak = T::infinity();
            } else {
                peak = peak.max(u.abs());
            }
            *z = Complex::new(u * u, T::zero());
        }
        self.fft.forward_in_place(&mut buf);
        for (z, g) in buf.iter_mut().zip(&self.g) {
            *z = *z * g;
        }
        (buf, peak)
    }

    /// Advances the spectrum `v` by one step. Returns the peak `|u|` seen at the step start.
    pub fn step(&self, v: &mut [Complex<T>]) -> T {
        let n = v.len();
        let (nv, peak) = self.nonlinear(v);
        let a: Vec<Complex<T>> = (0..n).map(|m| v[m] * self.e2[m] + nv[m] * self.q[m]).collect();
        let (na, _) = self.nonlinear(&a);
        let b: Vec<Complex<T>> = (0..n).map(|m| v[m] * self.e2[m] + na[m] * self.q[m]).collect();
        let (nb, _) = self.nonlinear(&b);
        let two = T::lit(2.0);
        let c: Vec<Complex<T>> = (0..n)
            .map(|m| a[m] * self.e2[m] + (nb[m] * two - nv[m]) * self.q[m])
            .collect();
        let (nc, _) = self.nonlinear(&c);
        for m in 0..n {
            v[m] = v[m] * self.e[m]
                + nv[m] * self.f1[m]
                + (na[m] + nb[m]) * (two * self.f2[m])
                + nc[m] * self.f3[m];
        }
        peak
    }

    pub fn to_spectrum(&self, u: &[T]) -> Vec<Complex<T>> {
        self.fft.forward_real(u)
    }

    pub fn to_physical(&self, v: &[Complex<T>]) -> Vec<T> {
        self.fft.inverse_real(v.to_vec())
    }

    /// Integrates `steps` steps, failing on blow-up. `step_offset` only labels errors.
    pub fn advance(&self, v: &mut [Complex<T>], steps: usize, step_offset: usize) -> Result<()> {
        for s in 0..steps {
            let peak = self.step(v);
            if !peak.is_finite() || peak.as_f64() > DIVERGENCE_LIMIT {
                let step = step_offset + s;
                return Err(Error::SolverDivergence {
                    step,
                    time: step as f64 * self.h,
                });
            }
        }
        let u = self.to_physical(v);
        if u.iter().any(|x| !x.is_finite() || x.abs().as_f64() > DIVERGENCE_LIMIT) {
            let step = step_offset + steps;
            return Err(Error::SolverDivergence {
                step,
                time: step as f64 * self.h,
            });
        }
        Ok(())
    }
}

/// Integrates KS from `u0`, discards `config.burn_in`, then samples `config.n_t` frames
/// spaced `config.dt()` apart with frame times restarting at zero.
pub fn solve_ks<T: Real>(u0: &[T], config: &PdeConfig, grid: &SpatialGrid) -> Result<Trajectory<T>> {
    config.validate()?;
    if u0.len() != grid.n_x() {
        return Err(shape_err(format!(
            "initial field has {} nodes, grid has {}",
            u0.len(),
            grid.n_x()
        )));
    }
    if config.solver_dt > 0.25 {
        return Err(config_err(format!(
            "KS solver_dt {} exceeds the stability bound 0.25",
            config.solver_dt
        )));
    }
    let frame_dt = config.dt();
    let per_frame = (frame_dt / config.solver_dt - 1e-9).ceil().max(1.0) as usize;
    let stepper = KsSolver::<T>::new(grid, frame_dt / per_frame as f64)?;

    let mut v = stepper.to_spectrum(u0);
    let mut steps_done = 0;
    if config.burn_in > 0.0 {
        let burn_steps = (config.burn_in / config.solver_dt - 1e-9).ceil().max(1.0) as usize;
        let burner = KsSolver::<T>::new(grid, config.burn_in / burn_steps as f64)?;
        burner.advance(&mut v, burn_steps, 0)?;
        steps_done = burn_steps;
    }

    let mut u = Frames::zeros(config.n_t, grid.n_x());
    u.row_mut(0).copy_from_slice(&stepper.to_physical(&v));
    for n in 1..config.n_t {
        stepper.advance(&mut v, per_frame, steps_done)?;
        steps_done += per_frame;
        u.row_mut(n).copy_from_slice(&stepper.to_physical(&v));
    }
    Trajectory::new(
        *grid,
        config.times(),
        u,
        Equation::KuramotoSivashinsky,
        0.0,
        0,
    )
}
