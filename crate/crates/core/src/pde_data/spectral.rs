use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{Equation, SpatialGrid, Trajectory};
use crate::error::{config_err, shape_err, Result};
use crate::frames::Frames;
use crate::scalar::Real;

/// Physical wavenumber `2π k_m / L` of FFT bin `m`, with `k_m = m − n` above the Nyquist bin.
pub fn wavenumber(m: usize, n: usize, length: f64) -> f64 {
    let k = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
    2.0 * PI * k / length
}

/// Forward/inverse complex FFT pair of a fixed length.
#[derive(Clone)]
pub struct SpectralTransform<T: Real> {
    n: usize,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Real> std::fmt::Debug for SpectralTransform<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralTransform").field("n", &self.n).finish()
    }
}

impl<T: Real> SpectralTransform<T> {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Unnormalized forward DFT of a real signal.
    pub fn forward_real(&self, u: &[T]) -> Vec<Complex<T>> {
        let mut buf: Vec<Complex<T>> = u.iter().map(|&x| Complex::new(x, T::zero())).collect();
        self.forward.process(&mut buf);
        buf
    }

    pub fn forward_in_place(&self, buf: &mut [Complex<T>]) {
        self.forward.process(buf);
    }

    /// Unnormalized inverse DFT in place.
    pub fn inverse_in_place(&self, buf: &mut [Complex<T>]) {
        self.inverse.process(buf);
    }

    /// Normalized inverse DFT keeping the real part.
    pub fn inverse_real(&self, mut spec: Vec<Complex<T>>) -> Vec<T> {
        self.inverse.process(&mut spec);
        let scale = T::one() / T::from_count(self.n);
        spec.into_iter().map(|z| z.re * scale).collect()
    }
}

fn check_field(u0: &[impl Sized], grid: &SpatialGrid) -> Result<()> {
    if u0.len() != grid.n_x() {
        return Err(shape_err(format!(
            "initial field has {} nodes, grid has {}",
            u0.len(),
            grid.n_x()
        )));
    }
    Ok(())
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(config_err("at least one output time is required"));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(config_err("output times must be finite"));
    }
    Ok(())
}

/// Applies a per-mode multiplier `g(m, t)` to the spectrum of `u0` for each output time.
fn evolve_modes<T: Real>(
    u0: &[T],
    times: &[f64],
    grid: &SpatialGrid,
    multiplier: impl Fn(usize, f64) -> Complex<f64>,
) -> Frames<T> {
    let n = grid.n_x();
    let fft = SpectralTransform::<T>::new(n);
    let u_hat = fft.forward_real(u0);
    let mut out = Frames::zeros(times.len(), n);
    for (i, &t) in times.iter().enumerate() {
        let spec: Vec<Complex<T>> = u_hat
            .iter()
            .enumerate()
            .map(|(m, z)| {
                let g = multiplier(m, t);
                z * Complex::new(T::lit(g.re), T::lit(g.im))
            })
            .collect();
        out.row_mut(i).copy_from_slice(&fft.inverse_real(spec));
    }
    out
}

/// Exact solution of `u_t + c u_x = 0`: each mode is multiplied by `exp(−i k c t)`.
///
/// The Nyquist bin of a real signal is real; it is multiplied by `cos(k c t)`, which is
/// the sampled value of the translated band-limited interpolant.
pub fn solve_advection<T: Real>(
    u0: &[T],
    c: f64,
    times: &[f64],
    grid: &SpatialGrid,
) -> Result<Trajectory<T>> {
    check_field(u0, grid)?;
    check_times(times)?;
    if !c.is_finite() {
        return Err(config_err("advection speed must be finite"));
    }
    let n = grid.n_x();
    let u = evolve_modes(u0, times, grid, |m, t| {
        let k = wavenumber(m, n, grid.length());
        if m == n / 2 {
            Complex::new((k * c * t).cos(), 0.0)
        } else {
            Complex::from_polar(1.0, -k * c * t)
        }
    });
    Trajectory::new(*grid, times.to_vec(), u, Equation::Advection, c, 0)
}

/// Exact solution of `u_t = ν u_xx`: each mode decays by `exp(−ν k² t)`.
pub fn solve_heat<T: Real>(
    u0: &[T],
    nu: f64,
    times: &[f64],
    grid: &SpatialGrid,
) -> Result<Trajectory<T>> {
    check_field(u0, grid)?;
    check_times(times)?;
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(config_err(format!("diffusivity must be positive, got {nu}")));
    }
    let n = grid.n_x();
    let u = evolve_modes(u0, times, grid, |m, t| {
        let k = wavenumber(m, n, grid.length());
        Complex::new((-nu * k * k * t).exp(), 0.0)
    });
    Trajectory::new(*grid, times.to_vec(), u, Equation::Heat, nu, 0)
}

/// `∂^order u / ∂x^order` by spectral differentiation; the Nyquist bin is dropped for odd orders.
pub fn spectral_derivative<T: Real>(u: &[T], order: u32, grid: &SpatialGrid) -> Vec<T> {
    let n = grid.n_x();
    let fft = SpectralTransform::<T>::new(n);
    let spec: Vec<Complex<T>> = fft
        .forward_real(u)
        .into_iter()
        .enumerate()
        .map(|(m, z)| {
            if order % 2 == 1 && m == n / 2 {
                return Complex::new(T::zero(), T::zero());
            }
            let ik = Complex::new(0.0, wavenumber(m, n, grid.length())).powu(order);
            z * Complex::new(T::lit(ik.re), T::lit(ik.im))
        })
        .collect();
    fft.inverse_real(spec)
}
