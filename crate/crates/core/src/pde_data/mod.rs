//! Ground-truth 1D periodic PDE trajectories.
//!
//! Advection and heat are solved exactly in Fourier space; Kuramoto–Sivashinsky
//! is integrated with an ETDRK4 pseudospectral scheme.

mod dataset;
mod initial;
mod ks;
mod spectral;

pub use dataset::{generate_dataset, generate_trajectories, generate_trajectory, DatasetSpec};
pub use initial::{sample_initial_condition, InitialConditionSpec, SineMode, SineSeries};
pub use ks::{solve_ks, KsSolver};
pub use spectral::{solve_advection, solve_heat, spectral_derivative, wavenumber, SpectralTransform};

use crate::error::{config_err, shape_err, Result};
use crate::frames::Frames;
use crate::scalar::Real;

/// Sampling range for the advection speed `c`.
pub const ADVECTION_SPEED_RANGE: (f64, f64) = (0.1, 2.5);
/// Sampling range for the heat diffusivity `ν`.
pub const HEAT_DIFFUSIVITY_RANGE: (f64, f64) = (0.1, 0.8);

/// Uniform periodic grid with node `m` at `x_m = m·dx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    n_x: usize,
    length: f64,
}

impl SpatialGrid {
    pub fn new(n_x: usize, length: f64) -> Result<Self> {
        if n_x < 16 || !n_x.is_power_of_two() {
            return Err(config_err(format!(
                "n_x must be a power of two >= 16, got {n_x}"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(config_err(format!("domain length must be positive, got {length}")));
        }
        Ok(Self { n_x, length })
    }

    #[inline]
    pub fn n_x(&self) -> usize {
        self.n_x
    }

    #[inline]
    pub fn length(&self) -> f64 {
        self.length
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        self.length / self.n_x as f64
    }

    #[inline]
    pub fn x(&self, m: usize) -> f64 {
        m as f64 * self.dx()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_x).map(|m| self.x(m)).collect()
    }
}

impl Default for SpatialGrid {
    fn default() -> Self {
        Self {
            n_x: 64,
            length: 16.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Equation {
    Advection,
    Heat,
    KuramotoSivashinsky,
}

impl Equation {
    pub fn tag(self) -> u8 {
        match self {
            Equation::Advection => 0,
            Equation::Heat => 1,
            Equation::KuramotoSivashinsky => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Equation::Advection),
            1 => Some(Equation::Heat),
            2 => Some(Equation::KuramotoSivashinsky),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Equation::Advection => "advection",
            Equation::Heat => "heat",
            Equation::KuramotoSivashinsky => "ks",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "advection" | "adv" => Some(Equation::Advection),
            "heat" => Some(Equation::Heat),
            "ks" | "kuramoto-sivashinsky" => Some(Equation::KuramotoSivashinsky),
            _ => None,
        }
    }

    /// Range the per-sample coefficient is drawn from; `None` for KS (no coefficient).
    pub fn coefficient_range(self) -> Option<(f64, f64)> {
        match self {
            Equation::Advection => Some(ADVECTION_SPEED_RANGE),
            Equation::Heat => Some(HEAT_DIFFUSIVITY_RANGE),
            Equation::KuramotoSivashinsky => None,
        }
    }
}

/// Time discretization and solver settings for one equation.
///
/// Saved frames sit at `t_n = n·Δt`, `n ∈ [0, n_t)`, with `Δt = t_end / n_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeConfig {
    pub equation: Equation,
    pub t_end: f64,
    pub n_t: usize,
    /// KS only: simulated and discarded before the first saved frame.
    pub burn_in: f64,
    /// KS only: internal ETDRK4 step.
    pub solver_dt: f64,
}

impl PdeConfig {
    pub fn advection() -> Self {
        Self {
            equation: Equation::Advection,
            t_end: 2.0,
            n_t: 125,
            burn_in: 0.0,
            solver_dt: 0.0,
        }
    }

    pub fn heat() -> Self {
        Self {
            equation: Equation::Heat,
            ..Self::advection()
        }
    }

    pub fn ks() -> Self {
        Self {
            equation: Equation::KuramotoSivashinsky,
            t_end: 50.0,
            n_t: 200,
            burn_in: 50.0,
            solver_dt: 0.05,
        }
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.n_t as f64
    }

    pub fn times(&self) -> Vec<f64> {
        let dt = self.dt();
        (0..self.n_t).map(|n| n as f64 * dt).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_t < 2 {
            return Err(config_err(format!("n_t must be >= 2, got {}", self.n_t)));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(config_err(format!("t_end must be positive, got {}", self.t_end)));
        }
        if self.equation == Equation::KuramotoSivashinsky {
            if !(self.burn_in >= 0.0) {
                return Err(config_err("KS burn_in must be >= 0"));
            }
            if !(self.solver_dt > 0.0 && self.solver_dt <= self.dt()) {
                return Err(config_err(format!(
                    "KS solver_dt must lie in (0, {}], got {}",
                    self.dt(),
                    self.solver_dt
                )));
            }
        }
        Ok(())
    }
}

/// A discretized solution `u[n_t][n_x]` with its grid, frame times and coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub grid: SpatialGrid,
    pub times: Vec<f64>,
    pub u: Frames<T>,
    pub equation: Equation,
    /// `c` for advection, `ν` for heat, 0 for KS.
    pub coefficient: f64,
    pub seed: u64,
}

impl<T: Real> Trajectory<T> {
    pub fn new(
        grid: SpatialGrid,
        times: Vec<f64>,
        u: Frames<T>,
        equation: Equation,
        coefficient: f64,
        seed: u64,
    ) -> Result<Self> {
        if u.rows() != times.len() || u.cols() != grid.n_x() {
            return Err(shape_err(format!(
                "field is {}x{}, expected {}x{}",
                u.rows(),
                u.cols(),
                times.len(),
                grid.n_x()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(config_err("frame times must be strictly increasing"));
        }
        Ok(Self {
            grid,
            times,
            u,
            equation,
            coefficient,
            seed,
        })
    }

    #[inline]
    pub fn n_t(&self) -> usize {
        self.times.len()
    }

    #[inline]
    pub fn n_x(&self) -> usize {
        self.grid.n_x()
    }

    #[inline]
    pub fn frame(&self, n: usize) -> &[T] {
        self.u.row(n)
    }

    /// Frame spacing, checked to be uniform within relative `1e-9`.
    pub fn uniform_dt(&self) -> Result<f64> {
        if self.times.len() < 2 {
            return Err(config_err("need at least two frames for a time step"));
        }
        let dt = (self.times[self.times.len() - 1] - self.times[0]) / (self.times.len() - 1) as f64;
        for w in self.times.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(1.0) {
                return Err(config_err("frame times are not uniformly spaced"));
            }
        }
        Ok(dt)
    }

    pub fn cast<U: Real>(&self) -> Trajectory<U> {
        Trajectory {
            grid: self.grid,
            times: self.times.clone(),
            u: self.u.cast(),
            equation: self.equation,
            coefficient: self.coefficient,
            seed: self.seed,
        }
    }

    /// Keeps every `stride`-th frame.
    pub fn subsample(&self, stride: usize) -> Self {
        Self {
            grid: self.grid,
            times: self.times.iter().copied().step_by(stride.max(1)).collect(),
            u: self.u.subsample_rows(stride),
            equation: self.equation,
            coefficient: self.coefficient,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_non_power_of_two() {
        assert!(SpatialGrid::new(100, 16.0).is_err());
        assert!(SpatialGrid::new(8, 16.0).is_err());
        assert!(SpatialGrid::new(64, 0.0).is_err());
        let g = SpatialGrid::new(64, 16.0).unwrap();
        assert!(((g.dx() * g.n_x() as f64 - g.length()) / g.length()).abs() < 1e-12);
        assert_eq!(g.x(3), 3.0 * 0.25);
    }

    #[test]
    fn frame_spacing_matches_dataset_resolutions() {
        assert!((PdeConfig::advection().dt() - 0.016).abs() < 1e-15);
        assert!((PdeConfig::ks().dt() - 0.25).abs() < 1e-15);
        let times = PdeConfig::advection().times();
        assert_eq!(times.len(), 125);
        assert_eq!(times[0], 0.0);
    }

    #[test]
    fn ks_config_validation() {
        let mut c = PdeConfig::ks();
        assert!(c.validate().is_ok());
        c.solver_dt = 0.3;
        assert!(c.validate().is_err());
        c.solver_dt = 0.05;
        c.burn_in = -1.0;
        assert!(c.validate().is_err());
        let mut a = PdeConfig::advection();
        a.n_t = 1;
        assert!(a.validate().is_err());
    }
}
