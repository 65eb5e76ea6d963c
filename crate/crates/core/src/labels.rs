//! Temporal-derivative training labels from saved trajectories.

use crate::error::{config_err, shape_err, Error, Result};
use crate::frames::Frames;
use crate::pde_data::Trajectory;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum LabelScheme {
    /// `(u_{n+1} − u_n)/Δt`; the final frame repeats the last interior value.
    ForwardDiff1,
    /// Second-order central differences with second-order one-sided endpoints.
    Central2,
    /// Five-point fourth-order central stencil with five-point one-sided endpoints.
    Central4,
    /// Richardson extrapolation of two central differences in the interior and
    /// fourth-order one-sided stencils at the two frames nearest each boundary.
    #[default]
    Richardson4WithOneSided,
}

impl LabelScheme {
    pub const ALL: [LabelScheme; 4] = [
        LabelScheme::ForwardDiff1,
        LabelScheme::Central2,
        LabelScheme::Central4,
        LabelScheme::Richardson4WithOneSided,
    ];

    pub fn min_frames(self) -> usize {
        match self {
            LabelScheme::ForwardDiff1 => 2,
            LabelScheme::Central2 => 3,
            LabelScheme::Central4 | LabelScheme::Richardson4WithOneSided => 5,
        }
    }

    pub fn order(self) -> u32 {
        match self {
            LabelScheme::ForwardDiff1 => 1,
            LabelScheme::Central2 => 2,
            LabelScheme::Central4 | LabelScheme::Richardson4WithOneSided => 4,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            LabelScheme::ForwardDiff1 => 0,
            LabelScheme::Central2 => 1,
            LabelScheme::Central4 => 2,
            LabelScheme::Richardson4WithOneSided => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.tag() == tag)
    }

    pub fn name(self) -> &'static str {
        match self {
            LabelScheme::ForwardDiff1 => "forward1",
            LabelScheme::Central2 => "central2",
            LabelScheme::Central4 => "central4",
            LabelScheme::Richardson4WithOneSided => "richardson4",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.name() == s)
    }

    /// Stencil for frame `n` of `n_t` as `(frame index, weight)`; the derivative is
    /// `Σ weight·u[index] / Δt`.
    pub fn stencil(self, n: usize, n_t: usize) -> Vec<(usize, f64)> {
        let last = n_t - 1;
        match self {
            LabelScheme::ForwardDiff1 => {
                let i = n.min(last - 1);
                vec![(i, -1.0), (i + 1, 1.0)]
            }
            LabelScheme::Central2 => {
                if n == 0 {
                    vec![(0, -1.5), (1, 2.0), (2, -0.5)]
                } else if n == last {
                    vec![(last, 1.5), (last - 1, -2.0), (last - 2, 0.5)]
                } else {
                    vec![(n - 1, -0.5), (n + 1, 0.5)]
                }
            }
            LabelScheme::Central4 | LabelScheme::Richardson4WithOneSided => {
                const TWELFTH: f64 = 1.0 / 12.0;
                let one_sided = |origin: usize, sign: f64, w: [f64; 5]| -> Vec<(usize, f64)> {
                    (0..5)
                        .map(|j| {
                            let idx = if sign > 0.0 { origin + j } else { origin - j };
                            (idx, sign * w[j] * TWELFTH)
                        })
                        .collect()
                };
                match n {
                    0 => one_sided(0, 1.0, [-25.0, 48.0, -36.0, 16.0, -3.0]),
                    1 => one_sided(0, 1.0, [-3.0, -10.0, 18.0, -6.0, 1.0]),
                    _ if n == last => one_sided(last, -1.0, [-25.0, 48.0, -36.0, 16.0, -3.0]),
                    _ if n == last - 1 => one_sided(last, -1.0, [-3.0, -10.0, 18.0, -6.0, 1.0]),
                    _ => vec![
                        (n - 2, TWELFTH),
                        (n - 1, -8.0 * TWELFTH),
                        (n + 1, 8.0 * TWELFTH),
                        (n + 2, -TWELFTH),
                    ],
                }
            }
        }
    }

    /// RMS over all `n_t` frames of `√(Σ weight²)`: the expected label noise RMS is
    /// `σ · noise_gain / Δt` for i.i.d. state noise of standard deviation `σ`.
    pub fn noise_gain(self, n_t: usize) -> f64 {
        let mean_sq = (0..n_t)
            .map(|n| self.stencil(n, n_t).iter().map(|(_, w)| w * w).sum::<f64>())
            .sum::<f64>()
            / n_t as f64;
        mean_sq.sqrt()
    }
}

/// `∂u/∂t` estimates aligned frame-for-frame with a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeField<T> {
    pub dudt: Frames<T>,
    pub scheme: LabelScheme,
    pub source_dt: f64,
}

impl<T: Real> DerivativeField<T> {
    pub fn cast<U: Real>(&self) -> DerivativeField<U> {
        DerivativeField {
            dudt: self.dudt.cast(),
            scheme: self.scheme,
            source_dt: self.source_dt,
        }
    }
}

/// Differentiates a frame stack sampled every `dt`.
pub fn differentiate_frames<T: Real>(u: &Frames<T>, dt: f64, scheme: LabelScheme) -> Result<Frames<T>> {
    let n_t = u.rows();
    if n_t < scheme.min_frames() {
        return Err(config_err(format!(
            "{} needs at least {} frames, got {n_t}",
            scheme.name(),
            scheme.min_frames()
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(config_err(format!("time step must be positive, got {dt}")));
    }
    let inv_dt = T::lit(1.0 / dt);
    let mut out = Frames::zeros(n_t, u.cols());
    for n in 0..n_t {
        let interior = n >= 2 && n + 2 < n_t;
        if scheme == LabelScheme::Richardson4WithOneSided && interior {
            // (4·D_h − D_2h)/3 with D_h, D_2h central differences at spacing Δt and 2Δt.
            let (a, b, c, d) = (u.row(n - 2), u.row(n - 1), u.row(n + 1), u.row(n + 2));
            let half = T::lit(0.5);
            let quarter = T::lit(0.25);
            let third = T::lit(1.0 / 3.0);
            let four = T::lit(4.0);
            for (j, o) in out.row_mut(n).iter_mut().enumerate() {
                let d_h = (c[j] - b[j]) * half * inv_dt;
                let d_2h = (d[j] - a[j]) * quarter * inv_dt;
                *o = (four * d_h - d_2h) * third;
            }
            continue;
        }
        let stencil = scheme.stencil(n, n_t);
        let row = out.row_mut(n);
        for (idx, w) in stencil {
            let w = T::lit(w) * inv_dt;
            for (o, &x) in row.iter_mut().zip(u.row(idx)) {
                *o = *o + w * x;
            }
        }
    }
    Ok(out)
}

/// Computes `∂u/∂t` labels for every saved frame of `traj`.
pub fn compute_derivative_labels<T: Real>(
    traj: &Trajectory<T>,
    scheme: LabelScheme,
) -> Result<DerivativeField<T>> {
    if traj.n_t() < scheme.min_frames() {
        return Err(config_err(format!(
            "{} needs at least {} frames, got {}",
            scheme.name(),
            scheme.min_frames(),
            traj.n_t()
        )));
    }
    let dt = traj.uniform_dt()?;
    let dudt = differentiate_frames(&traj.u, dt, scheme)?;
    Ok(DerivativeField {
        dudt,
        scheme,
        source_dt: dt,
    })
}

/// `‖labels − reference‖₂ / ‖reference‖₂` over the whole matrix.
pub fn label_error_report<T: Real>(
    labels: &DerivativeField<T>,
    reference: &DerivativeField<T>,
) -> Result<f64> {
    if !labels.dudt.same_shape(&reference.dudt) {
        return Err(shape_err("label and reference shapes differ"));
    }
    let num: f64 = labels
        .dudt
        .as_slice()
        .iter()
        .zip(reference.dudt.as_slice())
        .map(|(&a, &b)| (a - b).as_f64().powi(2))
        .sum();
    let den: f64 = reference.dudt.as_slice().iter().map(|&b| b.as_f64().powi(2)).sum();
    if den == 0.0 {
        return Err(Error::DivisionGuard("reference labels are identically zero".into()));
    }
    Ok((num / den).sqrt())
}
