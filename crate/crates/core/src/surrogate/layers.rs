//! Layer kernels and their adjoints. Activations are channel-major `[channels × n_x]`.

use num_complex::Complex;

use super::Activation;
use crate::error::{config_err, shape_err, Result};
use crate::pde_data::SpectralTransform;
use crate::scalar::Real;

const GELU_CUBIC: f64 = 0.044_715;

/// tanh-approximated GELU.
#[inline]
pub fn gelu<T: Real>(z: T) -> T {
    let s = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let half = T::lit(0.5);
    half * z * (T::one() + (s * (z + T::lit(GELU_CUBIC) * z * z * z)).tanh())
}

#[inline]
pub fn gelu_grad<T: Real>(z: T) -> T {
    let s = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let half = T::lit(0.5);
    let c = T::lit(GELU_CUBIC);
    let th = (s * (z + c * z * z * z)).tanh();
    half * (T::one() + th) + half * z * (T::one() - th * th) * s * (T::one() + T::lit(3.0) * c * z * z)
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, z: T) -> T {
        match self {
            Activation::Gelu => gelu(z),
            Activation::Identity => z,
        }
    }

    #[inline]
    pub fn grad<T: Real>(self, z: T) -> T {
        match self {
            Activation::Gelu => gelu_grad(z),
            Activation::Identity => T::one(),
        }
    }
}

/// `y[o][x] = Σ_i W[o][i] v[i][x] + b[o]` with `W` stored `[out × in]`.
pub fn channel_linear<T: Real>(w: &[T], b: &[T], v: &[T], c_in: usize, c_out: usize, n: usize) -> Vec<T> {
    let mut y = vec![T::zero(); c_out * n];
    for o in 0..c_out {
        let yo = &mut y[o * n..(o + 1) * n];
        yo.fill(b[o]);
        for i in 0..c_in {
            let wi = w[o * c_in + i];
            for (acc, &vi) in yo.iter_mut().zip(&v[i * n..(i + 1) * n]) {
                *acc = *acc + wi * vi;
            }
        }
    }
    y
}

/// Adjoint of [`channel_linear`]: accumulates into `dw`, `db` and `dv`.
#[allow(clippy::too_many_arguments)]
pub fn channel_linear_backward<T: Real>(
    w: &[T],
    v: &[T],
    gy: &[T],
    c_in: usize,
    c_out: usize,
    n: usize,
    dw: &mut [T],
    db: &mut [T],
    dv: &mut [T],
) {
    for o in 0..c_out {
        let go = &gy[o * n..(o + 1) * n];
        db[o] = db[o] + go.iter().copied().sum::<T>();
        for i in 0..c_in {
            let vi = &v[i * n..(i + 1) * n];
            let mut acc = T::zero();
            for (&g, &x) in go.iter().zip(vi) {
                acc = acc + g * x;
            }
            dw[o * c_in + i] = dw[o * c_in + i] + acc;
            let wi = w[o * c_in + i];
            for (d, &g) in dv[i * n..(i + 1) * n].iter_mut().zip(go) {
                *d = *d + wi * g;
            }
        }
    }
}

/// Width-3 periodic convolution, kernel stored `[out × in × 3]` with taps at `x−1, x, x+1`.
pub fn periodic_conv3<T: Real>(k: &[T], b: &[T], v: &[T], c: usize, n: usize) -> Vec<T> {
    let mut y = vec![T::zero(); c * n];
    for o in 0..c {
        let yo = &mut y[o * n..(o + 1) * n];
        yo.fill(b[o]);
        for i in 0..c {
            let vi = &v[i * n..(i + 1) * n];
            let base = (o * c + i) * 3;
            let (k0, k1, k2) = (k[base], k[base + 1], k[base + 2]);
            for x in 0..n {
                let left = vi[(x + n - 1) % n];
                let right = vi[(x + 1) % n];
                yo[x] = yo[x] + k0 * left + k1 * vi[x] + k2 * right;
            }
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
pub fn periodic_conv3_backward<T: Real>(
    k: &[T],
    v: &[T],
    gy: &[T],
    c: usize,
    n: usize,
    dk: &mut [T],
    db: &mut [T],
    dv: &mut [T],
) {
    for o in 0..c {
        let go = &gy[o * n..(o + 1) * n];
        db[o] = db[o] + go.iter().copied().sum::<T>();
        for i in 0..c {
            let vi = &v[i * n..(i + 1) * n];
            let base = (o * c + i) * 3;
            let (mut a0, mut a1, mut a2) = (T::zero(), T::zero(), T::zero());
            for x in 0..n {
                let g = go[x];
                a0 = a0 + g * vi[(x + n - 1) % n];
                a1 = a1 + g * vi[x];
                a2 = a2 + g * vi[(x + 1) % n];
            }
            dk[base] = dk[base] + a0;
            dk[base + 1] = dk[base + 1] + a1;
            dk[base + 2] = dk[base + 2] + a2;
            let (k0, k1, k2) = (k[base], k[base + 1], k[base + 2]);
            let dvi = &mut dv[i * n..(i + 1) * n];
            for x in 0..n {
                let g = go[x];
                dvi[(x + n - 1) % n] = dvi[(x + n - 1) % n] + k0 * g;
                dvi[x] = dvi[x] + k1 * g;
                dvi[(x + 1) % n] = dvi[(x + 1) % n] + k2 * g;
            }
        }
    }
}

/// Spectra of each channel truncated to the lowest `modes` bins: `[channels × modes]`.
pub fn truncated_spectra<T: Real>(
    fft: &SpectralTransform<T>,
    v: &[T],
    channels: usize,
    modes: usize,
) -> Vec<Complex<T>> {
    let n = fft.len();
    let mut out = Vec::with_capacity(channels * modes);
    let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
    for i in 0..channels {
        for (z, &x) in buf.iter_mut().zip(&v[i * n..(i + 1) * n]) {
            *z = Complex::new(x, T::zero());
        }
        fft.forward_in_place(&mut buf);
        out.extend_from_slice(&buf[..modes]);
    }
    out
}

#[inline]
fn weight_at<T: Real>(w: &[T], o: usize, i: usize, m: usize, channels: usize, modes: usize) -> Complex<T> {
    let idx = ((o * channels + i) * modes + m) * 2;
    Complex::new(w[idx], w[idx + 1])
}

/// Real signal whose non-negative spectrum is `half` (bins `< modes`), all other
/// positive bins zero, Nyquist excluded; `Im` of bin 0 is ignored.
fn synthesize_real<T: Real>(fft: &SpectralTransform<T>, half: &[Complex<T>], buf: &mut [Complex<T>]) -> Vec<T> {
    let n = fft.len();
    buf.fill(Complex::new(T::zero(), T::zero()));
    for (m, z) in half.iter().enumerate() {
        if m == 0 {
            buf[0] = Complex::new(z.re, T::zero());
        } else {
            buf[m] = *z;
            buf[n - m] = z.conj();
        }
    }
    fft.inverse_in_place(buf);
    let scale = T::one() / T::from_count(n);
    buf.iter().map(|z| z.re * scale).collect()
}

/// Mixes the lowest `modes` Fourier coefficients across channels with complex weights
/// `[channels × channels × modes × (re, im)]` and returns the real inverse transform.
///
/// Only bins `0..modes` are kept; with `modes = n_x/2` the Nyquist bin is still dropped.
pub fn spectral_conv_1d<T: Real>(
    fft: &SpectralTransform<T>,
    v: &[T],
    weights: &[T],
    channels: usize,
    modes: usize,
) -> Result<Vec<T>> {
    let n = fft.len();
    if modes == 0 || modes > n / 2 {
        return Err(config_err(format!("modes must lie in 1..={}, got {modes}", n / 2)));
    }
    if v.len() != channels * n || weights.len() != channels * channels * modes * 2 {
        return Err(shape_err("spectral convolution operand sizes disagree"));
    }
    let spectra = truncated_spectra(fft, v, channels, modes);
    Ok(spectral_conv_from_spectra(fft, &spectra, weights, channels, modes))
}

pub(crate) fn spectral_conv_from_spectra<T: Real>(
    fft: &SpectralTransform<T>,
    spectra: &[Complex<T>],
    weights: &[T],
    channels: usize,
    modes: usize,
) -> Vec<T> {
    let n = fft.len();
    let mut out = Vec::with_capacity(channels * n);
    let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
    let mut z = vec![Complex::new(T::zero(), T::zero()); modes];
    for o in 0..channels {
        z.fill(Complex::new(T::zero(), T::zero()));
        for i in 0..channels {
            let vi = &spectra[i * modes..(i + 1) * modes];
            for m in 0..modes {
                z[m] = z[m] + weight_at(weights, o, i, m, channels, modes) * vi[m];
            }
        }
        out.extend(synthesize_real(fft, &z, &mut buf));
    }
    out
}

/// Adjoint of the spectral convolution. `spectra` are the forward input spectra.
#[allow(clippy::too_many_arguments)]
pub fn spectral_conv_backward<T: Real>(
    fft: &SpectralTransform<T>,
    spectra: &[Complex<T>],
    weights: &[T],
    gy: &[T],
    channels: usize,
    modes: usize,
    dw: &mut [T],
    dv: &mut [T],
) {
    let n = fft.len();
    let zero = Complex::new(T::zero(), T::zero());
    let inv_n = T::one() / T::from_count(n);
    let two = T::lit(2.0);
    // dL/dRe Z + i dL/dIm Z = (w_m / n) · FFT(gy)[m], w_0 = 1, w_m = 2 otherwise.
    let g_z = {
        let raw = truncated_spectra(fft, gy, channels, modes);
        raw.into_iter()
            .enumerate()
            .map(|(idx, z)| if idx % modes == 0 { z * inv_n } else { z * (two * inv_n) })
            .collect::<Vec<_>>()
    };
    let mut g_v = vec![zero; channels * modes];
    for o in 0..channels {
        let go = &g_z[o * modes..(o + 1) * modes];
        for i in 0..channels {
            let vi = &spectra[i * modes..(i + 1) * modes];
            for m in 0..modes {
                let idx = ((o * channels + i) * modes + m) * 2;
                let gw = go[m] * vi[m].conj();
                dw[idx] = dw[idx] + gw.re;
                dw[idx + 1] = dw[idx + 1] + gw.im;
                g_v[i * modes + m] = g_v[i * modes + m] + go[m] * weight_at(weights, o, i, m, channels, modes).conj();
            }
        }
    }
    // dL/dv[x] = Re Σ_{m<modes} G_V[m] e^{+iθ}: an unnormalized one-sided inverse DFT.
    let mut buf = vec![zero; n];
    for i in 0..channels {
        buf.fill(zero);
        buf[..modes].copy_from_slice(&g_v[i * modes..(i + 1) * modes]);
        fft.inverse_in_place(&mut buf);
        for (d, z) in dv[i * n..(i + 1) * n].iter_mut().zip(&buf) {
            *d = *d + z.re;
        }
    }
}

/// Parameters of the conditioning map `ψ: R^d → R^{2d}` (one GELU hidden layer).
#[derive(Debug, Clone, Copy)]
pub struct PsiParams<'a, T> {
    pub fc1_w: &'a [T],
    pub fc1_b: &'a [T],
    pub fc2_w: &'a [T],
    pub fc2_b: &'a [T],
}

/// Intermediate values of one `ψ` evaluation.
#[derive(Debug, Clone)]
pub struct PsiTrace<T> {
    pub pre: Vec<T>,
    pub hidden: Vec<T>,
    /// `[α; β]`, length `2d`.
    pub out: Vec<T>,
}

pub fn psi_forward<T: Real>(p: PsiParams<'_, T>, e: &[T]) -> Result<PsiTrace<T>> {
    let d = e.len();
    if p.fc1_w.len() != d * d || p.fc1_b.len() != d || p.fc2_w.len() != 2 * d * d || p.fc2_b.len() != 2 * d {
        return Err(shape_err(format!("conditioning map does not accept a {d}-dim embedding")));
    }
    let pre: Vec<T> = (0..d)
        .map(|k| {
            p.fc1_b[k]
                + p.fc1_w[k * d..(k + 1) * d]
                    .iter()
                    .zip(e)
                    .map(|(&w, &x)| w * x)
                    .sum::<T>()
        })
        .collect();
    let hidden: Vec<T> = pre.iter().map(|&z| gelu(z)).collect();
    let out: Vec<T> = (0..2 * d)
        .map(|j| {
            p.fc2_b[j]
                + p.fc2_w[j * d..(j + 1) * d]
                    .iter()
                    .zip(&hidden)
                    .map(|(&w, &h)| w * h)
                    .sum::<T>()
        })
        .collect();
    Ok(PsiTrace { pre, hidden, out })
}

/// Accumulates `ψ` parameter gradients and the embedding gradient `d_e` from `d_out = [dα; dβ]`.
#[allow(clippy::too_many_arguments)]
pub fn psi_backward<T: Real>(
    p: PsiParams<'_, T>,
    e: &[T],
    trace: &PsiTrace<T>,
    d_out: &[T],
    d_fc1_w: &mut [T],
    d_fc1_b: &mut [T],
    d_fc2_w: &mut [T],
    d_fc2_b: &mut [T],
    d_e: &mut [T],
) {
    let d = e.len();
    let mut d_hidden = vec![T::zero(); d];
    for j in 0..2 * d {
        let g = d_out[j];
        d_fc2_b[j] = d_fc2_b[j] + g;
        for k in 0..d {
            d_fc2_w[j * d + k] = d_fc2_w[j * d + k] + g * trace.hidden[k];
            d_hidden[k] = d_hidden[k] + p.fc2_w[j * d + k] * g;
        }
    }
    for k in 0..d {
        let g = d_hidden[k] * gelu_grad(trace.pre[k]);
        d_fc1_b[k] = d_fc1_b[k] + g;
        for i in 0..d {
            d_fc1_w[k * d + i] = d_fc1_w[k * d + i] + g * e[i];
            d_e[i] = d_e[i] + g * p.fc1_w[k * d + i];
        }
    }
}

/// `α ⊙ h + β` with `α`, `β` broadcast over space.
pub fn modulate<T: Real>(h: &[T], alpha: &[T], beta: &[T], n: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(h.len());
    for (c, row) in h.chunks_exact(n).enumerate() {
        out.extend(row.iter().map(|&x| alpha[c] * x + beta[c]));
    }
    out
}

/// Adaptive layer normalization: `[α, β] = ψ(e)`, returns `α ⊙ h + β`.
pub fn adaln_modulate<T: Real>(h: &[T], n: usize, e: &[T], psi: PsiParams<'_, T>) -> Result<Vec<T>> {
    let d = e.len();
    if n == 0 || h.len() != d * n {
        return Err(shape_err(format!(
            "activation of length {} does not have {d} channels of {n} nodes",
            h.len()
        )));
    }
    let trace = psi_forward(psi, e)?;
    let (alpha, beta) = trace.out.split_at(d);
    Ok(modulate(h, alpha, beta, n))
}
