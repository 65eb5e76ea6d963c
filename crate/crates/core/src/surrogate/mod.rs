//! Small differentiable surrogates `F_θ(u, cond)` with hand-written reverse-mode gradients.
//!
//! Two architectures share the lift / blocks / projection skeleton:
//!
//! * **Spectral**: each block is `act(K v + W v + b)` with `K` a truncated Fourier
//!   channel mix, followed by adaptive layer normalization.
//! * **Conv**: each block is the residual update `v + adaln(act(conv3(v)))` with a
//!   width-3 periodic convolution.
//!
//! Conditioning (scaled time and coefficient) enters through sinusoidal embeddings.
//! Each input's embedding passes through its own learned `d × d` projection and the
//! results are summed into `e`; a per-block map `ψ_l: R^d → R^{2d}` turns `e` into
//! scale and shift. The projections keep `(t, c)` and `(c, t)` distinguishable, which
//! a plain sum of the two sinusoidal embeddings would not.

mod adam;
mod embed;
pub mod layers;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use embed::{sinusoidal_embed, Conditioning, ConditioningPolicy};
pub use layers::{adaln_modulate, spectral_conv_1d, PsiParams};

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{config_err, shape_err, Error, Result};
use crate::pde_data::SpectralTransform;
use crate::scalar::Real;
use layers::PsiTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Architecture {
    Spectral,
    Conv,
}

impl Architecture {
    pub fn tag(self) -> u8 {
        match self {
            Architecture::Spectral => 1,
            Architecture::Conv => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(Architecture::Spectral),
            2 => Some(Architecture::Conv),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Spectral => "spectral",
            Architecture::Conv => "conv",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "spectral" => Some(Architecture::Spectral),
            "conv" => Some(Architecture::Conv),
            _ => None,
        }
    }
}

/// Hidden activation; `Identity` exists to test the band-limit property.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Gelu,
    Identity,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Gelu => 1,
            Activation::Identity => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(Activation::Gelu),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Gelu => "gelu",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gelu" => Some(Activation::Gelu),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArchConfig {
    pub architecture: Architecture,
    pub width: usize,
    pub depth: usize,
    /// Retained Fourier modes (spectral architecture only).
    pub modes: usize,
    pub n_x: usize,
    pub activation: Activation,
}

impl ArchConfig {
    pub fn spectral(n_x: usize) -> Self {
        Self {
            architecture: Architecture::Spectral,
            width: 32,
            depth: 4,
            modes: 16,
            n_x,
            activation: Activation::Gelu,
        }
    }

    pub fn conv(n_x: usize) -> Self {
        Self {
            architecture: Architecture::Conv,
            modes: 0,
            ..Self::spectral(n_x)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 2 || !self.width.is_multiple_of(2) {
            return Err(config_err(format!("width must be even and >= 2, got {}", self.width)));
        }
        if self.depth == 0 {
            return Err(config_err("depth must be >= 1"));
        }
        if self.n_x < 4 {
            return Err(config_err(format!("n_x must be >= 4, got {}", self.n_x)));
        }
        if self.architecture == Architecture::Spectral && (self.modes == 0 || self.modes > self.n_x / 2) {
            return Err(config_err(format!(
                "modes must lie in 1..={}, got {}",
                self.n_x / 2,
                self.modes
            )));
        }
        Ok(())
    }

    fn block_stride(&self) -> usize {
        match self.architecture {
            Architecture::Spectral => 7,
            Architecture::Conv => 6,
        }
    }

    fn psi_offset(&self) -> usize {
        match self.architecture {
            Architecture::Spectral => 3,
            Architecture::Conv => 2,
        }
    }

    fn block_index(&self, layer: usize, k: usize) -> usize {
        2 + layer * self.block_stride() + k
    }

    fn proj_index(&self) -> usize {
        2 + self.depth * self.block_stride()
    }

    /// Tensor names and shapes in storage order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.width;
        let mut out = vec![
            ("lift.weight".to_string(), vec![d, 1]),
            ("lift.bias".to_string(), vec![d]),
        ];
        for l in 0..self.depth {
            let p = format!("blocks.{l}");
            match self.architecture {
                Architecture::Spectral => {
                    out.push((format!("{p}.spectral.weight"), vec![d, d, self.modes, 2]));
                    out.push((format!("{p}.linear.weight"), vec![d, d]));
                    out.push((format!("{p}.linear.bias"), vec![d]));
                }
                Architecture::Conv => {
                    out.push((format!("{p}.conv.weight"), vec![d, d, 3]));
                    out.push((format!("{p}.conv.bias"), vec![d]));
                }
            }
            out.push((format!("{p}.adaln.fc1.weight"), vec![d, d]));
            out.push((format!("{p}.adaln.fc1.bias"), vec![d]));
            out.push((format!("{p}.adaln.fc2.weight"), vec![2 * d, d]));
            out.push((format!("{p}.adaln.fc2.bias"), vec![2 * d]));
        }
        out.push(("proj.weight".to_string(), vec![1, d]));
        out.push(("proj.bias".to_string(), vec![1]));
        out.push(("cond.time.weight".to_string(), vec![d, d]));
        out.push(("cond.coefficient.weight".to_string(), vec![d, d]));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn norm(&self) -> T {
        crate::scalar::l2_norm(&self.data)
    }
}

/// Named parameter tensors of one surrogate. Gradients and Adam moments use the same type.
#[derive(Debug, Clone)]
pub struct ModelParams<T> {
    config: ArchConfig,
    tensors: Vec<Tensor<T>>,
    version: u64,
}

/// Value equality: the mutation counter only guards tapes and is not compared.
impl<T: PartialEq> PartialEq for ModelParams<T> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.tensors == other.tensors
    }
}

impl<T: Real> ModelParams<T> {
    /// Random initialization: pointwise and conv weights `U(±√(1/fan_in))`, spectral weights
    /// `U(±1)/(d·modes)` per component, biases zero except the `α` half of each `ψ` output
    /// bias, which starts at one.
    pub fn init(config: ArchConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.width as f64;
        let tensors = config
            .layout()
            .into_iter()
            .map(|(name, shape)| {
                let len: usize = shape.iter().product();
                let bound = if name.ends_with("spectral.weight") {
                    Some(1.0 / (d * config.modes as f64))
                } else if name.ends_with("weight") {
                    let fan_in = match name.as_str() {
                        "lift.weight" => 1.0,
                        _ if name.ends_with("conv.weight") => 3.0 * d,
                        _ => d,
                    };
                    Some((1.0 / fan_in).sqrt())
                } else {
                    None
                };
                let data = match bound {
                    Some(b) => (0..len).map(|_| T::lit(b * (2.0 * rng.random::<f64>() - 1.0))).collect(),
                    None if name.ends_with("fc2.bias") => (0..len)
                        .map(|j| if j < config.width { T::one() } else { T::zero() })
                        .collect(),
                    None => vec![T::zero(); len],
                };
                Tensor { name, shape, data }
            })
            .collect();
        Ok(Self {
            config,
            tensors,
            version: 0,
        })
    }

    pub fn zeros(config: ArchConfig) -> Result<Self> {
        config.validate()?;
        let tensors = config
            .layout()
            .into_iter()
            .map(|(name, shape)| {
                let len = shape.iter().product();
                Tensor {
                    name,
                    shape,
                    data: vec![T::zero(); len],
                }
            })
            .collect();
        Ok(Self {
            config,
            tensors,
            version: 0,
        })
    }

    /// Rebuilds parameters from stored tensors, checking names and shapes against the layout.
    pub fn from_tensors(config: ArchConfig, tensors: Vec<Tensor<T>>) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        if layout.len() != tensors.len() {
            return Err(shape_err(format!(
                "expected {} tensors, found {}",
                layout.len(),
                tensors.len()
            )));
        }
        for ((name, shape), t) in layout.iter().zip(&tensors) {
            if &t.name != name || &t.shape != shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(shape_err(format!("tensor {} does not match layout entry {name}", t.name)));
            }
        }
        Ok(Self {
            config,
            tensors,
            version: 0,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config).expect("config already validated")
    }

    #[inline]
    pub fn config(&self) -> &ArchConfig {
        &self.config
    }

    #[inline]
    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    /// Mutable access; invalidates outstanding tapes.
    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        self.version += 1;
        &mut self.tensors
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    /// `self += alpha · other`.
    pub fn axpy(&mut self, alpha: T, other: &Self) {
        for (a, b) in self.tensors_mut().iter_mut().zip(&other.tensors) {
            for (x, &y) in a.data.iter_mut().zip(&b.data) {
                *x = *x + alpha * y;
            }
        }
    }

    pub fn scale(&mut self, alpha: T) {
        for t in self.tensors_mut() {
            for x in t.data.iter_mut() {
                *x = *x * alpha;
            }
        }
    }

    pub fn dot(&self, other: &Self) -> T {
        self.tensors
            .iter()
            .zip(&other.tensors)
            .map(|(a, b)| a.data.iter().zip(&b.data).map(|(&x, &y)| x * y).sum::<T>())
            .sum()
    }

    pub fn max_abs(&self) -> T {
        self.tensors
            .iter()
            .map(|t| crate::scalar::max_abs(&t.data))
            .fold(T::zero(), T::max)
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config,
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|&x| U::lit(x.as_f64())).collect(),
                })
                .collect(),
            version: 0,
        }
    }

    fn data(&self, idx: usize) -> &[T] {
        &self.tensors[idx].data
    }

    fn psi(&self, layer: usize) -> PsiParams<'_, T> {
        let base = self.config.psi_offset();
        PsiParams {
            fc1_w: self.data(self.config.block_index(layer, base)),
            fc1_b: self.data(self.config.block_index(layer, base + 1)),
            fc2_w: self.data(self.config.block_index(layer, base + 2)),
            fc2_b: self.data(self.config.block_index(layer, base + 3)),
        }
    }
}

#[derive(Debug, Clone)]
struct BlockTrace<T> {
    input: Vec<T>,
    spectra: Vec<Complex<T>>,
    pre: Vec<T>,
    post: Vec<T>,
    psi: PsiTrace<T>,
}

/// Saved activations of one forward pass.
#[derive(Debug, Clone)]
pub struct GradTape<T> {
    version: u64,
    config: ArchConfig,
    input: Vec<T>,
    gamma_time: Vec<T>,
    gamma_coefficient: Option<Vec<T>>,
    embedding: Vec<T>,
    blocks: Vec<BlockTrace<T>>,
    last: Vec<T>,
}

/// Parameters plus the FFT plans needed to evaluate them.
#[derive(Debug, Clone)]
pub struct Model<T: Real> {
    params: ModelParams<T>,
    fft: SpectralTransform<T>,
}

impl<T: Real> Model<T> {
    pub fn new(params: ModelParams<T>) -> Self {
        let fft = SpectralTransform::new(params.config.n_x);
        Self { params, fft }
    }

    pub fn init(config: ArchConfig, seed: u64) -> Result<Self> {
        Ok(Self::new(ModelParams::init(config, seed)?))
    }

    #[inline]
    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    #[inline]
    pub fn params_mut(&mut self) -> &mut ModelParams<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ModelParams<T> {
        self.params
    }

    #[inline]
    pub fn config(&self) -> &ArchConfig {
        &self.params.config
    }

    fn check_input(&self, u: &[T]) -> Result<()> {
        if u.len() != self.config().n_x {
            return Err(shape_err(format!(
                "model expects {} nodes, got {}",
                self.config().n_x,
                u.len()
            )));
        }
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::Input("non-finite value in model input".into()));
        }
        Ok(())
    }

    /// Evaluates the network and records a tape for [`Model::backward`].
    pub fn forward(&self, u: &[T], cond: &Conditioning) -> Result<(Vec<T>, GradTape<T>)> {
        self.check_input(u)?;
        let (out, tape) = self.run(u, cond, true)?;
        Ok((out, tape.expect("recording requested")))
    }

    /// Tape-free evaluation for inference.
    pub fn predict(&self, u: &[T], cond: &Conditioning) -> Result<Vec<T>> {
        self.check_input(u)?;
        Ok(self.run(u, cond, false)?.0)
    }

    fn run(&self, u: &[T], cond: &Conditioning, record: bool) -> Result<(Vec<T>, Option<GradTape<T>>)> {
        let cfg = *self.config();
        let p = &self.params;
        let (d, n) = (cfg.width, cfg.n_x);
        let gamma_time = sinusoidal_embed::<T>(cond.time, d)?;
        let gamma_coefficient = cond.coefficient.map(|c| sinusoidal_embed::<T>(c, d)).transpose()?;
        let zero_bias = vec![T::zero(); d];
        let ci = cfg.proj_index() + 2;
        let mut e = layers::channel_linear(p.data(ci), &zero_bias, &gamma_time, d, d, 1);
        if let Some(g) = &gamma_coefficient {
            let ec = layers::channel_linear(p.data(ci + 1), &zero_bias, g, d, d, 1);
            for (a, b) in e.iter_mut().zip(ec) {
                *a = *a + b;
            }
        }

        let mut v = layers::channel_linear(p.data(0), p.data(1), u, 1, d, n);
        let mut traces = Vec::with_capacity(if record { cfg.depth } else { 0 });
        for l in 0..cfg.depth {
            let (spectra, pre) = match cfg.architecture {
                Architecture::Spectral => {
                    let spectra = layers::truncated_spectra(&self.fft, &v, d, cfg.modes);
                    let mut z = layers::spectral_conv_from_spectra(
                        &self.fft,
                        &spectra,
                        p.data(cfg.block_index(l, 0)),
                        d,
                        cfg.modes,
                    );
                    let lin = layers::channel_linear(
                        p.data(cfg.block_index(l, 1)),
                        p.data(cfg.block_index(l, 2)),
                        &v,
                        d,
                        d,
                        n,
                    );
                    for (a, b) in z.iter_mut().zip(lin) {
                        *a = *a + b;
                    }
                    (spectra, z)
                }
                Architecture::Conv => {
                    let z = layers::periodic_conv3(
                        p.data(cfg.block_index(l, 0)),
                        p.data(cfg.block_index(l, 1)),
                        &v,
                        d,
                        n,
                    );
                    (Vec::new(), z)
                }
            };
            let post: Vec<T> = pre.iter().map(|&z| cfg.activation.apply(z)).collect();
            let psi = layers::psi_forward(p.psi(l), &e)?;
            let (alpha, beta) = psi.out.split_at(d);
            let modulated = layers::modulate(&post, alpha, beta, n);
            let next = match cfg.architecture {
                Architecture::Spectral => modulated,
                Architecture::Conv => v.iter().zip(&modulated).map(|(&a, &b)| a + b).collect(),
            };
            if record {
                traces.push(BlockTrace {
                    input: std::mem::replace(&mut v, next),
                    spectra,
                    pre,
                    post,
                    psi,
                });
            } else {
                v = next;
            }
        }
        let pi = cfg.proj_index();
        let out = layers::channel_linear(p.data(pi), p.data(pi + 1), &v, d, 1, n);
        let tape = record.then(|| GradTape {
            version: p.version,
            config: cfg,
            input: u.to_vec(),
            gamma_time,
            gamma_coefficient,
            embedding: e,
            blocks: traces,
            last: v,
        });
        Ok((out, tape))
    }

    /// Gradients of `⟨grad_output, F_θ(u)⟩` with respect to every parameter.
    pub fn backward(&self, tape: &GradTape<T>, grad_output: &[T]) -> Result<ModelParams<T>> {
        let cfg = *self.config();
        if tape.config != cfg || tape.version != self.params.version {
            return Err(Error::Usage("tape was recorded with different parameters".into()));
        }
        if grad_output.len() != cfg.n_x {
            return Err(shape_err(format!(
                "output gradient has {} entries, expected {}",
                grad_output.len(),
                cfg.n_x
            )));
        }
        let p = &self.params;
        let (d, n) = (cfg.width, cfg.n_x);
        let mut grads = p.zeros_like();
        let pi = cfg.proj_index();

        let mut gv = vec![T::zero(); d * n];
        let mut ge = vec![T::zero(); d];
        {
            let (head, tail) = grads.tensors.split_at_mut(pi + 1);
            layers::channel_linear_backward(
                p.data(pi),
                &tape.last,
                grad_output,
                d,
                1,
                n,
                &mut head[pi].data,
                &mut tail[0].data,
                &mut gv,
            );
        }

        for l in (0..cfg.depth).rev() {
            let tr = &tape.blocks[l];
            let (alpha, _) = tr.psi.out.split_at(d);
            let mut d_psi_out = vec![T::zero(); 2 * d];
            let mut gz = vec![T::zero(); d * n];
            for c in 0..d {
                let mut da = T::zero();
                let mut db = T::zero();
                for x in 0..n {
                    let idx = c * n + x;
                    let g = gv[idx];
                    da = da + g * tr.post[idx];
                    db = db + g;
                    gz[idx] = alpha[c] * g * cfg.activation.grad(tr.pre[idx]);
                }
                d_psi_out[c] = da;
                d_psi_out[d + c] = db;
            }
            let psi_base = cfg.block_index(l, cfg.psi_offset());
            {
                let g = &mut grads.tensors[psi_base..psi_base + 4];
                let (g1, rest) = g.split_at_mut(1);
                let (g2, rest) = rest.split_at_mut(1);
                let (g3, g4) = rest.split_at_mut(1);
                layers::psi_backward(
                    p.psi(l),
                    &tape.embedding,
                    &tr.psi,
                    &d_psi_out,
                    &mut g1[0].data,
                    &mut g2[0].data,
                    &mut g3[0].data,
                    &mut g4[0].data,
                    &mut ge,
                );
            }

            let mut gv_in = match cfg.architecture {
                Architecture::Spectral => vec![T::zero(); d * n],
                // residual path
                Architecture::Conv => gv.clone(),
            };
            match cfg.architecture {
                Architecture::Spectral => {
                    let i0 = cfg.block_index(l, 0);
                    let (g_spec, rest) = grads.tensors[i0..i0 + 3].split_at_mut(1);
                    let (g_lw, g_lb) = rest.split_at_mut(1);
                    layers::spectral_conv_backward(
                        &self.fft,
                        &tr.spectra,
                        p.data(i0),
                        &gz,
                        d,
                        cfg.modes,
                        &mut g_spec[0].data,
                        &mut gv_in,
                    );
                    layers::channel_linear_backward(
                        p.data(i0 + 1),
                        &tr.input,
                        &gz,
                        d,
                        d,
                        n,
                        &mut g_lw[0].data,
                        &mut g_lb[0].data,
                        &mut gv_in,
                    );
                }
                Architecture::Conv => {
                    let i0 = cfg.block_index(l, 0);
                    let (g_k, g_b) = grads.tensors[i0..i0 + 2].split_at_mut(1);
                    layers::periodic_conv3_backward(
                        p.data(i0),
                        &tr.input,
                        &gz,
                        d,
                        n,
                        &mut g_k[0].data,
                        &mut g_b[0].data,
                        &mut gv_in,
                    );
                }
            }
            gv = gv_in;
        }

        let (g_w, g_b) = grads.tensors[0..2].split_at_mut(1);
        let mut sink = vec![T::zero(); n];
        layers::channel_linear_backward(
            p.data(0),
            &tape.input,
            &gv,
            1,
            d,
            n,
            &mut g_w[0].data,
            &mut g_b[0].data,
            &mut sink,
        );
        let ci = pi + 2;
        let mut sink = vec![T::zero(); d];
        let mut bias_sink = vec![T::zero(); d];
        layers::channel_linear_backward(
            p.data(ci),
            &tape.gamma_time,
            &ge,
            d,
            d,
            1,
            &mut grads.tensors[ci].data,
            &mut bias_sink,
            &mut sink,
        );
        if let Some(g) = &tape.gamma_coefficient {
            layers::channel_linear_backward(
                p.data(ci + 1),
                g,
                &ge,
                d,
                d,
                1,
                &mut grads.tensors[ci + 1].data,
                &mut bias_sink,
                &mut sink,
            );
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cond() -> Conditioning {
        Conditioning {
            time: 0.3,
            coefficient: Some(0.6),
        }
    }

    fn input(n: usize) -> Vec<f64> {
        (0..n)
            .map(|x| (2.0 * std::f64::consts::PI * x as f64 / n as f64).sin() + 0.1 * x as f64 / n as f64)
            .collect()
    }

    #[test]
    fn layout_names_unique_and_counted() {
        for cfg in [ArchConfig::spectral(64), ArchConfig::conv(64)] {
            let p = ModelParams::<f64>::init(cfg, 0).unwrap();
            let mut names: Vec<_> = p.tensors().iter().map(|t| t.name.clone()).collect();
            names.sort();
            names.dedup();
            assert_eq!(names.len(), p.tensors().len());
            assert_eq!(p.param_count(), ModelParams::<f64>::init(cfg, 9).unwrap().param_count());
        }
        let p = ModelParams::<f64>::init(ArchConfig::spectral(64), 0).unwrap();
        // 2·32 lift + 4·(32·32·16·2 + 32·32 + 32 + 32·32 + 32 + 64·32 + 64) + 33 projection + 2·32·32 conditioning
        assert_eq!(p.param_count(), 64 + 4 * (32768 + 1024 + 32 + 1024 + 32 + 2048 + 64) + 33 + 2048);
    }

    #[test]
    fn zero_projection_gives_zero_output() {
        for cfg in [ArchConfig::spectral(32), ArchConfig::conv(32)] {
            let mut model = Model::<f64>::init(cfg, 3).unwrap();
            let pi = cfg.proj_index();
            for t in &mut model.params_mut().tensors_mut()[pi..pi + 2] {
                t.data.fill(0.0);
            }
            let out = model.predict(&input(32), &cond()).unwrap();
            assert!(out.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn forward_is_deterministic_and_matches_predict() {
        for cfg in [ArchConfig::spectral(32), ArchConfig::conv(32)] {
            let model = Model::<f64>::init(cfg, 5).unwrap();
            let (a, _) = model.forward(&input(32), &cond()).unwrap();
            let (b, _) = model.forward(&input(32), &cond()).unwrap();
            let c = model.predict(&input(32), &cond()).unwrap();
            assert_eq!(a, b);
            assert_eq!(a, c);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let model = Model::<f64>::init(ArchConfig::spectral(32), 0).unwrap();
        assert!(matches!(model.predict(&input(16), &cond()), Err(Error::Shape(_))));
        let mut bad = input(32);
        bad[4] = f64::NAN;
        assert!(matches!(model.predict(&bad, &cond()), Err(Error::Input(_))));
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let model = Model::<f64>::init(ArchConfig::conv(32), 1).unwrap();
        let (_, tape) = model.forward(&input(32), &cond()).unwrap();
        let g = model.backward(&tape, &[0.0; 32]).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn stale_tape_is_a_usage_error() {
        let mut model = Model::<f64>::init(ArchConfig::spectral(32), 1).unwrap();
        let (_, tape) = model.forward(&input(32), &cond()).unwrap();
        model.params_mut().tensors_mut()[0].data[0] += 1.0;
        assert!(matches!(model.backward(&tape, &[1.0; 32]), Err(Error::Usage(_))));
        let other = Model::<f64>::init(ArchConfig::conv(32), 1).unwrap();
        let (_, tape) = other.forward(&input(32), &cond()).unwrap();
        assert!(model.backward(&tape, &[1.0; 32]).is_err());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = ArchConfig::spectral(32);
        c.modes = 17;
        assert!(c.validate().is_err());
        c.modes = 4;
        c.width = 7;
        assert!(c.validate().is_err());
        c.width = 8;
        c.depth = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn runs_in_single_precision() {
        let params = ModelParams::<f64>::init(ArchConfig::spectral(32), 2).unwrap();
        let m64 = Model::new(params.clone());
        let m32 = Model::new(params.cast::<f32>());
        let u = input(32);
        let u32_: Vec<f32> = u.iter().map(|&x| x as f32).collect();
        let a = m64.predict(&u, &cond()).unwrap();
        let b = m32.predict(&u32_, &cond()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - *y as f64).abs() < 1e-4);
        }
    }
}
