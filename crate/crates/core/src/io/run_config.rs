//! Flat `key = value` experiment description.
//!
//! One key per line, `#` starts a comment, blank lines are ignored. Missing keys take
//! their defaults (the `pde.*` defaults depend on `pde.equation`, the `sweep.*` defaults
//! on the time grid). Unknown and repeated keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{config_err, Error, Result};
use crate::evaluation::SweepSpec;
use crate::integrators::IntegratorKind;
use crate::labels::LabelScheme;
use crate::pde_data::{DatasetSpec, Equation, InitialConditionSpec, PdeConfig, SpatialGrid};
use crate::surrogate::{Activation, AdamConfig, ArchConfig, Architecture};
use crate::training::{Normalization, Objective, Pushforward, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandscapeSettings {
    /// Grid points per axis.
    pub points: usize,
    /// Coordinates span `[−extent, extent]`.
    pub extent: f64,
    /// Validation samples used per cell.
    pub samples: usize,
    pub integrator: IntegratorKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchSettings {
    pub repeats: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSettings {
    pub variance: f64,
    pub sample: usize,
}

/// Everything a CLI run needs besides file paths. `train.seed` always mirrors `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub pde: PdeConfig,
    pub grid: SpatialGrid,
    /// The `seed` field is unused; samples are seeded `seed + i`.
    pub initial: InitialConditionSpec,
    pub n_samples: usize,
    /// The last `n_val` samples form the validation split.
    pub n_val: usize,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub sweep: SweepSpec,
    pub eval_integrators: Vec<IntegratorKind>,
    pub rollout_integrator: IntegratorKind,
    pub landscape: LandscapeSettings,
    pub bench: BenchSettings,
    pub noise: NoiseSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_equation(Equation::Advection)
    }
}

impl RunConfig {
    pub fn for_equation(equation: Equation) -> Self {
        let pde = default_pde(equation);
        let grid = SpatialGrid::default();
        Self {
            seed: 0,
            pde,
            grid,
            initial: InitialConditionSpec::default(),
            n_samples: 576,
            n_val: 64,
            arch: ArchConfig::spectral(grid.n_x()),
            train: TrainConfig::default(),
            sweep: SweepSpec::for_native(pde.dt(), pde.n_t),
            eval_integrators: IntegratorKind::ALL.to_vec(),
            rollout_integrator: IntegratorKind::Rk4,
            landscape: LandscapeSettings {
                points: 5,
                extent: 0.5,
                samples: 8,
                integrator: IntegratorKind::Rk4,
            },
            bench: BenchSettings { repeats: 5, samples: 8 },
            noise: NoiseSettings {
                variance: 0.01,
                sample: 0,
            },
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.train.seed = seed;
        self
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            pde: self.pde,
            grid: self.grid,
            initial: self.initial.clone(),
            n_samples: self.n_samples,
            base_seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pde.validate()?;
        self.initial.validate()?;
        self.arch.validate()?;
        self.train.validate()?;
        if self.arch.n_x != self.grid.n_x() {
            return Err(config_err("arch n_x must equal grid.n_x"));
        }
        if self.n_samples == 0 || self.n_val >= self.n_samples {
            return Err(config_err(format!(
                "need 1 <= n_samples and n_val < n_samples, got {} and {}",
                self.n_samples, self.n_val
            )));
        }
        if self.landscape.points < 2 || !(self.landscape.extent > 0.0) {
            return Err(config_err("landscape needs >= 2 points and a positive extent"));
        }
        if self.bench.repeats == 0 {
            return Err(config_err("bench.repeats must be >= 1"));
        }
        if !(self.noise.variance >= 0.0) {
            return Err(config_err("noise.variance must be >= 0"));
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        put("seed", self.seed.to_string());
        put("pde.equation", self.pde.equation.name().into());
        put("pde.t_end", self.pde.t_end.to_string());
        put("pde.n_t", self.pde.n_t.to_string());
        put("pde.burn_in", self.pde.burn_in.to_string());
        put("pde.solver_dt", self.pde.solver_dt.to_string());
        put("grid.n_x", self.grid.n_x().to_string());
        put("grid.length", self.grid.length().to_string());
        put("initial.modes", self.initial.modes.to_string());
        put("initial.amplitude_min", self.initial.amplitude_range.0.to_string());
        put("initial.amplitude_max", self.initial.amplitude_range.1.to_string());
        put("initial.wavenumbers", join(&self.initial.wavenumbers, |w| w.to_string()));
        put("data.n_samples", self.n_samples.to_string());
        put("data.n_val", self.n_val.to_string());
        put("arch.architecture", self.arch.architecture.name().into());
        put("arch.width", self.arch.width.to_string());
        put("arch.depth", self.arch.depth.to_string());
        put("arch.modes", self.arch.modes.to_string());
        put("arch.activation", self.arch.activation.name().into());
        for (k, v) in train_entries(&self.train) {
            put(&k, v);
        }
        put("sweep.dts", join(&self.sweep.dts, |d| d.to_string()));
        put("sweep.horizon", self.sweep.horizon.to_string());
        put("sweep.integrators", join(&self.sweep.integrators, |k| k.name().into()));
        put("sweep.objectives", join(&self.sweep.objectives, |o| o.name().into()));
        put("eval.integrators", join(&self.eval_integrators, |k| k.name().into()));
        put("rollout.integrator", self.rollout_integrator.name().into());
        put("landscape.points", self.landscape.points.to_string());
        put("landscape.extent", self.landscape.extent.to_string());
        put("landscape.samples", self.landscape.samples.to_string());
        put("landscape.integrator", self.landscape.integrator.name().into());
        put("bench.repeats", self.bench.repeats.to_string());
        put("bench.samples", self.bench.samples.to_string());
        put("noise.variance", self.noise.variance.to_string());
        put("noise.sample", self.noise.sample.to_string());
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut f = Fields::parse(text)?;
        let equation = f.take_with("pde.equation", Equation::parse)?.unwrap_or(Equation::Advection);
        let mut c = Self::for_equation(equation);
        c.seed = f.take("seed")?.unwrap_or(0);
        f.set(&mut c.pde.t_end, "pde.t_end")?;
        f.set(&mut c.pde.n_t, "pde.n_t")?;
        f.set(&mut c.pde.burn_in, "pde.burn_in")?;
        f.set(&mut c.pde.solver_dt, "pde.solver_dt")?;
        let n_x = f.take("grid.n_x")?.unwrap_or(c.grid.n_x());
        let length = f.take("grid.length")?.unwrap_or(c.grid.length());
        c.grid = SpatialGrid::new(n_x, length)?;
        f.set(&mut c.initial.modes, "initial.modes")?;
        f.set(&mut c.initial.amplitude_range.0, "initial.amplitude_min")?;
        f.set(&mut c.initial.amplitude_range.1, "initial.amplitude_max")?;
        if let Some(w) = f.take_list("initial.wavenumbers", |s| s.parse().ok())? {
            c.initial.wavenumbers = w;
        }
        f.set(&mut c.n_samples, "data.n_samples")?;
        f.set(&mut c.n_val, "data.n_val")?;
        let architecture = f
            .take_with("arch.architecture", Architecture::parse)?
            .unwrap_or(Architecture::Spectral);
        c.arch = match architecture {
            Architecture::Spectral => ArchConfig::spectral(n_x),
            Architecture::Conv => ArchConfig::conv(n_x),
        };
        f.set(&mut c.arch.width, "arch.width")?;
        f.set(&mut c.arch.depth, "arch.depth")?;
        let modes: Option<usize> = f.take("arch.modes")?;
        if architecture == Architecture::Spectral {
            c.arch.modes = modes.unwrap_or(c.arch.modes);
        }
        if let Some(a) = f.take_with("arch.activation", Activation::parse)? {
            c.arch.activation = a;
        }
        c.train = parse_train(&mut f, c.seed)?;
        c.sweep = SweepSpec::for_native(c.pde.dt(), c.pde.n_t);
        if let Some(d) = f.take_list("sweep.dts", |s| s.parse().ok())? {
            c.sweep.dts = d;
        }
        f.set(&mut c.sweep.horizon, "sweep.horizon")?;
        if let Some(k) = f.take_list("sweep.integrators", IntegratorKind::parse)? {
            c.sweep.integrators = k;
        }
        if let Some(o) = f.take_list("sweep.objectives", Objective::parse)? {
            c.sweep.objectives = o;
        }
        if let Some(k) = f.take_list("eval.integrators", IntegratorKind::parse)? {
            c.eval_integrators = k;
        }
        if let Some(k) = f.take_with("rollout.integrator", IntegratorKind::parse)? {
            c.rollout_integrator = k;
        }
        f.set(&mut c.landscape.points, "landscape.points")?;
        f.set(&mut c.landscape.extent, "landscape.extent")?;
        f.set(&mut c.landscape.samples, "landscape.samples")?;
        if let Some(k) = f.take_with("landscape.integrator", IntegratorKind::parse)? {
            c.landscape.integrator = k;
        }
        f.set(&mut c.bench.repeats, "bench.repeats")?;
        f.set(&mut c.bench.samples, "bench.samples")?;
        f.set(&mut c.noise.variance, "noise.variance")?;
        f.set(&mut c.noise.sample, "noise.sample")?;
        f.finish()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

fn default_pde(equation: Equation) -> PdeConfig {
    match equation {
        Equation::Advection => PdeConfig::advection(),
        Equation::Heat => PdeConfig::heat(),
        Equation::KuramotoSivashinsky => PdeConfig::ks(),
    }
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(",")
}

/// The `train.*` lines; also used as the training-config echo inside checkpoints.
pub fn train_entries(t: &TrainConfig) -> Vec<(String, String)> {
    let mut v = vec![
        ("train.objective", t.objective.name().to_string()),
        ("train.label_scheme", t.label_scheme.name().into()),
        ("train.learning_rate", t.adam.learning_rate.to_string()),
        ("train.beta1", t.adam.beta1.to_string()),
        ("train.beta2", t.adam.beta2.to_string()),
        ("train.epsilon", t.adam.epsilon.to_string()),
        ("train.batch_size", t.batch_size.to_string()),
        ("train.epochs", t.epochs.to_string()),
    ];
    match t.pushforward {
        Pushforward::Off => v.push(("train.pushforward", "off".into())),
        Pushforward::On {
            warmup_epochs,
            integrator,
        } => {
            v.push(("train.pushforward", "on".into()));
            v.push(("train.pushforward_warmup", warmup_epochs.to_string()));
            v.push(("train.pushforward_integrator", integrator.name().into()));
        }
    }
    v.push(("train.temporal_stride", t.temporal_stride.to_string()));
    v.push(("train.normalization", t.normalization.name().into()));
    v.push(("train.cosine_decay", t.cosine_decay.to_string()));
    v.into_iter().map(|(k, s)| (k.to_string(), s)).collect()
}

/// Renders a training config with its seed, in the checkpoint echo format.
pub fn render_train_config(t: &TrainConfig) -> String {
    let mut out = format!("seed = {}\n", t.seed);
    for (k, v) in train_entries(t) {
        out.push_str(&format!("{k} = {v}\n"));
    }
    out
}

/// Inverse of [`render_train_config`].
pub fn parse_train_config(text: &str) -> Result<TrainConfig> {
    let mut f = Fields::parse(text)?;
    let seed = f.take("seed")?.unwrap_or(0);
    let t = parse_train(&mut f, seed)?;
    f.finish()?;
    Ok(t)
}

fn parse_train(f: &mut Fields, seed: u64) -> Result<TrainConfig> {
    let mut t = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    if let Some(o) = f.take_with("train.objective", Objective::parse)? {
        t.objective = o;
    }
    if let Some(s) = f.take_with("train.label_scheme", LabelScheme::parse)? {
        t.label_scheme = s;
    }
    let d = AdamConfig::default();
    t.adam = AdamConfig {
        learning_rate: f.take("train.learning_rate")?.unwrap_or(d.learning_rate),
        beta1: f.take("train.beta1")?.unwrap_or(d.beta1),
        beta2: f.take("train.beta2")?.unwrap_or(d.beta2),
        epsilon: f.take("train.epsilon")?.unwrap_or(d.epsilon),
    };
    f.set(&mut t.batch_size, "train.batch_size")?;
    f.set(&mut t.epochs, "train.epochs")?;
    let on = f
        .take_with("train.pushforward", |s| match s {
            "on" => Some(true),
            "off" => Some(false),
            _ => None,
        })?
        .unwrap_or(false);
    let warmup_epochs = f.take("train.pushforward_warmup")?;
    let integrator = f.take_with("train.pushforward_integrator", IntegratorKind::parse)?;
    if on {
        t.pushforward = Pushforward::On {
            warmup_epochs: warmup_epochs.unwrap_or(0),
            integrator: integrator.unwrap_or(IntegratorKind::ForwardEuler),
        };
    }
    f.set(&mut t.temporal_stride, "train.temporal_stride")?;
    if let Some(n) = f.take_with("train.normalization", Normalization::parse)? {
        t.normalization = n;
    }
    f.set(&mut t.cosine_decay, "train.cosine_decay")?;
    Ok(t)
}

/// Parsed `key = value` lines awaiting consumption.
struct Fields {
    entries: BTreeMap<String, (usize, String)>,
}

impl Fields {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content.split_once('=').ok_or_else(|| Error::Parse {
                line,
                msg: format!("expected `key = value`, got `{content}`"),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::Parse {
                    line,
                    msg: "empty key".into(),
                });
            }
            if entries.insert(k.to_string(), (line, v.to_string())).is_some() {
                return Err(Error::Parse {
                    line,
                    msg: format!("key `{k}` appears twice"),
                });
            }
        }
        Ok(Self { entries })
    }

    fn take_with<T>(&mut self, key: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Option<T>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => parse(&v).map(Some).ok_or_else(|| Error::Parse {
                line,
                msg: format!("invalid value `{v}` for `{key}`"),
            }),
        }
    }

    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        self.take_with(key, |s| s.parse().ok())
    }

    fn set<T: FromStr>(&mut self, slot: &mut T, key: &str) -> Result<()> {
        if let Some(v) = self.take(key)? {
            *slot = v;
        }
        Ok(())
    }

    fn take_list<T>(&mut self, key: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Option<Vec<T>>> {
        self.take_with(key, |s| {
            if s.is_empty() {
                return Some(Vec::new());
            }
            s.split(',').map(|p| parse(p.trim())).collect()
        })
    }

    fn finish(self) -> Result<()> {
        match self.entries.into_iter().min_by_key(|(_, (line, _))| *line) {
            None => Ok(()),
            Some((k, (line, _))) => Err(Error::Parse {
                line,
                msg: format!("unknown key `{k}`"),
            }),
        }
    }
}
