//! Training under the state-prediction or derivative-prediction objective.

mod data;
mod fit;
mod model;

pub use data::{compute_loss, sample_batch, BatchItem, NormStats, Sample, TrainingData};
pub use fit::{pushforward_step, train, EpochLog, FirstStep, TrainOutcome};
pub use model::{ModelSource, Surrogate, SurrogateMeta};

use crate::error::{config_err, Result};
use crate::integrators::IntegratorKind;
use crate::labels::LabelScheme;
use crate::surrogate::AdamConfig;

/// What the network is trained to emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Objective {
    /// `F_θ(u(t_n), t_n) ≈ u(t_{n+1})`.
    State,
    /// `F_θ(u(t_n), t_n) ≈ ∂u/∂t(t_n)`; an integrator advances the solution.
    Derivative,
}

impl Objective {
    pub fn tag(self) -> u8 {
        match self {
            Objective::State => 1,
            Objective::Derivative => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(Objective::State),
            2 => Some(Objective::Derivative),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Objective::State => "state",
            Objective::Derivative => "derivative",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "state" => Some(Objective::State),
            "derivative" => Some(Objective::Derivative),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Normalization {
    None,
    Standardize,
}

impl Normalization {
    pub fn name(self) -> &'static str {
        match self {
            Normalization::None => "none",
            Normalization::Standardize => "standardize",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(Normalization::None),
            "standardize" => Some(Normalization::Standardize),
            _ => None,
        }
    }
}

/// One-step non-differentiable unrolling after `warmup_epochs` plain epochs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pushforward {
    Off,
    On {
        warmup_epochs: usize,
        /// Used for the first (frozen) step under derivative prediction.
        integrator: IntegratorKind,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub objective: Objective,
    pub label_scheme: LabelScheme,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub pushforward: Pushforward,
    /// Keep every `temporal_stride`-th stored frame; labels are computed before subsampling.
    pub temporal_stride: usize,
    pub normalization: Normalization,
    /// Cosine learning-rate decay to zero over all epochs.
    pub cosine_decay: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Derivative,
            label_scheme: LabelScheme::default(),
            adam: AdamConfig::default(),
            batch_size: 32,
            epochs: 100,
            pushforward: Pushforward::Off,
            temporal_stride: 1,
            normalization: Normalization::Standardize,
            cosine_decay: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.batch_size == 0 {
            return Err(config_err("batch_size must be >= 1"));
        }
        if self.temporal_stride == 0 {
            return Err(config_err("temporal_stride must be >= 1"));
        }
        if let Pushforward::On { warmup_epochs, .. } = self.pushforward {
            if warmup_epochs >= self.epochs {
                return Err(config_err(format!(
                    "pushforward warmup ({warmup_epochs}) must be shorter than training ({} epochs)",
                    self.epochs
                )));
            }
        }
        Ok(())
    }

    /// Learning rate for `epoch` under the optional cosine schedule.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        if self.cosine_decay && self.epochs > 0 {
            let frac = epoch as f64 / self.epochs as f64;
            0.5 * self.adam.learning_rate * (1.0 + (std::f64::consts::PI * frac).cos())
        } else {
            self.adam.learning_rate
        }
    }
}
