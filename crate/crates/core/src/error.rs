use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("solver diverged at step {step} (t = {time})")]
    SolverDivergence { step: usize, time: f64 },

    #[error("training diverged at epoch {epoch}, batch {batch}")]
    TrainingDivergence { epoch: usize, batch: usize },

    #[error("non-finite gradient")]
    NonFiniteGradient,

    #[error("rollout diverged at step {step}")]
    RolloutDivergence { step: usize },

    #[error("degenerate truth: frame {frame} has zero norm")]
    DegenerateTruth { frame: usize },

    #[error("division guard: {0}")]
    DivisionGuard(String),

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("unsupported format version {0}")]
    UnknownVersion(u16),

    #[error("bad magic bytes: expected {expected:?}")]
    BadMagic { expected: &'static str },

    #[error("unknown architecture tag {0}")]
    UnknownArchitecture(u8),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("storage error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    /// Short machine-readable category used by the CLI summary line.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) | Error::Parse { .. } => "config",
            Error::Shape(_) => "shape",
            Error::Input(_) => "input",
            Error::Usage(_) => "usage",
            Error::SolverDivergence { .. } => "solver-divergence",
            Error::TrainingDivergence { .. } | Error::NonFiniteGradient => "training-divergence",
            Error::RolloutDivergence { .. } => "rollout-divergence",
            Error::DegenerateTruth { .. } | Error::DivisionGuard(_) => "degenerate",
            Error::Checksum { .. } => "checksum",
            Error::Truncated(_) => "truncated",
            Error::UnknownVersion(_) | Error::BadMagic { .. } | Error::UnknownArchitecture(_) => {
                "format"
            }
            Error::Io(_) => "storage",
        }
    }
}

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
