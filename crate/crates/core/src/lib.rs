//! Neural surrogates for 1D periodic PDEs trained to predict either the next state or
//! the temporal derivative, with ODE-integrator rollouts and the evaluation tooling to
//! compare the two.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod evaluation;
pub mod frames;
pub mod integrators;
pub mod io;
pub mod labels;
pub mod pde_data;
pub mod scalar;
pub mod surrogate;
pub mod training;

pub use error::{Error, Result};
pub use frames::Frames;
pub use scalar::Real;

pub type Frames64 = Frames<f64>;
pub type Frames32 = Frames<f32>;
pub type Trajectory64 = pde_data::Trajectory<f64>;
pub type Trajectory32 = pde_data::Trajectory<f32>;
pub type Model64 = surrogate::Model<f64>;
pub type Model32 = surrogate::Model<f32>;
