//! Tape-based automatic differentiation and the interaction-recognition
//! architectures built on it.

pub mod checkpoint;
mod error;
pub mod gradcheck;
pub mod models;
pub mod optim;
pub mod real;
pub mod tape;

pub use error::NnError;
pub use gradcheck::{grad_check, GradCheckConfig, GradReport};
pub use models::{
    Architecture, InputForm, LossOptions, Model, ModelInput, ModelKind, ModelSpec, ParamBlock, Precision,
};
pub use optim::{train_step, Adam, AdamConfig};
pub use real::Real;
pub use tape::{ConvGeom, Fault, OpKind, Tape, Var};
