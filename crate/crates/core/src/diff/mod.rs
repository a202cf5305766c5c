//! Reverse-mode differentiation on dense f64 matrices, parameter sets,
//! the Adam optimizer, EMA coupling, and checkpoint files.

mod checkpoint;
mod matrix;
mod optim;
mod params;
mod tape;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, restore_into, save_checkpoint, CheckpointHeader,
};
pub use matrix::Matrix;
pub use optim::{ema_schedule, ema_update, Adam};
pub use params::{glorot, Bound, ParamSet, Parameter};
pub use tape::{Gradients, Tape, Var};

/// Global gradient-norm ceiling applied before each optimizer step.
pub const GRAD_CLIP_NORM: f64 = 5.0;

#[derive(Debug, thiserror::Error)]
pub enum DiffError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("non-finite value in {0}")]
    NonFiniteValue(&'static str),
    #[error("pooling group {0} is empty")]
    EmptyGroup(usize),
    #[error("parameter name sets differ: {0}")]
    NameSetMismatch(String),
    #[error("parameter {name}: expected shape {expected:?}, found {found:?}")]
    ParameterShape {
        name: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
