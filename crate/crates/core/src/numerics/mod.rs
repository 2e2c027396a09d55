//! Dense `f64` tensors, a reverse-mode tape, Adam and the warmup/cosine
//! learning-rate schedule.

mod adam;
pub mod checkpoint;
mod gemm;
pub mod init;
mod schedule;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gemm::gemm;
pub use schedule::LrSchedule;
pub use tape::{gelu, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: unsupported shape {shape:?}")]
    InvalidShape { op: &'static str, shape: Vec<usize> },
    #[error("shape {shape:?} does not match data length {len}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op}: empty axis")]
    EmptyAxis { op: &'static str },
    #[error("{op}: index {index} out of range (bound {bound})")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("{op}: duplicate index {index}")]
    DuplicateIndex { op: &'static str, index: usize },
    #[error("backward requires a scalar, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("backward from a node that does not depend on any gradient-tracked input")]
    Detached,
    #[error("backward already ran on this tape; call zero_grad first")]
    BackwardTwice,
    #[error("non-finite gradient for parameter #{index}")]
    NonFiniteGradient { index: usize },
    #[error("optimizer got {params} parameters but {grads} gradients")]
    ParamCount { params: usize, grads: usize },
    #[error("learning rate must be finite and >= 0, got {0}")]
    InvalidLearningRate(f64),
    #[error("schedule step {step} out of range 0..{total}")]
    StepOutOfRange { step: usize, total: usize },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
}
