//! Reverse-mode automatic differentiation over dense tensors.
//!
//! The primitive set is small on purpose: elementwise arithmetic, `exp`,
//! `log`, `power`, `elu`, the fused `log_sigmoid` / `log_softmax` kernels,
//! `matmul`, masked reductions (sum, mean, max, shifted log-sum-exp),
//! broadcast, concat, slice and reshape. Numerically delicate pieces are
//! single primitives with hand-written adjoints rather than compositions.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport, DEFAULT_EPS};
pub use tape::{
    broadcast_mask, group_counts, log_sigmoid, logsumexp_slice, sigmoid, Gradients, NodeId, Precision, ReduceKind, Tape,
};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("data of length {len} does not fit shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op}: axis {axis} out of range for rank {rank}")]
    InvalidAxis { op: &'static str, axis: usize, rank: usize },
    #[error("index {index} out of range for axis of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("mask has {got} entries, expected {expected}")]
    MaskLength { expected: usize, got: usize },
    #[error("{op}: reduction over an empty selection")]
    EmptyReduction { op: &'static str },
    #[error("backward root must be scalar, got shape {shape:?}")]
    NonScalarRoot { shape: Vec<usize> },
}
