//! Satisfiability maximization: loss, Adam, the training loop and metrics.

mod adam;
mod ari;
mod record;
mod train;

pub use adam::{adam_step, AdamState};
pub use ari::adjusted_rand_index;
pub use record::{RunRecord, StepRow};
pub use train::{
    loss, loss_gradcheck, loss_graph, train, train_with, truth_degree, BatchFeeder, FullBatch, LossGraph, TrainConfig,
};

use crate::graph::GraphError;
use crate::semantics::SemanticsError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value at step {step} in formula `{formula}`")]
    NonFinite { step: usize, formula: String },
    #[error("data: {0}")]
    Data(String),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[cfg(test)]
mod tests;
