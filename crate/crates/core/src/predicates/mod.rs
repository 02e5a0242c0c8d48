//! Neural and fixed predicate groundings.

mod checkpoint;
mod env;
mod model;

pub use checkpoint::{checkpoint_from_str, checkpoint_to_string, load_checkpoint, save_checkpoint};
pub use env::{Constant, Domain, GroundingEnv, Guard, PredicateGrounding, Variable};
pub use model::{
    cosine_predicate, init_model, log_forward, log_forward_with, log_not_forward, Activation, Head, Layer, ModelSpec,
    PredicateModel,
};

use crate::graph::GraphError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("dimension error: {0}")]
    Dimensions(String),
    #[error("class index: {0}")]
    ClassIndex(String),
    #[error("expected {expected} parameter nodes, got {got}")]
    Binding { expected: usize, got: usize },
    #[error("cosine similarity of a zero vector")]
    ZeroVector,
    #[error("environment: {0}")]
    Env(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}
