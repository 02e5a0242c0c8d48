//! Synthetic clustering and digit-addition tasks.

mod cluster;
mod digitadd;

pub use cluster::{
    argmax_rows, build_cluster_kb, evaluate_cluster, run_cluster, run_cluster_with, ClusterOptions, ClusterTask,
    CLUSTER_KB,
};
pub use digitadd::{
    build_digitadd_kb, evaluate_digitadd, initial_digitadd_env, run_digitadd, run_digitadd_with, set_digitadd_batch,
    sum_mask, valid_combos, AddSample, DigitAddFeeder, DigitAddOptions, DigitAddTask, DEFAULT_BATCH, DIGITADD_KB,
    DIGITS, MAX_SUM,
};

use crate::formula::ParseError;
use crate::predicates::ModelError;
use crate::semantics::SemanticsError;
use crate::training::TrainError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExperimentError {
    #[error("data: {0}")]
    Data(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

#[cfg(test)]
mod tests;
