//! Operator configurations and the grounding compiler.
//!
//! Log configurations ground `and` as a sum of log-truths, `or` and
//! `exists` with a relaxed maximum (LogMeanExp, LogSumExp or exact max),
//! and `forall` with a mean (or sum). `ProdRl` mixes linear connectives with
//! a log-space universal; `StableRl` stays linear with power means.

mod config;
mod ground;
mod ops;

pub use config::{Schedule, SemanticsConfig, SemanticsKind};
pub use ground::{
    ground, infer_space, sat_aggregate, Grounder, ParamBindings, SpaceTag, TraceEntry, TraceRole, TruthBatch,
};
pub use ops::{complement, lme, lme_node, lse, lse_node, pmean, pmean_error, pmean_error_node, pmean_node, squeeze};

use crate::graph::GraphError;
use crate::predicates::ModelError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SemanticsError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("formula is not in negation normal form: {formula}")]
    NotNnf { formula: String },
    #[error("`{operator}` received a log-space operand in {formula}")]
    SpaceMixing { operator: &'static str, formula: String },
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("unknown constant `@{0}`")]
    UnknownConstant(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("unknown guard `{0}`")]
    UnknownGuard(String),
    #[error("variable `{variable}` is not bound")]
    Unbound { variable: String },
    #[error("guard `{guard}` selects no individual")]
    EmptyGuard { guard: String },
    #[error("guard `{guard}` leaves an empty slice for some outer individual")]
    EmptyGuardSlice { guard: String },
    #[error("guard `{guard}` mentions `{variable}`, which is not in scope")]
    GuardVariable { guard: String, variable: String },
    #[error("guard `{guard}` has {got} entries, expected {expected}")]
    GuardShape { guard: String, expected: usize, got: usize },
    #[error("predicate `{predicate}`: {message}")]
    Argument { predicate: String, message: String },
    #[error("axis `{axis}` of `{variable}` is already bound by an enclosing quantifier")]
    AxisRebound { axis: String, variable: String },
    #[error("predicate `{predicate}` produced {value}, outside [0, 1]")]
    NotATruthDegree { predicate: String, value: f64 },
    #[error("satisfaction needs scalar formula groundings")]
    NotScalar,
    #[error("formula groundings live in different truth spaces")]
    MixedSpaces,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
}
