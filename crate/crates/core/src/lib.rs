pub mod analysis;
pub mod experiments;
pub mod formula;
pub mod graph;
pub mod nnf;
pub mod predicates;
pub mod semantics;
pub mod training;
