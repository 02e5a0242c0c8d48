//! Numerical checks of the log-space semantics: stability of the
//! log-negation kernel, De Morgan inequality gaps, and aggregator bounds.

mod bounds;
mod demorgan;
mod stability;
mod support;

pub use bounds::{verify_lme_bounds, LmeBoundReport};
pub use demorgan::{
    demorgan_average_grid, demorgan_average_mc, demorgan_gap_and, demorgan_gap_or, demorgan_grid_csv, demorgan_peak,
    demorgan_peak_or, demorgan_summary, DemorganSummary, GapKind,
};
pub use stability::{stability_csv, stability_table, StabilityRow, STABILITY_INPUTS};
pub use support::{existential_gradient_support, GradientSupport};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("truth degree {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("need at least {min} {what}, got {got}")]
    TooFew { what: &'static str, min: usize, got: usize },
    #[error("invalid alpha range [{0}, {1}]")]
    AlphaRange(f64, f64),
}

#[cfg(test)]
mod tests;
