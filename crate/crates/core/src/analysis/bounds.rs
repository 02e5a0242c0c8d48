use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::AnalysisError;
use crate::semantics::lme;

/// Outcome of sampling `max(x) - ln(n)/alpha <= LME_alpha(x) <= max(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmeBoundReport {
    pub trials: usize,
    pub violations: usize,
    /// Largest amount by which either side was crossed, 0 if none.
    pub max_violation: f64,
    /// Largest LME value seen; inputs are log-truths, so it must be <= 0.
    pub max_value: f64,
}

impl LmeBoundReport {
    pub fn to_text(&self) -> String {
        format!(
            "trials = {}\nviolations = {}\nmax_violation = {:e}\nmax_value = {:e}\n",
            self.trials, self.violations, self.max_violation, self.max_value
        )
    }
}

/// Samples log-truth vectors of length `1..=n_max` with entries in
/// `[-20, 0]` (a tenth of them constant) and sharpness drawn log-uniformly
/// from `alpha_range`. `tol` absorbs rounding.
pub fn verify_lme_bounds(
    trials: usize,
    n_max: usize,
    alpha_range: (f64, f64),
    seed: u64,
    tol: f64,
) -> Result<LmeBoundReport, AnalysisError> {
    let (lo, hi) = alpha_range;
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(AnalysisError::AlphaRange(lo, hi));
    }
    if n_max == 0 {
        return Err(AnalysisError::TooFew {
            what: "vector length",
            min: 1,
            got: 0,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = LmeBoundReport {
        trials,
        violations: 0,
        max_violation: 0.0,
        max_value: f64::NEG_INFINITY,
    };
    for _ in 0..trials {
        let n = rng.random_range(1..=n_max);
        let x: Vec<f64> = if rng.random_bool(0.1) {
            vec![rng.random_range(-20.0..=0.0); n]
        } else {
            (0..n).map(|_| rng.random_range(-20.0..=0.0)).collect()
        };
        let alpha = (rng.random_range(lo.ln()..=hi.ln())).exp();
        let v = lme(&x, alpha).expect("nonempty");
        let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lower = max - (n as f64).ln() / alpha;
        let over = (v - max).max(lower - v);
        if over > tol {
            report.violations += 1;
        }
        report.max_violation = report.max_violation.max(over.max(0.0));
        report.max_value = report.max_value.max(v);
    }
    Ok(report)
}
