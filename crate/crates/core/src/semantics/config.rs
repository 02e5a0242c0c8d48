use std::fmt;
use std::str::FromStr;

use super::SemanticsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SemanticsKind {
    LogLtn,
    LogLtnSum,
    LogLtnMax,
    LogLtnLse,
    ProdRl,
    StableRl,
}

impl SemanticsKind {
    pub const ALL: [SemanticsKind; 6] = [
        SemanticsKind::LogLtn,
        SemanticsKind::LogLtnSum,
        SemanticsKind::LogLtnMax,
        SemanticsKind::LogLtnLse,
        SemanticsKind::ProdRl,
        SemanticsKind::StableRl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SemanticsKind::LogLtn => "logltn",
            SemanticsKind::LogLtnSum => "logltn-sum",
            SemanticsKind::LogLtnMax => "logltn-max",
            SemanticsKind::LogLtnLse => "logltn-lse",
            SemanticsKind::ProdRl => "prodrl",
            SemanticsKind::StableRl => "stablerl",
        }
    }

    /// Whether every operator works on log-truths (and NNF is required).
    pub fn is_log(self) -> bool {
        !matches!(self, SemanticsKind::ProdRl | SemanticsKind::StableRl)
    }
}

impl fmt::Display for SemanticsKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SemanticsKind {
    type Err = SemanticsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        SemanticsKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| SemanticsError::Config(format!("unknown semantics `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    Constant(f64),
    /// `start` at step 0, `end` at `total_steps`, held afterwards.
    Linear {
        start: f64,
        end: f64,
        total_steps: usize,
    },
}

impl Schedule {
    pub fn value(&self, step: usize) -> f64 {
        match *self {
            Schedule::Constant(v) => v,
            Schedule::Linear {
                start,
                end,
                total_steps,
            } => {
                if total_steps == 0 || step >= total_steps {
                    end
                } else {
                    start + (end - start) * step as f64 / total_steps as f64
                }
            }
        }
    }

    fn bounds(&self) -> (f64, f64) {
        match *self {
            Schedule::Constant(v) => (v, v),
            Schedule::Linear { start, end, .. } => (start.min(end), start.max(end)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticsConfig {
    pub kind: SemanticsKind,
    /// Sharpness of LME / LSE.
    pub alpha: Schedule,
    /// Exponent of the power means.
    pub p: Schedule,
    pub epsilon: f64,
}

impl SemanticsConfig {
    /// Default schedules ramp alpha over [1, 4] and p over [1, 6] so that
    /// the last of `steps` training steps sees the end value.
    pub fn new(kind: SemanticsKind, steps: usize) -> Self {
        let total_steps = steps.saturating_sub(1);
        SemanticsConfig {
            kind,
            alpha: Schedule::Linear {
                start: 1.0,
                end: 4.0,
                total_steps,
            },
            p: Schedule::Linear {
                start: 1.0,
                end: 6.0,
                total_steps,
            },
            epsilon: 1e-7,
        }
    }

    /// Fixed alpha and p, handy for analysis and tests.
    pub fn constant(kind: SemanticsKind, alpha: f64, p: f64) -> Self {
        SemanticsConfig {
            kind,
            alpha: Schedule::Constant(alpha),
            p: Schedule::Constant(p),
            epsilon: 1e-7,
        }
    }

    pub fn validate(&self) -> Result<(), SemanticsError> {
        let (alo, _) = self.alpha.bounds();
        if !alo.is_finite() || alo <= 0.0 {
            return Err(SemanticsError::Config(format!(
                "alpha must be positive, got {:?}",
                self.alpha
            )));
        }
        let (plo, phi) = self.p.bounds();
        if plo.is_nan() || plo < 1.0 || !phi.is_finite() {
            return Err(SemanticsError::Config(format!(
                "p must be at least 1, got {:?}",
                self.p
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1e-3) {
            return Err(SemanticsError::Config(format!(
                "epsilon must lie in (0, 1e-3), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}
