use crate::formula::{pretty_print, Formula};
use crate::graph::Tape;
use crate::predicates::GroundingEnv;
use crate::semantics::{Grounder, ParamBindings, SemanticsConfig, SemanticsError, TraceRole};

/// How many entries of one existential's input receive a nonzero
/// gradient, per group of the reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSupport {
    pub formula: String,
    pub groups: usize,
    pub min_nonzero: usize,
    pub max_nonzero: usize,
    pub mean_nonzero: f64,
}

impl GradientSupport {
    /// Every group passes gradient to exactly one entry.
    pub fn is_one_hot(&self) -> bool {
        self.min_nonzero == 1 && self.max_nonzero == 1
    }
}

/// Grounds the closed formula `f` and differentiates its truth with
/// respect to the input of every existential quantifier inside it.
pub fn existential_gradient_support(
    f: &Formula,
    env: &GroundingEnv,
    cfg: &SemanticsConfig,
    step: usize,
) -> Result<Vec<GradientSupport>, SemanticsError> {
    let mut tape = Tape::new();
    let bindings = ParamBindings::bind_all(env, &mut tape);
    let mut g = Grounder::new(env, cfg, step, &bindings)?.with_trace();
    let t = g.ground(&mut tape, f)?;
    let grads = tape.backward(t.node)?;
    let mut out = Vec::new();
    for e in g.take_trace() {
        if e.role != TraceRole::QuantifierInput || !matches!(e.formula, Formula::Exists(_)) {
            continue;
        }
        let shape = tape.shape(e.node).to_vec();
        let adj = grads.get_or_zeros(e.node, &shape);
        // group index: row-major over the axes that survive the reduction
        let kept: Vec<usize> = (0..shape.len()).filter(|a| !e.reduced.contains(a)).collect();
        let groups: usize = kept.iter().map(|&a| shape[a]).product();
        let mut counts = vec![0usize; groups];
        let mut coord = vec![0usize; shape.len()];
        for (i, v) in adj.data().iter().enumerate() {
            let selected = e.mask.as_ref().is_none_or(|m| m[i]);
            if selected && *v != 0.0 {
                let gi = kept.iter().fold(0, |acc, &a| acc * shape[a] + coord[a]);
                counts[gi] += 1;
            }
            for ax in (0..shape.len()).rev() {
                coord[ax] += 1;
                if coord[ax] < shape[ax] {
                    break;
                }
                coord[ax] = 0;
            }
        }
        out.push(GradientSupport {
            formula: pretty_print(&e.formula),
            groups,
            min_nonzero: counts.iter().copied().min().unwrap_or(0),
            max_nonzero: counts.iter().copied().max().unwrap_or(0),
            mean_nonzero: counts.iter().sum::<usize>() as f64 / groups.max(1) as f64,
        });
    }
    Ok(out)
}
