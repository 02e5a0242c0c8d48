use super::{adam_step, AdamState, RunRecord, StepRow, TrainError};
use crate::formula::Knowledgebase;
use crate::graph::{grad_check, GradCheckReport, NodeId, Precision, Tape, Tensor};
use crate::nnf::to_nnf;
use crate::predicates::GroundingEnv;
use crate::semantics::{sat_aggregate, Grounder, ParamBindings, SemanticsConfig, SpaceTag, TruthBatch};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub learning_rate: f64,
    /// `None` trains on the full batch; otherwise the feeder draws
    /// minibatches of this size.
    pub batch_size: Option<usize>,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub precision: Precision,
}

impl TrainConfig {
    pub fn new(steps: usize, learning_rate: f64, seed: u64) -> Self {
        TrainConfig {
            steps,
            learning_rate,
            batch_size: None,
            seed,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            precision: Precision::F64,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.steps == 0 {
            return Err(TrainError::Config("steps must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == Some(0) {
            return Err(TrainError::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Refreshes variable groundings and guards before each step.
pub trait BatchFeeder {
    fn feed(&mut self, env: &mut GroundingEnv, step: usize) -> Result<(), TrainError>;
}

/// Keeps the environment as it is.
pub struct FullBatch;

impl BatchFeeder for FullBatch {
    fn feed(&mut self, _env: &mut GroundingEnv, _step: usize) -> Result<(), TrainError> {
        Ok(())
    }
}

/// Loss node together with the groundings it was built from.
#[derive(Debug, Clone)]
pub struct LossGraph {
    pub loss: NodeId,
    pub sat: TruthBatch,
    pub formulas: Vec<TruthBatch>,
}

/// `-Sat` over the knowledgebase, grounding with existing parameter nodes.
/// Log configurations see each formula in negation normal form.
pub fn loss_graph(
    kb: &Knowledgebase,
    env: &GroundingEnv,
    cfg: &SemanticsConfig,
    step: usize,
    tape: &mut Tape,
    bindings: &ParamBindings,
) -> Result<LossGraph, TrainError> {
    let mut grounder = Grounder::new(env, cfg, step, bindings)?;
    let mut formulas = Vec::with_capacity(kb.len());
    for nf in kb.formulas() {
        let t = if cfg.kind.is_log() {
            grounder.ground(tape, &to_nnf(&nf.formula))?
        } else {
            grounder.ground(tape, &nf.formula)?
        };
        formulas.push(t);
    }
    let sat = sat_aggregate(tape, &formulas, cfg, step)?;
    let loss = tape.neg(sat.node);
    Ok(LossGraph { loss, sat, formulas })
}

/// Builds the loss on `tape`, binding the environment's parameters.
pub fn loss(
    kb: &Knowledgebase,
    env: &GroundingEnv,
    cfg: &SemanticsConfig,
    step: usize,
    tape: &mut Tape,
) -> Result<NodeId, TrainError> {
    let bindings = ParamBindings::bind_all(env, tape);
    Ok(loss_graph(kb, env, cfg, step, tape, &bindings)?.loss)
}

/// Truth degree in `[0, 1]` of a scalar grounding.
pub fn truth_degree(tape: &Tape, t: &TruthBatch) -> f64 {
    let v = tape.value(t.node).item();
    match t.space {
        SpaceTag::Log => v.exp(),
        SpaceTag::Linear => v,
    }
}

pub fn train(
    kb: &Knowledgebase,
    env: &mut GroundingEnv,
    sem: &SemanticsConfig,
    tc: &TrainConfig,
) -> Result<RunRecord, TrainError> {
    train_with(kb, env, sem, tc, &mut FullBatch)
}

/// Maximizes satisfaction with Adam, updating the neural predicates of
/// `env` in place. Aborts on the first non-finite loss or gradient.
pub fn train_with(
    kb: &Knowledgebase,
    env: &mut GroundingEnv,
    sem: &SemanticsConfig,
    tc: &TrainConfig,
    feeder: &mut dyn BatchFeeder,
) -> Result<RunRecord, TrainError> {
    tc.validate()?;
    sem.validate()?;
    let neural = env.neural_predicates();
    let initial: Vec<Tensor> = neural.iter().flat_map(|n| env.model(n).unwrap().parameters()).collect();
    let mut adam = AdamState::for_params(&initial);
    adam.beta1 = tc.beta1;
    adam.beta2 = tc.beta2;
    adam.eps = tc.adam_eps;
    let mut record = RunRecord {
        formula_names: (0..kb.len()).map(|i| kb.label(i)).collect(),
        ..Default::default()
    };
    for step in 0..tc.steps {
        feeder.feed(env, step)?;
        let mut tape = Tape::with_precision(tc.precision);
        let bindings = ParamBindings::bind_all(env, &mut tape);
        let lg = loss_graph(kb, env, sem, step, &mut tape, &bindings)?;
        let loss_value = tape.value(lg.loss).item();
        if !loss_value.is_finite() {
            let culprit = lg
                .formulas
                .iter()
                .position(|t| !tape.value(t.node).is_finite())
                .map(|i| kb.label(i))
                .unwrap_or_else(|| "knowledgebase aggregate".into());
            return Err(TrainError::NonFinite { step, formula: culprit });
        }
        record.rows.push(StepRow {
            step,
            loss: loss_value,
            sat: truth_degree(&tape, &lg.sat),
            alpha: sem.alpha.value(step),
            p: sem.p.value(step),
            formula_sat: lg.formulas.iter().map(|t| truth_degree(&tape, t)).collect(),
        });
        let grads = tape.backward(lg.loss)?;
        let mut flat = Vec::new();
        for name in &neural {
            for &id in bindings.get(name).unwrap() {
                let g = grads.get_or_zeros(id, tape.shape(id));
                if !g.is_finite() {
                    return Err(TrainError::NonFinite {
                        step,
                        formula: format!("gradient of `{name}`"),
                    });
                }
                flat.push(g);
            }
        }
        let mut params: Vec<&mut Tensor> = Vec::with_capacity(flat.len());
        for (name, p) in env.predicates.iter_mut() {
            if let crate::predicates::PredicateGrounding::Neural(m) = p {
                debug_assert!(neural.contains(name));
                params.extend(m.parameters_mut());
            }
        }
        adam_step(&mut params, &flat, &mut adam, tc.learning_rate)?;
    }
    Ok(record)
}

/// Central-difference check of the knowledgebase loss with respect to
/// every parameter of `env` (neural weights and tables).
pub fn loss_gradcheck(
    kb: &Knowledgebase,
    env: &GroundingEnv,
    cfg: &SemanticsConfig,
    step: usize,
    eps: f64,
) -> Result<GradCheckReport, TrainError> {
    let point: Vec<Tensor> = ParamBindings::env_parameters(env)
        .into_iter()
        .flat_map(|(_, ts)| ts)
        .collect();
    grad_check(
        |tape: &mut Tape, ids: &[NodeId]| -> Result<NodeId, TrainError> {
            // atoms read parameters from the probe nodes, not from `env`
            let bindings = ParamBindings::from_nodes(env, ids)?;
            Ok(loss_graph(kb, env, cfg, step, tape, &bindings)?.loss)
        },
        &point,
        eps,
    )
}
