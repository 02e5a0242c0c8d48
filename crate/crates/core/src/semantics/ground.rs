use std::collections::BTreeMap;

use super::config::{SemanticsConfig, SemanticsKind};
use super::ops::{complement, lme_node, lse_node, pmean_error_node, pmean_node, squeeze};
use super::SemanticsError;
use crate::formula::{pretty_print, Atom, Formula, Quantified, Term};
use crate::graph::{broadcast_mask, group_counts, NodeId, Tape, Tensor};
use crate::predicates::{cosine_predicate, Constant, Domain, GroundingEnv, Head, PredicateGrounding};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceTag {
    /// Truth degrees in `[0, 1]`.
    Linear,
    /// Log-truths in `(-inf, 0]`.
    Log,
}

/// A grounded (sub)formula: one tape node whose axes follow `free_vars`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthBatch {
    pub node: NodeId,
    pub space: SpaceTag,
    /// `(axis name, size)` in quantifier introduction order.
    pub free_vars: Vec<(String, usize)>,
}

impl TruthBatch {
    pub fn is_scalar(&self) -> bool {
        self.free_vars.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceRole {
    Atom,
    NegatedAtom,
    Connective,
    /// The tensor a quantifier reduces, after broadcasting and before masking.
    QuantifierInput,
    Quantifier,
}

#[derive(Debug, Clone)]
pub struct TraceEntry {
    pub role: TraceRole,
    pub formula: Formula,
    pub node: NodeId,
    /// Axis names of `node`.
    pub axes: Vec<String>,
    /// For `QuantifierInput`: positions in `axes` being reduced.
    pub reduced: Vec<usize>,
    /// For `QuantifierInput` under a guard: the mask over `node`.
    pub mask: Option<Vec<bool>>,
}

/// Tape nodes standing for each predicate's parameters.
#[derive(Debug, Clone, Default)]
pub struct ParamBindings {
    map: BTreeMap<String, Vec<NodeId>>,
}

impl ParamBindings {
    /// Parameter tensors of `env` in binding order: neural predicates by
    /// name (`w0, b0, ...` each), then table predicates by name.
    pub fn env_parameters(env: &GroundingEnv) -> Vec<(String, Vec<Tensor>)> {
        let mut out = Vec::new();
        for (name, p) in &env.predicates {
            if let PredicateGrounding::Neural(m) = p {
                out.push((name.clone(), m.parameters()));
            }
        }
        for (name, p) in &env.predicates {
            if let PredicateGrounding::Table(t) = p {
                out.push((name.clone(), vec![t.clone()]));
            }
        }
        out
    }

    /// Registers every parameter of `env` on the tape.
    pub fn bind_all(env: &GroundingEnv, tape: &mut Tape) -> Self {
        let map = Self::env_parameters(env)
            .into_iter()
            .map(|(name, ts)| (name, ts.into_iter().map(|t| tape.param(t)).collect()))
            .collect();
        ParamBindings { map }
    }

    /// Uses existing nodes, laid out as [`env_parameters`] flattened.
    ///
    /// [`env_parameters`]: ParamBindings::env_parameters
    pub fn from_nodes(env: &GroundingEnv, nodes: &[NodeId]) -> Result<Self, SemanticsError> {
        let mut map = BTreeMap::new();
        let mut it = nodes.iter().copied();
        for (name, ts) in Self::env_parameters(env) {
            let ids: Vec<NodeId> = it.by_ref().take(ts.len()).collect();
            if ids.len() != ts.len() {
                return Err(SemanticsError::Config("too few parameter nodes".into()));
            }
            map.insert(name, ids);
        }
        if it.next().is_some() {
            return Err(SemanticsError::Config("too many parameter nodes".into()));
        }
        Ok(ParamBindings { map })
    }

    pub fn get(&self, predicate: &str) -> Option<&[NodeId]> {
        self.map.get(predicate).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Vec<NodeId>)> {
        self.map.iter()
    }
}

/// Grounds a closed formula, binding the environment's parameters on
/// `tape` first.
pub fn ground(
    f: &Formula,
    env: &GroundingEnv,
    cfg: &SemanticsConfig,
    step: usize,
    tape: &mut Tape,
) -> Result<TruthBatch, SemanticsError> {
    let bindings = ParamBindings::bind_all(env, tape);
    Grounder::new(env, cfg, step, &bindings)?.ground(tape, f)
}

/// Internal result: axes are scope positions in increasing order.
#[derive(Debug, Clone)]
struct Grounded {
    node: NodeId,
    space: SpaceTag,
    axes: Vec<usize>,
}

enum Arg<'e> {
    Features(&'e [f64]),
    Index(usize),
    Var { pos: usize, domain: &'e Domain },
}

pub struct Grounder<'a> {
    env: &'a GroundingEnv,
    cfg: &'a SemanticsConfig,
    alpha: f64,
    p: f64,
    bindings: &'a ParamBindings,
    /// Open axes: `(axis name, size)`.
    scope: Vec<(String, usize)>,
    /// Bound variables with their scope position, innermost last.
    vars: Vec<(String, usize)>,
    /// Active guard compactions, innermost last.
    compactions: Vec<Compaction>,
    /// Reduce guarded quantifiers over the full masked product instead.
    dense_guards: bool,
    trace: Option<Vec<TraceEntry>>,
}

/// A guarded quantifier's selected tuples listed along one axis.
///
/// The guarded axes (`inner`) are replaced by the scope axis `q`, which
/// enumerates the selected tuples separately for each element of the
/// guard's enclosing axes (`outer`). Shorter lists are padded and the
/// padding is masked out of the reduction.
#[derive(Debug, Clone)]
struct Compaction {
    outer: Vec<usize>,
    inner: Vec<usize>,
    q: usize,
    kmax: usize,
    /// `[n_outer, kmax, inner.len()]` coordinates along the inner axes.
    coords: Vec<usize>,
    /// `[n_outer, kmax]`, false on padding.
    valid: Vec<bool>,
}

impl<'a> Grounder<'a> {
    pub fn new(
        env: &'a GroundingEnv,
        cfg: &'a SemanticsConfig,
        step: usize,
        bindings: &'a ParamBindings,
    ) -> Result<Self, SemanticsError> {
        cfg.validate()?;
        Ok(Grounder {
            env,
            cfg,
            alpha: cfg.alpha.value(step),
            p: cfg.p.value(step),
            bindings,
            scope: Vec::new(),
            vars: Vec::new(),
            compactions: Vec::new(),
            dense_guards: false,
            trace: None,
        })
    }

    /// Records atom, connective and quantifier nodes while grounding.
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    /// Grounds guarded quantifiers over the full product of their axes
    /// with the guard as a mask. Slower, but the same result.
    pub fn with_dense_guards(mut self) -> Self {
        self.dense_guards = true;
        self
    }

    pub fn take_trace(&mut self) -> Vec<TraceEntry> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn ground(&mut self, tape: &mut Tape, f: &Formula) -> Result<TruthBatch, SemanticsError> {
        if let Some(v) = f.free_variables().into_iter().next() {
            return Err(SemanticsError::Unbound { variable: v });
        }
        self.scope.clear();
        self.vars.clear();
        self.compactions.clear();
        let g = self.eval(tape, f)?;
        Ok(TruthBatch {
            node: g.node,
            space: g.space,
            free_vars: Vec::new(),
        })
    }

    fn log_kind(&self) -> bool {
        self.cfg.kind.is_log()
    }

    fn shape_of(&self, axes: &[usize]) -> Vec<usize> {
        axes.iter().map(|&a| self.scope[a].1).collect()
    }

    fn names_of(&self, axes: &[usize]) -> Vec<String> {
        axes.iter().map(|&a| self.scope[a].0.clone()).collect()
    }

    fn record(&mut self, role: TraceRole, f: &Formula, g: &Grounded) {
        if self.trace.is_some() {
            let axes = self.names_of(&g.axes);
            if let Some(trace) = self.trace.as_mut() {
                trace.push(TraceEntry {
                    role,
                    formula: f.clone(),
                    node: g.node,
                    axes,
                    reduced: Vec::new(),
                    mask: None,
                });
            }
        }
    }

    fn eval(&mut self, tape: &mut Tape, f: &Formula) -> Result<Grounded, SemanticsError> {
        let log = self.log_kind();
        let g = match f {
            Formula::Atom(a) => {
                let g = self.atom(tape, a, false)?;
                let g = self.lift(tape, g)?;
                self.record(TraceRole::Atom, f, &g);
                return Ok(g);
            }
            Formula::Not(inner) => {
                if log {
                    return match inner.as_ref() {
                        Formula::Atom(a) => {
                            let g = self.atom(tape, a, true)?;
                            let g = self.lift(tape, g)?;
                            self.record(TraceRole::NegatedAtom, f, &g);
                            Ok(g)
                        }
                        _ => Err(not_nnf(f)),
                    };
                }
                let c = self.eval(tape, inner)?;
                self.expect_linear(&c, "not", f)?;
                Grounded {
                    node: complement(tape, c.node)?,
                    space: SpaceTag::Linear,
                    axes: c.axes,
                }
            }
            Formula::And(cs) | Formula::Or(cs) => {
                let is_and = matches!(f, Formula::And(_));
                let gs = cs.iter().map(|c| self.eval(tape, c)).collect::<Result<Vec<_>, _>>()?;
                if !log {
                    for g in &gs {
                        self.expect_linear(g, if is_and { "and" } else { "or" }, f)?;
                    }
                }
                let (nodes, axes) = self.align(tape, &gs)?;
                let node = match (log, is_and) {
                    (true, true) => fold(tape, &nodes, |t, a, b| t.add(a, b))?,
                    (true, false) => self.log_or(tape, &nodes, &axes)?,
                    (false, true) => fold(tape, &nodes, |t, a, b| t.mul(a, b))?,
                    (false, false) => fold(tape, &nodes, |t, a, b| {
                        let s = t.add(a, b)?;
                        let ab = t.mul(a, b)?;
                        t.sub(s, ab)
                    })?,
                };
                Grounded {
                    node,
                    space: if log { SpaceTag::Log } else { SpaceTag::Linear },
                    axes,
                }
            }
            Formula::Implies(a, b) => {
                if log {
                    return Err(not_nnf(f));
                }
                let ga = self.eval(tape, a)?;
                let gb = self.eval(tape, b)?;
                self.expect_linear(&ga, "->", f)?;
                self.expect_linear(&gb, "->", f)?;
                let (nodes, axes) = self.align(tape, &[ga, gb])?;
                // 1 - a + a b
                let ab = tape.mul(nodes[0], nodes[1])?;
                let d = tape.sub(ab, nodes[0])?;
                let one = tape.constant(Tensor::full(tape.shape(d), 1.0));
                Grounded {
                    node: tape.add(one, d)?,
                    space: SpaceTag::Linear,
                    axes,
                }
            }
            Formula::Forall(q) => self.quantifier(tape, f, q, true)?,
            Formula::Exists(q) => self.quantifier(tape, f, q, false)?,
        };
        self.record(
            if matches!(f, Formula::Forall(_) | Formula::Exists(_)) {
                TraceRole::Quantifier
            } else {
                TraceRole::Connective
            },
            f,
            &g,
        );
        Ok(g)
    }

    fn expect_linear(&self, g: &Grounded, operator: &'static str, f: &Formula) -> Result<(), SemanticsError> {
        if g.space == SpaceTag::Log {
            return Err(SemanticsError::SpaceMixing {
                operator,
                formula: pretty_print(f),
            });
        }
        Ok(())
    }

    /// Broadcasts every operand to the union of their axes.
    fn align(&self, tape: &mut Tape, gs: &[Grounded]) -> Result<(Vec<NodeId>, Vec<usize>), SemanticsError> {
        let mut axes: Vec<usize> = gs.iter().flat_map(|g| g.axes.iter().copied()).collect();
        axes.sort_unstable();
        axes.dedup();
        let shape = self.shape_of(&axes);
        let nodes = gs
            .iter()
            .map(|g| {
                if g.axes == axes {
                    Ok(g.node)
                } else {
                    let map: Vec<usize> = g.axes.iter().map(|a| axes.binary_search(a).unwrap()).collect();
                    tape.broadcast(g.node, &shape, &map)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok((nodes, axes))
    }

    fn log_or(&self, tape: &mut Tape, nodes: &[NodeId], axes: &[usize]) -> Result<NodeId, SemanticsError> {
        if nodes.len() == 1 {
            return Ok(nodes[0]);
        }
        let mut shape = self.shape_of(axes);
        shape.push(1);
        let cols = nodes
            .iter()
            .map(|&n| tape.reshape(n, &shape))
            .collect::<Result<Vec<_>, _>>()?;
        let last = shape.len() - 1;
        let stacked = tape.concat(&cols, last)?;
        self.smooth_max(tape, stacked, &[last], None)
    }

    /// The configured relaxation of max for log-space disjunction and
    /// existential quantification.
    fn smooth_max(
        &self,
        tape: &mut Tape,
        x: NodeId,
        axes: &[usize],
        mask: Option<&[bool]>,
    ) -> Result<NodeId, SemanticsError> {
        match self.cfg.kind {
            SemanticsKind::LogLtn | SemanticsKind::LogLtnSum => lme_node(tape, x, axes, mask, self.alpha),
            SemanticsKind::LogLtnLse => lse_node(tape, x, axes, mask, self.alpha),
            SemanticsKind::LogLtnMax => Ok(tape.max(x, axes, mask)?),
            SemanticsKind::ProdRl | SemanticsKind::StableRl => {
                unreachable!("linear configurations have no log disjunction")
            }
        }
    }

    fn bound_position(&self, var: &str) -> Option<usize> {
        self.vars.iter().rev().find(|(v, _)| v == var).map(|&(_, p)| p)
    }

    fn quantifier(
        &mut self,
        tape: &mut Tape,
        f: &Formula,
        q: &Quantified,
        universal: bool,
    ) -> Result<Grounded, SemanticsError> {
        let scope_mark = self.scope.len();
        let vars_mark = self.vars.len();
        let comp_mark = self.compactions.len();
        let result = self.quantifier_inner(tape, f, q, universal, scope_mark);
        self.scope.truncate(scope_mark);
        self.vars.truncate(vars_mark);
        self.compactions.truncate(comp_mark);
        result
    }

    fn quantifier_inner(
        &mut self,
        tape: &mut Tape,
        f: &Formula,
        q: &Quantified,
        universal: bool,
        scope_mark: usize,
    ) -> Result<Grounded, SemanticsError> {
        let env = self.env;
        for v in &q.vars {
            let var = env
                .variables
                .get(v)
                .ok_or_else(|| SemanticsError::UnknownVariable(v.clone()))?;
            let pos = match self.scope[scope_mark..].iter().position(|(a, _)| *a == var.axis) {
                Some(i) => scope_mark + i,
                None => {
                    if self.scope.iter().any(|(a, _)| *a == var.axis) {
                        return Err(SemanticsError::AxisRebound {
                            axis: var.axis.clone(),
                            variable: v.clone(),
                        });
                    }
                    self.scope.push((var.axis.clone(), var.domain.len()));
                    self.scope.len() - 1
                }
            };
            self.vars.push((v.clone(), pos));
        }
        let new_axes: Vec<usize> = (scope_mark..self.scope.len()).collect();

        let guard = match &q.guard {
            None => None,
            Some(name) => {
                let g = env
                    .guards
                    .get(name)
                    .ok_or_else(|| SemanticsError::UnknownGuard(name.clone()))?;
                let mut gpos: Vec<usize> = Vec::new();
                for v in &g.vars {
                    let p = self.bound_position(v).ok_or_else(|| SemanticsError::GuardVariable {
                        guard: name.clone(),
                        variable: v.clone(),
                    })?;
                    if self.compactions.iter().any(|c| c.inner.contains(&p)) {
                        return Err(SemanticsError::Config(format!(
                            "guard `{name}` ranges over `{v}`, which an enclosing guard already restricts"
                        )));
                    }
                    if !gpos.contains(&p) {
                        gpos.push(p);
                    }
                }
                let expected: usize = gpos.iter().map(|&p| self.scope[p].1).product();
                if expected != g.mask.len() {
                    return Err(SemanticsError::GuardShape {
                        guard: name.clone(),
                        expected,
                        got: g.mask.len(),
                    });
                }
                Some((name.clone(), gpos, &g.mask))
            }
        };

        // guards over the new axes are compacted, others reduce densely
        let compact = match &guard {
            Some((name, gpos, m)) if !self.dense_guards && gpos.iter().any(|p| new_axes.contains(p)) => {
                let c = self.compaction(name, gpos, m, &new_axes)?;
                self.compactions.push(c);
                Some(self.compactions.len() - 1)
            }
            _ => None,
        };
        let body = self.eval(tape, &q.body)?;

        let mut reduce_axes: Vec<usize> = new_axes.clone();
        let mut guard_axes: Vec<usize> = Vec::new();
        if let Some(ci) = compact {
            let c = &self.compactions[ci];
            reduce_axes.retain(|a| !c.inner.contains(a));
            reduce_axes.push(c.q);
            guard_axes = c.outer.clone();
            guard_axes.push(c.q);
        } else if let Some((_, gpos, _)) = &guard {
            guard_axes = gpos.clone();
        }
        let mut target: Vec<usize> = body.axes.clone();
        target.extend(reduce_axes.iter().copied());
        target.extend(guard_axes.iter().copied());
        target.sort_unstable();
        target.dedup();
        let shape = self.shape_of(&target);
        let input = if body.axes == target {
            body.node
        } else {
            let map: Vec<usize> = body.axes.iter().map(|a| target.binary_search(a).unwrap()).collect();
            tape.broadcast(body.node, &shape, &map)?
        };
        let reduced: Vec<usize> = reduce_axes.iter().map(|a| target.binary_search(a).unwrap()).collect();

        let mask = match (&guard, compact) {
            (None, _) => None,
            (Some(_), Some(ci)) => {
                let c = &self.compactions[ci];
                if c.valid.iter().all(|&b| b) {
                    None
                } else {
                    let map: Vec<usize> = guard_axes.iter().map(|a| target.binary_search(a).unwrap()).collect();
                    Some(broadcast_mask(&c.valid, &self.shape_of(&guard_axes), &shape, &map)?)
                }
            }
            (Some((name, gpos, m)), None) => {
                let gshape = self.shape_of(gpos);
                let map: Vec<usize> = gpos.iter().map(|a| target.binary_search(a).unwrap()).collect();
                let full = broadcast_mask(m, &gshape, &shape, &map)?;
                if !full.iter().any(|&b| b) {
                    return Err(SemanticsError::EmptyGuard { guard: name.clone() });
                }
                let counts = group_counts(&shape, &reduced, Some(&full))?;
                if counts.data().contains(&0.0) {
                    return Err(SemanticsError::EmptyGuardSlice { guard: name.clone() });
                }
                Some(full)
            }
        };
        if self.trace.is_some() {
            let axes = self.names_of(&target);
            if let Some(trace) = self.trace.as_mut() {
                trace.push(TraceEntry {
                    role: TraceRole::QuantifierInput,
                    formula: f.clone(),
                    node: input,
                    axes,
                    reduced: reduced.clone(),
                    mask: mask.clone(),
                });
            }
        }
        let mask = mask.as_deref();
        let eps = self.cfg.epsilon;
        let (node, space) = match (self.cfg.kind, universal) {
            (SemanticsKind::LogLtnSum, true) => (tape.sum(input, &reduced, mask)?, SpaceTag::Log),
            (k, true) if k.is_log() => (tape.mean(input, &reduced, mask)?, SpaceTag::Log),
            (k, false) if k.is_log() => (self.smooth_max(tape, input, &reduced, mask)?, SpaceTag::Log),
            (SemanticsKind::ProdRl, true) => {
                let logs = match body.space {
                    SpaceTag::Log => input,
                    SpaceTag::Linear => {
                        let s = squeeze(tape, input, eps)?;
                        tape.log(s)
                    }
                };
                (tape.sum(logs, &reduced, mask)?, SpaceTag::Log)
            }
            (SemanticsKind::ProdRl, false) => {
                self.expect_linear(&body, "exists", f)?;
                (pmean_node(tape, input, &reduced, mask, self.p, eps)?, SpaceTag::Linear)
            }
            (_, true) => {
                self.expect_linear(&body, "forall", f)?;
                (
                    pmean_error_node(tape, input, &reduced, mask, self.p, eps)?,
                    SpaceTag::Linear,
                )
            }
            (_, false) => {
                self.expect_linear(&body, "exists", f)?;
                (pmean_node(tape, input, &reduced, mask, self.p, eps)?, SpaceTag::Linear)
            }
        };
        let axes: Vec<usize> = target.into_iter().filter(|a| !reduce_axes.contains(a)).collect();
        Ok(Grounded { node, space, axes })
    }

    /// Lists the tuples selected by a guard, grouped by the guard's axes
    /// outside `new_axes`, and opens the compact axis in scope.
    fn compaction(
        &mut self,
        name: &str,
        gpos: &[usize],
        mask: &[bool],
        new_axes: &[usize],
    ) -> Result<Compaction, SemanticsError> {
        let mut outer: Vec<usize> = gpos.iter().copied().filter(|p| !new_axes.contains(p)).collect();
        let mut inner: Vec<usize> = gpos.iter().copied().filter(|p| new_axes.contains(p)).collect();
        outer.sort_unstable();
        inner.sort_unstable();
        let gshape = self.shape_of(gpos);
        let outer_shape = self.shape_of(&outer);
        let n_outer: usize = outer_shape.iter().product();
        let outer_slot: Vec<usize> = outer
            .iter()
            .map(|p| gpos.iter().position(|g| g == p).unwrap())
            .collect();
        let inner_slot: Vec<usize> = inner
            .iter()
            .map(|p| gpos.iter().position(|g| g == p).unwrap())
            .collect();

        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_outer];
        let mut coord = vec![0usize; gshape.len()];
        for &selected in mask {
            if selected {
                let o = outer_slot
                    .iter()
                    .zip(&outer_shape)
                    .fold(0, |acc, (&s, &n)| acc * n + coord[s]);
                groups[o].extend(inner_slot.iter().map(|&s| coord[s]));
            }
            next_coord(&mut coord, &gshape);
        }
        let width = inner.len();
        let kmax = groups.iter().map(|g| g.len() / width).max().unwrap_or(0);
        if kmax == 0 {
            return Err(SemanticsError::EmptyGuard {
                guard: name.to_string(),
            });
        }
        if groups.iter().any(Vec::is_empty) {
            return Err(SemanticsError::EmptyGuardSlice {
                guard: name.to_string(),
            });
        }
        let mut coords = vec![0usize; n_outer * kmax * width];
        let mut valid = vec![false; n_outer * kmax];
        for (o, g) in groups.iter().enumerate() {
            let base = o * kmax * width;
            coords[base..base + g.len()].copy_from_slice(g);
            valid[o * kmax..o * kmax + g.len() / width]
                .iter_mut()
                .for_each(|b| *b = true);
        }
        self.scope.push((format!("|{name}"), kmax));
        Ok(Compaction {
            outer,
            inner,
            q: self.scope.len() - 1,
            kmax,
            coords,
            valid,
        })
    }

    /// Gathers an atom's values onto the compact axes of every active
    /// compaction that restricts one of its axes.
    fn lift(&self, tape: &mut Tape, mut g: Grounded) -> Result<Grounded, SemanticsError> {
        for c in &self.compactions {
            if !g.axes.iter().any(|a| c.inner.contains(a)) {
                continue;
            }
            let mut target: Vec<usize> = g.axes.iter().copied().filter(|a| !c.inner.contains(a)).collect();
            target.extend(c.outer.iter().copied());
            target.push(c.q);
            target.sort_unstable();
            target.dedup();
            let shape = self.shape_of(&target);
            let src_shape = self.shape_of(&g.axes);
            let mut strides = vec![1usize; src_shape.len()];
            for i in (0..src_shape.len().saturating_sub(1)).rev() {
                strides[i] = strides[i + 1] * src_shape[i + 1];
            }
            // where each source axis reads its coordinate from
            enum From {
                Target(usize),
                Inner(usize),
            }
            let from: Vec<From> = g
                .axes
                .iter()
                .map(|a| match c.inner.iter().position(|i| i == a) {
                    Some(s) => From::Inner(s),
                    None => From::Target(target.binary_search(a).unwrap()),
                })
                .collect();
            let outer_at: Vec<usize> = c.outer.iter().map(|a| target.binary_search(a).unwrap()).collect();
            let q_at = target.binary_search(&c.q).unwrap();
            let width = c.inner.len();
            let n: usize = shape.iter().product();
            let mut idx = Vec::with_capacity(n);
            let mut coord = vec![0usize; shape.len()];
            for _ in 0..n {
                let o = outer_at.iter().fold(0, |acc, &t| acc * shape[t] + coord[t]);
                let base = (o * c.kmax + coord[q_at]) * width;
                let flat: usize = from
                    .iter()
                    .zip(&strides)
                    .map(|(fr, st)| {
                        st * match *fr {
                            From::Target(t) => coord[t],
                            From::Inner(s) => c.coords[base + s],
                        }
                    })
                    .sum();
                idx.push(flat);
                next_coord(&mut coord, &shape);
            }
            let numel: usize = src_shape.iter().product();
            let flat = tape.reshape(g.node, &[numel])?;
            let picked = tape.select(flat, 0, &idx)?;
            g.node = tape.reshape(picked, &shape)?;
            g.axes = target;
        }
        Ok(g)
    }

    fn resolve_args(&self, a: &Atom) -> Result<Vec<Arg<'a>>, SemanticsError> {
        let env = self.env;
        a.args
            .iter()
            .map(|t| match t {
                Term::Const(c) => match env.constants.get(c) {
                    Some(Constant::Features(v)) => Ok(Arg::Features(v)),
                    Some(Constant::Index(i)) => Ok(Arg::Index(*i)),
                    None => Err(SemanticsError::UnknownConstant(c.clone())),
                },
                Term::Var(v) => {
                    let pos = self
                        .bound_position(v)
                        .ok_or_else(|| SemanticsError::Unbound { variable: v.clone() })?;
                    let domain = &env
                        .variables
                        .get(v)
                        .ok_or_else(|| SemanticsError::UnknownVariable(v.clone()))?
                        .domain;
                    Ok(Arg::Var { pos, domain })
                }
            })
            .collect()
    }

    fn atom(&mut self, tape: &mut Tape, a: &Atom, negated: bool) -> Result<Grounded, SemanticsError> {
        let env = self.env;
        let pred = env
            .predicates
            .get(&a.predicate)
            .ok_or_else(|| SemanticsError::UnknownPredicate(a.predicate.clone()))?;
        let args = self.resolve_args(a)?;
        let arg_err = |message: String| SemanticsError::Argument {
            predicate: a.predicate.clone(),
            message,
        };
        match pred {
            PredicateGrounding::Neural(model) => {
                let params = self
                    .bindings
                    .get(&a.predicate)
                    .ok_or_else(|| arg_err("parameters are not bound".into()))?;
                let (feat, class) = match model.head {
                    Head::Sigmoid => (&args[..], None),
                    Head::Softmax { .. } => match args.split_last() {
                        Some((last, rest)) => (rest, Some(last)),
                        None => return Err(arg_err("softmax predicate needs a class argument".into())),
                    },
                };
                let mut f_axes: Vec<usize> = Vec::new();
                for arg in feat {
                    match arg {
                        Arg::Var {
                            pos,
                            domain: Domain::Features(_),
                        } => f_axes.push(*pos),
                        Arg::Features(_) => {}
                        _ => return Err(arg_err("expected a feature argument".into())),
                    }
                }
                f_axes.sort_unstable();
                f_axes.dedup();
                let input = self.feature_rows(feat, &f_axes);
                let width = input.shape()[1];
                if width != model.input_dim() {
                    return Err(arg_err(format!(
                        "arguments give {width} input features, model expects {}",
                        model.input_dim()
                    )));
                }
                let (classes, class_pos): (Vec<usize>, Option<usize>) = match class {
                    None => (Vec::new(), None),
                    Some(Arg::Index(k)) => (vec![*k], None),
                    Some(Arg::Var {
                        pos,
                        domain: Domain::Indices(l),
                    }) => {
                        if f_axes.contains(pos) {
                            return Err(arg_err("class variable shares an axis with a feature argument".into()));
                        }
                        (l.clone(), Some(*pos))
                    }
                    Some(_) => return Err(arg_err("class argument must be index-typed".into())),
                };
                let x = tape.constant(input);
                let cls = class.map(|_| classes.as_slice());
                let out = if negated {
                    model.log_not_truth(tape, params, x, cls)?
                } else {
                    model.log_truth(tape, params, x, cls)?
                };
                let mut src_axes = f_axes.clone();
                let mut shape = self.shape_of(&f_axes);
                if let Some(cp) = class_pos {
                    src_axes.push(cp);
                    shape.push(classes.len());
                }
                let out = tape.reshape(out, &shape)?;
                let (mut node, axes) = self.sort_axes(tape, out, &src_axes)?;
                let space = if self.log_kind() {
                    SpaceTag::Log
                } else {
                    node = tape.exp(node);
                    SpaceTag::Linear
                };
                Ok(Grounded { node, space, axes })
            }
            PredicateGrounding::Cosine => {
                if args.len() != 2 {
                    return Err(arg_err("cosine predicate is binary".into()));
                }
                let mut axes: Vec<usize> = Vec::new();
                for arg in &args {
                    match arg {
                        Arg::Var {
                            pos,
                            domain: Domain::Features(_),
                        } => axes.push(*pos),
                        Arg::Features(_) => {}
                        _ => return Err(arg_err("expected a feature argument".into())),
                    }
                }
                axes.sort_unstable();
                axes.dedup();
                let shape = self.shape_of(&axes);
                let n: usize = shape.iter().product();
                let mut vals = Vec::with_capacity(n);
                let mut coord = vec![0usize; shape.len()];
                for _ in 0..n {
                    let u = self.row_of(&args[0], &axes, &coord);
                    let v = self.row_of(&args[1], &axes, &coord);
                    let c = cosine_predicate(u, v)?;
                    if c < 0.0 {
                        return Err(SemanticsError::NotATruthDegree {
                            predicate: a.predicate.clone(),
                            value: c,
                        });
                    }
                    vals.push(c);
                    next_coord(&mut coord, &shape);
                }
                let node = tape.constant(Tensor::new(shape, vals)?);
                self.linear_leaf(tape, node, axes, negated)
            }
            PredicateGrounding::Table(values) => {
                let param = self
                    .bindings
                    .get(&a.predicate)
                    .and_then(|p| p.first().copied())
                    .ok_or_else(|| arg_err("parameters are not bound".into()))?;
                if values.rank() != args.len() {
                    return Err(arg_err(format!(
                        "table has rank {} but the atom has {} arguments",
                        values.rank(),
                        args.len()
                    )));
                }
                let mut node = param;
                let mut src_axes = Vec::new();
                let mut shape = Vec::new();
                for (i, arg) in args.iter().enumerate() {
                    let idx = match arg {
                        Arg::Index(k) => vec![*k],
                        Arg::Var {
                            pos,
                            domain: Domain::Indices(l),
                        } => {
                            if src_axes.contains(pos) {
                                return Err(arg_err("repeated variable in a table atom".into()));
                            }
                            src_axes.push(*pos);
                            shape.push(l.len());
                            l.clone()
                        }
                        _ => return Err(arg_err("table arguments must be index-typed".into())),
                    };
                    node = tape.select(node, i, &idx)?;
                }
                let node = tape.reshape(node, &shape)?;
                let (node, axes) = self.sort_axes(tape, node, &src_axes)?;
                self.linear_leaf(tape, node, axes, negated)
            }
        }
    }

    /// Converts a linear atom value to the configured space.
    fn linear_leaf(
        &self,
        tape: &mut Tape,
        node: NodeId,
        axes: Vec<usize>,
        negated: bool,
    ) -> Result<Grounded, SemanticsError> {
        if !self.log_kind() {
            return Ok(Grounded {
                node,
                space: SpaceTag::Linear,
                axes,
            });
        }
        let v = if negated { complement(tape, node)? } else { node };
        let s = squeeze(tape, v, self.cfg.epsilon)?;
        Ok(Grounded {
            node: tape.log(s),
            space: SpaceTag::Log,
            axes,
        })
    }

    /// Permutes a node whose axes are `src_axes` into increasing scope order.
    fn sort_axes(
        &self,
        tape: &mut Tape,
        node: NodeId,
        src_axes: &[usize],
    ) -> Result<(NodeId, Vec<usize>), SemanticsError> {
        let mut sorted = src_axes.to_vec();
        sorted.sort_unstable();
        if sorted == src_axes {
            return Ok((node, sorted));
        }
        let map: Vec<usize> = src_axes.iter().map(|a| sorted.binary_search(a).unwrap()).collect();
        let shape = self.shape_of(&sorted);
        Ok((tape.broadcast(node, &shape, &map)?, sorted))
    }

    fn row_of<'b>(&self, arg: &'b Arg<'a>, axes: &[usize], coord: &[usize]) -> &'b [f64] {
        match arg {
            Arg::Features(v) => v,
            Arg::Var {
                pos,
                domain: Domain::Features(t),
            } => {
                let r = coord[axes.binary_search(pos).unwrap()];
                let d = t.shape()[1];
                &t.data()[r * d..(r + 1) * d]
            }
            _ => unreachable!("checked by caller"),
        }
    }

    /// Input matrix with one row per element of the cross product of
    /// `axes`, concatenating the arguments' feature rows.
    fn feature_rows(&self, args: &[Arg<'a>], axes: &[usize]) -> Tensor {
        let shape = self.shape_of(axes);
        let rows: usize = shape.iter().product();
        let width: usize = args
            .iter()
            .map(|a| match a {
                Arg::Features(v) => v.len(),
                Arg::Var {
                    domain: Domain::Features(t),
                    ..
                } => t.shape()[1],
                _ => 0,
            })
            .sum();
        // common case: a single variable argument, rows already in order
        if let [Arg::Var {
            domain: Domain::Features(t),
            ..
        }] = args
        {
            return t.clone();
        }
        let mut data = Vec::with_capacity(rows * width);
        let mut coord = vec![0usize; shape.len()];
        for _ in 0..rows {
            for a in args {
                data.extend_from_slice(self.row_of(a, axes, &coord));
            }
            next_coord(&mut coord, &shape);
        }
        Tensor::matrix(rows, width, data)
    }
}

fn next_coord(coord: &mut [usize], shape: &[usize]) {
    for ax in (0..shape.len()).rev() {
        coord[ax] += 1;
        if coord[ax] < shape[ax] {
            return;
        }
        coord[ax] = 0;
    }
}

fn fold(
    tape: &mut Tape,
    nodes: &[NodeId],
    op: impl Fn(&mut Tape, NodeId, NodeId) -> Result<NodeId, crate::graph::GraphError>,
) -> Result<NodeId, SemanticsError> {
    let mut acc = nodes[0];
    for &n in &nodes[1..] {
        acc = op(tape, acc, n)?;
    }
    Ok(acc)
}

fn not_nnf(f: &Formula) -> SemanticsError {
    SemanticsError::NotNnf {
        formula: pretty_print(f),
    }
}

/// Knowledgebase satisfaction from closed formula groundings: mean of
/// log-truths (sum for `LogLtnSum`), sum of log-truths for `ProdRl`
/// (linear results are logged first), `pmean_error` for `StableRl`.
pub fn sat_aggregate(
    tape: &mut Tape,
    truths: &[TruthBatch],
    cfg: &SemanticsConfig,
    step: usize,
) -> Result<TruthBatch, SemanticsError> {
    if truths.is_empty() {
        return Err(SemanticsError::Config("empty knowledgebase".into()));
    }
    if truths.iter().any(|t| !t.is_scalar() || !tape.shape(t.node).is_empty()) {
        return Err(SemanticsError::NotScalar);
    }
    let mut nodes = Vec::with_capacity(truths.len());
    for t in truths {
        let node = match (cfg.kind, t.space) {
            (SemanticsKind::ProdRl, SpaceTag::Linear) => {
                let s = squeeze(tape, t.node, cfg.epsilon)?;
                tape.log(s)
            }
            (SemanticsKind::StableRl, SpaceTag::Linear) => t.node,
            (k, SpaceTag::Log) if k != SemanticsKind::StableRl => t.node,
            _ => return Err(SemanticsError::MixedSpaces),
        };
        nodes.push(tape.reshape(node, &[1])?);
    }
    if nodes.len() == 1 {
        let space = if cfg.kind == SemanticsKind::StableRl {
            SpaceTag::Linear
        } else {
            SpaceTag::Log
        };
        return Ok(TruthBatch {
            node: tape.reshape(nodes[0], &[])?,
            space,
            free_vars: Vec::new(),
        });
    }
    let stacked = tape.concat(&nodes, 0)?;
    let (node, space) = match cfg.kind {
        SemanticsKind::LogLtnSum | SemanticsKind::ProdRl => (tape.sum(stacked, &[0], None)?, SpaceTag::Log),
        SemanticsKind::StableRl => (
            pmean_error_node(tape, stacked, &[0], None, cfg.p.value(step), cfg.epsilon)?,
            SpaceTag::Linear,
        ),
        _ => (tape.mean(stacked, &[0], None)?, SpaceTag::Log),
    };
    Ok(TruthBatch {
        node,
        space,
        free_vars: Vec::new(),
    })
}

/// The truth space `f` grounds to under `kind`, decided from the syntax
/// alone. Reports the same `NotNnf` and `SpaceMixing` errors as grounding.
pub fn infer_space(f: &Formula, kind: SemanticsKind) -> Result<SpaceTag, SemanticsError> {
    use SpaceTag::{Linear, Log};
    let linear = |g: &Formula, operator: &'static str| -> Result<(), SemanticsError> {
        match infer_space(g, kind)? {
            Linear => Ok(()),
            Log => Err(SemanticsError::SpaceMixing {
                operator,
                formula: pretty_print(f),
            }),
        }
    };
    if kind.is_log() {
        return match f {
            Formula::Atom(_) => Ok(Log),
            Formula::Not(inner) if matches!(inner.as_ref(), Formula::Atom(_)) => Ok(Log),
            Formula::Not(_) | Formula::Implies(..) => Err(not_nnf(f)),
            Formula::And(cs) | Formula::Or(cs) => {
                for c in cs {
                    infer_space(c, kind)?;
                }
                Ok(Log)
            }
            Formula::Forall(q) | Formula::Exists(q) => infer_space(&q.body, kind).map(|_| Log),
        };
    }
    match f {
        Formula::Atom(_) => Ok(Linear),
        Formula::Not(inner) => linear(inner, "not").map(|_| Linear),
        Formula::And(cs) | Formula::Or(cs) => {
            let op = if matches!(f, Formula::And(_)) { "and" } else { "or" };
            for c in cs {
                linear(c, op)?;
            }
            Ok(Linear)
        }
        Formula::Implies(a, b) => {
            linear(a, "->")?;
            linear(b, "->")?;
            Ok(Linear)
        }
        Formula::Forall(q) if kind == SemanticsKind::ProdRl => infer_space(&q.body, kind).map(|_| Log),
        Formula::Forall(q) => linear(&q.body, "forall").map(|_| Linear),
        Formula::Exists(q) => linear(&q.body, "exists").map(|_| Linear),
    }
}
