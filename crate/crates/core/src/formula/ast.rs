use std::collections::BTreeSet;
use std::fmt;

/// An argument of an atom.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    /// A variable bound by an enclosing quantifier.
    Var(String),
    /// A named individual.
    Const(String),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Self {
        Term::Var(name.into())
    }

    pub fn constant(name: impl Into<String>) -> Self {
        Term::Const(name.into())
    }

    pub fn name(&self) -> &str {
        match self {
            Term::Var(n) | Term::Const(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<Term>,
}

/// Body of a quantified formula. `guard` names a host-provided mask that
/// restricts the aggregation domain.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Quantified {
    pub vars: Vec<String>,
    pub guard: Option<String>,
    pub body: Box<Formula>,
}

/// First-order fuzzy-logic formula.
///
/// `And`/`Or` are n-ary and keep their children in source order.
/// `Implies` is kept until the NNF pass so diagnostics can show the
/// formula as written.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    Atom(Atom),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Forall(Quantified),
    Exists(Quantified),
}

impl Formula {
    pub fn atom(predicate: impl Into<String>, args: Vec<Term>) -> Self {
        Formula::Atom(Atom {
            predicate: predicate.into(),
            args,
        })
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(child: Formula) -> Self {
        Formula::Not(Box::new(child))
    }

    /// Builds an n-ary conjunction. A single child is returned unchanged.
    ///
    /// # Panics
    /// Panics if `children` is empty.
    pub fn and(children: Vec<Formula>) -> Self {
        assert!(!children.is_empty(), "conjunction needs at least one child");
        if children.len() == 1 {
            return children.into_iter().next().unwrap();
        }
        Formula::And(children)
    }

    /// Builds an n-ary disjunction. A single child is returned unchanged.
    ///
    /// # Panics
    /// Panics if `children` is empty.
    pub fn or(children: Vec<Formula>) -> Self {
        assert!(!children.is_empty(), "disjunction needs at least one child");
        if children.len() == 1 {
            return children.into_iter().next().unwrap();
        }
        Formula::Or(children)
    }

    pub fn implies(antecedent: Formula, consequent: Formula) -> Self {
        Formula::Implies(Box::new(antecedent), Box::new(consequent))
    }

    pub fn forall(vars: &[&str], guard: Option<&str>, body: Formula) -> Self {
        Formula::Forall(Quantified::new(vars, guard, body))
    }

    pub fn exists(vars: &[&str], guard: Option<&str>, body: Formula) -> Self {
        Formula::Exists(Quantified::new(vars, guard, body))
    }

    /// Variables occurring in atoms that no enclosing quantifier binds.
    pub fn free_variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut bound = Vec::new();
        collect_free(self, &mut bound, &mut out);
        out
    }

    pub fn is_closed(&self) -> bool {
        self.free_variables().is_empty()
    }

    /// Number of AST nodes.
    pub fn size(&self) -> usize {
        match self {
            Formula::Atom(_) => 1,
            Formula::Not(c) => 1 + c.size(),
            Formula::And(cs) | Formula::Or(cs) => 1 + cs.iter().map(Formula::size).sum::<usize>(),
            Formula::Implies(a, b) => 1 + a.size() + b.size(),
            Formula::Forall(q) | Formula::Exists(q) => 1 + q.body.size(),
        }
    }

    /// Visits every atom in source order.
    pub fn for_each_atom<'a>(&'a self, f: &mut impl FnMut(&'a Atom)) {
        match self {
            Formula::Atom(a) => f(a),
            Formula::Not(c) => c.for_each_atom(f),
            Formula::And(cs) | Formula::Or(cs) => cs.iter().for_each(|c| c.for_each_atom(f)),
            Formula::Implies(a, b) => {
                a.for_each_atom(f);
                b.for_each_atom(f);
            }
            Formula::Forall(q) | Formula::Exists(q) => q.body.for_each_atom(f),
        }
    }

    /// Predicate names used by the formula, sorted.
    pub fn predicates(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.for_each_atom(&mut |a| {
            out.insert(a.predicate.clone());
        });
        out
    }

    /// Constant names used by the formula, sorted.
    pub fn constants(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.for_each_atom(&mut |a| {
            for t in &a.args {
                if let Term::Const(c) = t {
                    out.insert(c.clone());
                }
            }
        });
        out
    }

    /// Guard names used by the formula, sorted.
    pub fn guards(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        collect_guards(self, &mut out);
        out
    }
}

impl Quantified {
    pub fn new(vars: &[&str], guard: Option<&str>, body: Formula) -> Self {
        Quantified {
            vars: vars.iter().map(|v| v.to_string()).collect(),
            guard: guard.map(str::to_string),
            body: Box::new(body),
        }
    }
}

fn collect_free(f: &Formula, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
    match f {
        Formula::Atom(a) => {
            for t in &a.args {
                if let Term::Var(v) = t {
                    if !bound.iter().any(|b| b == v) {
                        out.insert(v.clone());
                    }
                }
            }
        }
        Formula::Not(c) => collect_free(c, bound, out),
        Formula::And(cs) | Formula::Or(cs) => cs.iter().for_each(|c| collect_free(c, bound, out)),
        Formula::Implies(a, b) => {
            collect_free(a, bound, out);
            collect_free(b, bound, out);
        }
        Formula::Forall(q) | Formula::Exists(q) => {
            let depth = bound.len();
            bound.extend(q.vars.iter().cloned());
            collect_free(&q.body, bound, out);
            bound.truncate(depth);
        }
    }
}

fn collect_guards(f: &Formula, out: &mut BTreeSet<String>) {
    match f {
        Formula::Atom(_) => {}
        Formula::Not(c) => collect_guards(c, out),
        Formula::And(cs) | Formula::Or(cs) => cs.iter().for_each(|c| collect_guards(c, out)),
        Formula::Implies(a, b) => {
            collect_guards(a, out);
            collect_guards(b, out);
        }
        Formula::Forall(q) | Formula::Exists(q) => {
            if let Some(g) = &q.guard {
                out.insert(g.clone());
            }
            collect_guards(&q.body, out);
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::printer::pretty_print(self))
    }
}

/// A formula with an optional label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamedFormula {
    pub name: Option<String>,
    pub formula: Formula,
}

/// Ordered, nonempty collection of closed formulas.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Knowledgebase {
    formulas: Vec<NamedFormula>,
}

impl Knowledgebase {
    /// Builds a knowledgebase, rejecting empty lists and open formulas.
    pub fn new(formulas: Vec<NamedFormula>) -> Result<Self, super::ParseError> {
        if formulas.is_empty() {
            return Err(super::ParseError::EmptyKnowledgebase);
        }
        for nf in &formulas {
            if let Some(v) = nf.formula.free_variables().into_iter().next() {
                return Err(super::ParseError::Unbound {
                    variable: v,
                    line: 0,
                    column: 0,
                });
            }
        }
        Ok(Knowledgebase { formulas })
    }

    pub fn from_formulas(formulas: Vec<Formula>) -> Result<Self, super::ParseError> {
        Self::new(
            formulas
                .into_iter()
                .map(|formula| NamedFormula { name: None, formula })
                .collect(),
        )
    }

    pub fn formulas(&self) -> &[NamedFormula] {
        &self.formulas
    }

    pub fn len(&self) -> usize {
        self.formulas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.formulas.is_empty()
    }

    /// Label of formula `i`: its name, or `phi{i}` when unnamed.
    pub fn label(&self, i: usize) -> String {
        self.formulas[i].name.clone().unwrap_or_else(|| format!("phi{i}"))
    }
}

/// True for nonempty `[A-Za-z_][A-Za-z0-9_]*` names.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}
