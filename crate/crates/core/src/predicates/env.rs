use std::collections::BTreeMap;

use super::model::PredicateModel;
use super::ModelError;
use crate::graph::Tensor;

/// Values a variable ranges over.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    /// One feature row per individual (`n x dim`).
    Features(Tensor),
    /// Class indices, used as the last argument of softmax predicates and
    /// as arguments of table predicates.
    Indices(Vec<usize>),
}

impl Domain {
    pub fn len(&self) -> usize {
        match self {
            Domain::Features(t) => t.shape()[0],
            Domain::Indices(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A variable grounding. Variables with the same `axis` are aligned: they
/// share one batch dimension and are quantified together, which gives the
/// diagonal pairing `(x1[i], x2[i])` instead of a cross product.
#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub domain: Domain,
    pub axis: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constant {
    Features(Vec<f64>),
    Index(usize),
}

/// Boolean mask over the cross product of `vars`' domains, row-major in
/// `vars` order. Variables sharing an axis count once.
#[derive(Debug, Clone, PartialEq)]
pub struct Guard {
    pub vars: Vec<String>,
    pub mask: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PredicateGrounding {
    Neural(PredicateModel),
    /// Fixed cosine similarity of two feature arguments.
    Cosine,
    /// Explicit truth table over index arguments; one axis per argument.
    /// Its entries are bound as parameters so their gradients can be read.
    Table(Tensor),
}

#[derive(Debug, Clone, Default)]
pub struct GroundingEnv {
    pub variables: BTreeMap<String, Variable>,
    pub constants: BTreeMap<String, Constant>,
    pub guards: BTreeMap<String, Guard>,
    pub predicates: BTreeMap<String, PredicateGrounding>,
}

impl GroundingEnv {
    pub fn new() -> Self {
        Self::default()
    }

    /// Variable on its own axis (named after the variable).
    pub fn add_variable(&mut self, name: &str, domain: Domain) -> Result<(), ModelError> {
        self.add_aligned_variable(name, domain, name)
    }

    pub fn add_aligned_variable(&mut self, name: &str, domain: Domain, axis: &str) -> Result<(), ModelError> {
        if domain.is_empty() {
            return Err(ModelError::Env(format!("variable `{name}` has an empty domain")));
        }
        if let Domain::Features(t) = &domain {
            if t.rank() != 2 {
                return Err(ModelError::Env(format!(
                    "variable `{name}` features must be a matrix, got shape {:?}",
                    t.shape()
                )));
            }
        }
        if let Some(other) = self
            .variables
            .iter()
            .find(|(n, v)| v.axis == axis && n.as_str() != name)
        {
            if other.1.domain.len() != domain.len() {
                return Err(ModelError::Env(format!(
                    "variable `{name}` has {} individuals but axis `{axis}` has {}",
                    domain.len(),
                    other.1.domain.len()
                )));
            }
        }
        self.variables.insert(
            name.to_string(),
            Variable {
                domain,
                axis: axis.to_string(),
            },
        );
        Ok(())
    }

    pub fn add_constant(&mut self, name: &str, value: Constant) {
        self.constants.insert(name.to_string(), value);
    }

    /// Registers a guard; the mask length must match the product of the
    /// distinct axes of `vars`.
    pub fn add_guard(&mut self, name: &str, vars: &[&str], mask: Vec<bool>) -> Result<(), ModelError> {
        let expected = self.axis_cardinality(vars)?;
        if mask.len() != expected {
            return Err(ModelError::Env(format!(
                "guard `{name}` mask has {} entries, expected {expected}",
                mask.len()
            )));
        }
        self.guards.insert(
            name.to_string(),
            Guard {
                vars: vars.iter().map(|s| s.to_string()).collect(),
                mask,
            },
        );
        Ok(())
    }

    pub fn add_predicate(&mut self, name: &str, grounding: PredicateGrounding) {
        self.predicates.insert(name.to_string(), grounding);
    }

    /// Distinct axes of `vars` in first-appearance order.
    pub fn axes_of(&self, vars: &[&str]) -> Result<Vec<(String, usize)>, ModelError> {
        let mut axes: Vec<(String, usize)> = Vec::new();
        for v in vars {
            let var = self
                .variables
                .get(*v)
                .ok_or_else(|| ModelError::Env(format!("unknown variable `{v}`")))?;
            if !axes.iter().any(|(a, _)| *a == var.axis) {
                axes.push((var.axis.clone(), var.domain.len()));
            }
        }
        Ok(axes)
    }

    fn axis_cardinality(&self, vars: &[&str]) -> Result<usize, ModelError> {
        Ok(self.axes_of(vars)?.iter().map(|(_, n)| n).product())
    }

    pub fn model(&self, name: &str) -> Option<&PredicateModel> {
        match self.predicates.get(name) {
            Some(PredicateGrounding::Neural(m)) => Some(m),
            _ => None,
        }
    }

    pub fn model_mut(&mut self, name: &str) -> Option<&mut PredicateModel> {
        match self.predicates.get_mut(name) {
            Some(PredicateGrounding::Neural(m)) => Some(m),
            _ => None,
        }
    }

    /// Names of neural predicates in a stable order.
    pub fn neural_predicates(&self) -> Vec<String> {
        self.predicates
            .iter()
            .filter(|(_, p)| matches!(p, PredicateGrounding::Neural(_)))
            .map(|(n, _)| n.clone())
            .collect()
    }
}
