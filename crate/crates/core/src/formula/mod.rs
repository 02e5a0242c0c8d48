//! Formula AST and the `.kb` text format.

mod ast;
mod parser;
mod printer;

pub use ast::{is_identifier, Atom, Formula, Knowledgebase, NamedFormula, Quantified, Term};
pub use parser::{parse_formula, parse_kb};
pub use printer::pretty_print;

use std::collections::BTreeSet;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        message: String,
        line: usize,
        column: usize,
    },
    #[error("unbound variable `{variable}` at {line}:{column}")]
    Unbound {
        variable: String,
        line: usize,
        column: usize,
    },
    #[error("knowledgebase contains no formulas")]
    EmptyKnowledgebase,
}

/// Unbound variable names of `f`; empty for closed formulas.
pub fn free_variables(f: &Formula) -> BTreeSet<String> {
    f.free_variables()
}

#[cfg(test)]
mod tests;
