//! Negation normal form.
//!
//! Implications are rewritten with `(a -> b) == (not a or b)` and negations
//! are pushed onto atoms with the De Morgan duals, including the quantifier
//! duals. A guard stays attached to its quantifier when the quantifier is
//! flipped: it restricts the domain, not the matrix.

use crate::formula::{Formula, Quantified};

/// Rewrites `f` so that it contains no implication and every negation wraps
/// an atom. Output size is linear in the input size.
pub fn to_nnf(f: &Formula) -> Formula {
    rewrite(f, false)
}

/// True iff `f` contains no implication and every negation wraps an atom.
pub fn is_nnf(f: &Formula) -> bool {
    match f {
        Formula::Atom(_) => true,
        Formula::Not(c) => matches!(c.as_ref(), Formula::Atom(_)),
        Formula::And(cs) | Formula::Or(cs) => cs.iter().all(is_nnf),
        Formula::Implies(..) => false,
        Formula::Forall(q) | Formula::Exists(q) => is_nnf(&q.body),
    }
}

fn rewrite(f: &Formula, negated: bool) -> Formula {
    match (f, negated) {
        (Formula::Atom(_), false) => f.clone(),
        (Formula::Atom(_), true) => Formula::not(f.clone()),
        (Formula::Not(c), _) => rewrite(c, !negated),
        (Formula::And(cs), false) => Formula::And(cs.iter().map(|c| rewrite(c, false)).collect()),
        (Formula::And(cs), true) => Formula::Or(cs.iter().map(|c| rewrite(c, true)).collect()),
        (Formula::Or(cs), false) => Formula::Or(cs.iter().map(|c| rewrite(c, false)).collect()),
        (Formula::Or(cs), true) => Formula::And(cs.iter().map(|c| rewrite(c, true)).collect()),
        (Formula::Implies(a, b), false) => Formula::Or(vec![rewrite(a, true), rewrite(b, false)]),
        (Formula::Implies(a, b), true) => Formula::And(vec![rewrite(a, false), rewrite(b, true)]),
        (Formula::Forall(q), false) => Formula::Forall(requantify(q, false)),
        (Formula::Forall(q), true) => Formula::Exists(requantify(q, true)),
        (Formula::Exists(q), false) => Formula::Exists(requantify(q, false)),
        (Formula::Exists(q), true) => Formula::Forall(requantify(q, true)),
    }
}

fn requantify(q: &Quantified, negated: bool) -> Quantified {
    Quantified {
        vars: q.vars.clone(),
        guard: q.guard.clone(),
        body: Box::new(rewrite(&q.body, negated)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{parse_formula, Term};
    use proptest::prelude::*;

    fn atom(n: &str) -> Formula {
        Formula::atom(n, vec![])
    }

    #[test]
    fn de_morgan_on_disjunction() {
        let f = Formula::not(Formula::or(vec![atom("A"), atom("B")]));
        assert_eq!(
            to_nnf(&f),
            Formula::and(vec![Formula::not(atom("A")), Formula::not(atom("B"))])
        );
    }

    #[test]
    fn implication_becomes_disjunction() {
        let f = Formula::implies(atom("A"), atom("B"));
        assert_eq!(to_nnf(&f), Formula::or(vec![Formula::not(atom("A")), atom("B")]));
    }

    #[test]
    fn double_negation_cancels() {
        assert_eq!(to_nnf(&Formula::not(Formula::not(atom("A")))), atom("A"));
    }

    #[test]
    fn negated_forall_becomes_exists() {
        let pu = Formula::atom("P", vec![Term::var("u")]);
        let f = Formula::not(Formula::forall(&["u"], None, pu.clone()));
        assert_eq!(to_nnf(&f), Formula::exists(&["u"], None, Formula::not(pu)));
    }

    #[test]
    fn guard_survives_negation() {
        let f = parse_formula("not (exists (x | g) (P(x)))").unwrap();
        assert_eq!(to_nnf(&f), parse_formula("forall (x | g) (not P(x))").unwrap());
    }

    #[test]
    fn is_nnf_examples() {
        assert!(is_nnf(&Formula::and(vec![
            Formula::not(atom("A")),
            Formula::not(atom("B"))
        ])));
        assert!(!is_nnf(&Formula::not(Formula::or(vec![atom("A"), atom("B")]))));
        assert!(is_nnf(&Formula::atom("P", vec![Term::var("u")])));
        assert!(!is_nnf(&Formula::implies(atom("A"), atom("B"))));
    }

    fn arb_formula() -> impl Strategy<Value = Formula> {
        let leaf = (0usize..3).prop_map(|i| Formula::atom(["P", "Q", "R"][i], vec![Term::var("u")]));
        leaf.prop_recursive(5, 48, 3, |inner| {
            prop_oneof![
                inner.clone().prop_map(Formula::not),
                proptest::collection::vec(inner.clone(), 2..4).prop_map(Formula::And),
                proptest::collection::vec(inner.clone(), 2..4).prop_map(Formula::Or),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::implies(a, b)),
                inner.clone().prop_map(|b| Formula::forall(&["u"], None, b)),
                inner.prop_map(|b| Formula::exists(&["u"], Some("g"), b)),
            ]
        })
    }

    proptest! {
        #[test]
        fn output_is_nnf(f in arb_formula()) {
            prop_assert!(is_nnf(&to_nnf(&f)));
        }

        #[test]
        fn idempotent(f in arb_formula()) {
            let once = to_nnf(&f);
            prop_assert_eq!(to_nnf(&once), once);
        }

        #[test]
        fn size_grows_linearly(f in arb_formula()) {
            // each implication adds one Or node and each atom at most one Not
            prop_assert!(to_nnf(&f).size() <= 2 * f.size());
        }

        #[test]
        fn preserves_free_variables(f in arb_formula()) {
            prop_assert_eq!(to_nnf(&f).free_variables(), f.free_variables());
        }
    }
}
