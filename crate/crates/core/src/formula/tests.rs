use super::*;
use proptest::prelude::*;

fn p(name: &str, vars: &[&str]) -> Formula {
    Formula::atom(name, vars.iter().map(|v| Term::var(*v)).collect())
}

#[test]
fn parses_simple_universal() {
    let f = parse_formula("forall u (P(u))").unwrap();
    assert_eq!(f, Formula::forall(&["u"], None, p("P", &["u"])));
}

#[test]
fn parses_nested_symmetry_rule() {
    let f = parse_formula("forall u forall v (f(u,v) -> f(v,u))").unwrap();
    let expected = Formula::forall(
        &["u"],
        None,
        Formula::forall(&["v"], None, Formula::implies(p("f", &["u", "v"]), p("f", &["v", "u"]))),
    );
    assert_eq!(f, expected);
}

#[test]
fn unbound_variable_is_reported_by_name() {
    let err = parse_formula("exists c (C(x,c))").unwrap_err();
    match err {
        ParseError::Unbound { variable, line, column } => {
            assert_eq!(variable, "x");
            assert_eq!((line, column), (1, 13));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn syntax_error_carries_position() {
    let err = parse_formula("forall u (P(u)\n  and )").unwrap_err();
    match err {
        ParseError::Syntax { line, column, .. } => assert_eq!((line, column), (2, 7)),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn constants_use_at_sigil() {
    let f = parse_formula("not f(@a, @b) or f(@b, @a)").unwrap();
    let fab = Formula::atom("f", vec![Term::constant("a"), Term::constant("b")]);
    let fba = Formula::atom("f", vec![Term::constant("b"), Term::constant("a")]);
    assert_eq!(f, Formula::or(vec![Formula::not(fab), fba]));
}

#[test]
fn precedence_and_binds_tighter_than_or() {
    let f = parse_formula("A() or B() and C() -> D()").unwrap();
    let a = Formula::atom("A", vec![]);
    let b = Formula::atom("B", vec![]);
    let c = Formula::atom("C", vec![]);
    let d = Formula::atom("D", vec![]);
    assert_eq!(f, Formula::implies(Formula::or(vec![a, Formula::and(vec![b, c])]), d));
}

#[test]
fn chained_implication_is_rejected() {
    assert!(matches!(
        parse_formula("A() -> B() -> C()"),
        Err(ParseError::Syntax { .. })
    ));
}

#[test]
fn guarded_quantifier() {
    let f = parse_formula("forall (c, x, y | close) (C(x, c) -> C(y, c))").unwrap();
    match &f {
        Formula::Forall(q) => {
            assert_eq!(q.vars, vec!["c", "x", "y"]);
            assert_eq!(q.guard.as_deref(), Some("close"));
        }
        _ => panic!("expected forall"),
    }
}

#[test]
fn printer_examples() {
    let a = Formula::atom("A", vec![]);
    let b = Formula::atom("B", vec![]);
    assert_eq!(pretty_print(&Formula::not(a.clone())), "not A()");
    assert_eq!(pretty_print(&Formula::implies(a, b)), "(A() -> B())");
    let g = Formula::forall(&["u"], Some("g"), p("P", &["u"]));
    assert_eq!(pretty_print(&g), "forall (u | g) (P(u))");
}

#[test]
fn free_variable_examples() {
    assert_eq!(
        free_variables(&p("P", &["u"])).into_iter().collect::<Vec<_>>(),
        vec!["u"]
    );
    assert!(free_variables(&Formula::forall(&["u"], None, p("P", &["u"]))).is_empty());
    assert_eq!(
        free_variables(&Formula::forall(&["u"], None, p("P", &["u", "v"])))
            .into_iter()
            .collect::<Vec<_>>(),
        vec!["v"]
    );
}

#[test]
fn kb_with_names_and_comments() {
    let src = "# clustering\nf1: forall x exists c C(x, c);\nforall c (exists x (C(x, c)));\n";
    let kb = parse_kb(src).unwrap();
    assert_eq!(kb.len(), 2);
    assert_eq!(kb.formulas()[0].name.as_deref(), Some("f1"));
    assert_eq!(kb.label(1), "phi1");
}

#[test]
fn empty_kb_is_rejected() {
    assert_eq!(parse_kb("# nothing\n"), Err(ParseError::EmptyKnowledgebase));
}

#[test]
fn keywords_are_not_identifiers() {
    assert!(parse_formula("forall and (P(and))").is_err());
}

fn arb_formula() -> impl Strategy<Value = Formula> {
    let vars = ["u", "v", "w"];
    let leaf = (0usize..3, proptest::collection::vec(0usize..5, 0..3)).prop_map(move |(pi, args)| {
        let args = args
            .into_iter()
            .map(|a| {
                if a < 3 {
                    Term::var(vars[a])
                } else {
                    Term::constant(["a", "b"][a - 3])
                }
            })
            .collect();
        Formula::atom(["P", "Q", "R"][pi], args)
    });
    leaf.prop_recursive(4, 24, 3, move |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            proptest::collection::vec(inner.clone(), 2..4).prop_map(Formula::And),
            proptest::collection::vec(inner.clone(), 2..4).prop_map(Formula::Or),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::implies(a, b)),
            (inner.clone(), 0usize..3, any::<bool>(), any::<bool>()).prop_map(move |(body, v, guarded, universal)| {
                let guard = guarded.then_some("g");
                if universal {
                    Formula::forall(&[vars[v]], guard, body)
                } else {
                    Formula::exists(&[vars[v]], guard, body)
                }
            }),
        ]
    })
}

/// Closes a formula over u, v, w so the parser accepts it.
fn close(f: Formula) -> Formula {
    Formula::forall(&["u", "v", "w"], None, f)
}

proptest! {
    #[test]
    fn print_parse_round_trip(f in arb_formula()) {
        let f = close(f);
        let text = pretty_print(&f);
        let back = parse_formula(&text).unwrap();
        prop_assert_eq!(&back, &f);
        prop_assert_eq!(pretty_print(&back), text);
    }

    #[test]
    fn closed_after_binding_all_vars(f in arb_formula()) {
        prop_assert!(close(f).is_closed());
    }
}
