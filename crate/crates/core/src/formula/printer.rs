use super::ast::{Formula, Quantified, Term};

/// Canonical DSL text for `f`. Connectives are always parenthesized and
/// quantifier bodies are wrapped, so `parse_formula(pretty_print(f)) == f`
/// for every well-formed AST.
pub fn pretty_print(f: &Formula) -> String {
    let mut out = String::new();
    write_formula(f, &mut out);
    out
}

fn write_formula(f: &Formula, out: &mut String) {
    match f {
        Formula::Forall(q) => write_quant("forall", q, out),
        Formula::Exists(q) => write_quant("exists", q, out),
        _ => write_operand(f, out),
    }
}

fn write_quant(keyword: &str, q: &Quantified, out: &mut String) {
    out.push_str(keyword);
    out.push_str(" (");
    out.push_str(&q.vars.join(", "));
    if let Some(g) = &q.guard {
        out.push_str(" | ");
        out.push_str(g);
    }
    out.push_str(") ");
    match q.body.as_ref() {
        Formula::And(_) | Formula::Or(_) | Formula::Implies(..) => write_operand(&q.body, out),
        body => {
            out.push('(');
            write_formula(body, out);
            out.push(')');
        }
    }
}

fn write_operand(f: &Formula, out: &mut String) {
    match f {
        Formula::Atom(a) => {
            out.push_str(&a.predicate);
            out.push('(');
            for (i, t) in a.args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                if let Term::Const(_) = t {
                    out.push('@');
                }
                out.push_str(t.name());
            }
            out.push(')');
        }
        Formula::Not(c) => {
            out.push_str("not ");
            write_operand(c, out);
        }
        Formula::And(cs) => write_nary(cs, " and ", out),
        Formula::Or(cs) => write_nary(cs, " or ", out),
        Formula::Implies(a, b) => {
            out.push('(');
            write_operand(a, out);
            out.push_str(" -> ");
            write_operand(b, out);
            out.push(')');
        }
        Formula::Forall(_) | Formula::Exists(_) => {
            out.push('(');
            write_formula(f, out);
            out.push(')');
        }
    }
}

fn write_nary(cs: &[Formula], sep: &str, out: &mut String) {
    out.push('(');
    for (i, c) in cs.iter().enumerate() {
        if i > 0 {
            out.push_str(sep);
        }
        write_operand(c, out);
    }
    out.push(')');
}
