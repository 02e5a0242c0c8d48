//! Recursive-descent parser for the knowledgebase DSL.
//!
//! ```text
//! kb            := (named_formula)+
//! named_formula := [identifier ":"] formula ";"
//! formula       := quant | implies
//! quant         := ("forall"|"exists") "(" var_list ["|" identifier] ")" formula
//!                | ("forall"|"exists") identifier formula
//! implies       := or ("->" or)?
//! or            := and ("or" and)*
//! and           := unary ("and" unary)*
//! unary         := "not" unary | atom | "(" formula ")"
//! atom          := identifier "(" [term ("," term)*] ")"
//! term          := identifier | "@" identifier
//! ```
//!
//! A bare identifier in argument position must be bound by an enclosing
//! quantifier; constants carry a leading `@`. `#` starts a comment.

use super::ast::{Formula, Knowledgebase, NamedFormula, Quantified, Term};
use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Const(String),
    Forall,
    Exists,
    Not,
    And,
    Or,
    Arrow,
    LParen,
    RParen,
    Comma,
    Pipe,
    Colon,
    Semi,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Const(s) => format!("constant `@{s}`"),
            Tok::Forall => "`forall`".into(),
            Tok::Exists => "`exists`".into(),
            Tok::Not => "`not`".into(),
            Tok::And => "`and`".into(),
            Tok::Or => "`or`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Pipe => "`|`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(src: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let advance = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => advance(1, &mut i, &mut col),
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '(' | ')' | ',' | '|' | ':' | ';' => {
                let tok = match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    ',' => Tok::Comma,
                    '|' => Tok::Pipe,
                    ':' => Tok::Colon,
                    _ => Tok::Semi,
                };
                out.push(Spanned {
                    tok,
                    line: tl,
                    column: tc,
                });
                advance(1, &mut i, &mut col);
            }
            '-' if chars.get(i + 1) == Some(&'>') => {
                out.push(Spanned {
                    tok: Tok::Arrow,
                    line: tl,
                    column: tc,
                });
                advance(2, &mut i, &mut col);
            }
            '@' => {
                let start = i + 1;
                let mut j = start;
                while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                let name: String = chars[start..j].iter().collect();
                if !super::ast::is_identifier(&name) {
                    return Err(ParseError::Syntax {
                        message: "expected identifier after `@`".into(),
                        line: tl,
                        column: tc,
                    });
                }
                out.push(Spanned {
                    tok: Tok::Const(name),
                    line: tl,
                    column: tc,
                });
                advance(j - i, &mut i, &mut col);
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                let word: String = chars[i..j].iter().collect();
                let tok = match word.as_str() {
                    "forall" => Tok::Forall,
                    "exists" => Tok::Exists,
                    "not" => Tok::Not,
                    "and" => Tok::And,
                    "or" => Tok::Or,
                    _ => Tok::Ident(word),
                };
                out.push(Spanned {
                    tok,
                    line: tl,
                    column: tc,
                });
                advance(j - i, &mut i, &mut col);
            }
            other => {
                return Err(ParseError::Syntax {
                    message: format!("unexpected character `{other}`"),
                    line: tl,
                    column: tc,
                })
            }
        }
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        column: col,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    scope: Vec<String>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn bump(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, message: String) -> ParseError {
        let t = &self.toks[self.pos];
        ParseError::Syntax {
            message,
            line: t.line,
            column: t.column,
        }
    }

    fn expect(&mut self, want: Tok, context: &str) -> Result<Spanned, ParseError> {
        if *self.peek() == want {
            Ok(self.bump())
        } else {
            Err(self.error_here(format!(
                "expected {} {context}, found {}",
                want.describe(),
                self.peek().describe()
            )))
        }
    }

    fn ident(&mut self, context: &str) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => Err(self.error_here(format!("expected identifier {context}, found {}", other.describe()))),
        }
    }

    fn formula(&mut self) -> Result<Formula, ParseError> {
        match self.peek() {
            Tok::Forall | Tok::Exists => self.quant(),
            _ => self.implies(),
        }
    }

    fn quant(&mut self) -> Result<Formula, ParseError> {
        let universal = self.bump().tok == Tok::Forall;
        let mut vars = Vec::new();
        let mut guard = None;
        if *self.peek() == Tok::LParen {
            self.bump();
            vars.push(self.ident("in quantifier variable list")?);
            while *self.peek() == Tok::Comma {
                self.bump();
                vars.push(self.ident("in quantifier variable list")?);
            }
            if *self.peek() == Tok::Pipe {
                self.bump();
                guard = Some(self.ident("as guard name")?);
            }
            self.expect(Tok::RParen, "to close quantifier variable list")?;
        } else {
            vars.push(self.ident("after quantifier")?);
        }
        let depth = self.scope.len();
        self.scope.extend(vars.iter().cloned());
        let body = self.formula();
        self.scope.truncate(depth);
        let q = Quantified {
            vars,
            guard,
            body: Box::new(body?),
        };
        Ok(if universal {
            Formula::Forall(q)
        } else {
            Formula::Exists(q)
        })
    }

    fn implies(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.or()?;
        if *self.peek() == Tok::Arrow {
            self.bump();
            let rhs = self.or()?;
            if *self.peek() == Tok::Arrow {
                return Err(self.error_here("`->` is not associative; parenthesize chained implications".into()));
            }
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Formula, ParseError> {
        let mut children = vec![self.and()?];
        while *self.peek() == Tok::Or {
            self.bump();
            children.push(self.and()?);
        }
        Ok(Formula::or(children))
    }

    fn and(&mut self) -> Result<Formula, ParseError> {
        let mut children = vec![self.unary()?];
        while *self.peek() == Tok::And {
            self.bump();
            children.push(self.unary()?);
        }
        Ok(Formula::and(children))
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        match self.peek().clone() {
            Tok::Not => {
                self.bump();
                Ok(Formula::not(self.unary()?))
            }
            Tok::LParen => {
                self.bump();
                let f = self.formula()?;
                self.expect(Tok::RParen, "to close parenthesized formula")?;
                Ok(f)
            }
            Tok::Ident(_) => self.atom(),
            other => Err(self.error_here(format!("expected a formula, found {}", other.describe()))),
        }
    }

    fn atom(&mut self) -> Result<Formula, ParseError> {
        let predicate = self.ident("as predicate name")?;
        self.expect(Tok::LParen, "after predicate name")?;
        let mut args = Vec::new();
        if *self.peek() != Tok::RParen {
            args.push(self.term()?);
            while *self.peek() == Tok::Comma {
                self.bump();
                args.push(self.term()?);
            }
        }
        self.expect(Tok::RParen, "to close argument list")?;
        Ok(Formula::atom(predicate, args))
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        let t = self.bump();
        match t.tok {
            Tok::Const(name) => Ok(Term::Const(name)),
            Tok::Ident(name) => {
                if self.scope.contains(&name) {
                    Ok(Term::Var(name))
                } else {
                    Err(ParseError::Unbound {
                        variable: name,
                        line: t.line,
                        column: t.column,
                    })
                }
            }
            other => Err(ParseError::Syntax {
                message: format!("expected a term, found {}", other.describe()),
                line: t.line,
                column: t.column,
            }),
        }
    }
}

/// Parses one closed formula. A trailing `;` is accepted.
pub fn parse_formula(src: &str) -> Result<Formula, ParseError> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
        scope: Vec::new(),
    };
    let f = p.formula()?;
    if *p.peek() == Tok::Semi {
        p.bump();
    }
    if *p.peek() != Tok::Eof {
        return Err(p.error_here(format!("unexpected {} after formula", p.peek().describe())));
    }
    Ok(f)
}

/// Parses a knowledgebase: one or more `[name:] formula;` entries.
pub fn parse_kb(src: &str) -> Result<Knowledgebase, ParseError> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
        scope: Vec::new(),
    };
    let mut formulas = Vec::new();
    while *p.peek() != Tok::Eof {
        let name = match (p.peek().clone(), p.peek_at(1)) {
            (Tok::Ident(n), Tok::Colon) => {
                p.bump();
                p.bump();
                Some(n)
            }
            _ => None,
        };
        let formula = p.formula()?;
        p.expect(Tok::Semi, "to terminate formula")?;
        formulas.push(NamedFormula { name, formula });
    }
    Knowledgebase::new(formulas)
}
