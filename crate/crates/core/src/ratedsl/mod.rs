//! A small arithmetic language for vital rates `β(a, x)` and `μ(a, x)`.
//!
//! Grammar (whitespace insignificant):
//!
//! ```text
//! expr  := expr ('+' | '-') expr | expr ('*' | '/') expr
//!        | '-' expr | expr '^' expr | '(' expr ')'
//!        | number | 'a' | 'x' | func '(' expr (',' expr)* ')'
//! func  := exp | log | abs | min | max
//! ```
//!
//! `^` binds tightest and associates to the right; unary minus sits between
//! `^` and the multiplicative operators.

mod lexer;
mod parser;

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: expected {expected}, found {found}")]
    Syntax {
        offset: usize,
        expected: String,
        found: String,
    },

    #[error(
        "unknown identifier `{name}` at byte {offset} (allowed: a, x, exp, log, abs, min, max)"
    )]
    UnknownIdentifier { name: String, offset: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("expression evaluated to a non-finite value at (a={age}, x={env})")]
    NonFinite { age: f64, env: f64 },
}

impl ExprError {
    pub fn code(&self) -> &'static str {
        match self {
            ExprError::Syntax { .. } => "SyntaxError",
            ExprError::UnknownIdentifier { .. } => "UnknownIdentifier",
            ExprError::Domain(_) => "DomainError",
            ExprError::NonFinite { .. } => "NonFinite",
        }
    }

    pub fn is_syntax(&self) -> bool {
        matches!(
            self,
            ExprError::Syntax { .. } | ExprError::UnknownIdentifier { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    /// `a`
    Age,
    /// `x`
    Env,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Log,
    Abs,
    Min,
    Max,
}

impl Func {
    pub const ALL: [Func; 5] = [Func::Exp, Func::Log, Func::Abs, Func::Min, Func::Max];

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Exp | Func::Log | Func::Abs => 1,
            Func::Min | Func::Max => 2,
        }
    }
}

/// Parsed rate expression. Only the variables `a` and `x` can occur.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Literal(f64),
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

pub fn parse(text: &str) -> Result<Expr, ExprError> {
    parser::Parser::new(text)?.parse_complete()
}

/// Evaluate with IEEE double arithmetic. Non-finite results are errors.
pub fn eval(expr: &Expr, a: f64, x: f64) -> Result<f64, ExprError> {
    let value = expr.eval_raw(a, x)?;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ExprError::NonFinite { age: a, env: x })
    }
}

impl Expr {
    pub fn eval(&self, a: f64, x: f64) -> Result<f64, ExprError> {
        eval(self, a, x)
    }

    fn eval_raw(&self, a: f64, x: f64) -> Result<f64, ExprError> {
        Ok(match self {
            Expr::Literal(v) => *v,
            Expr::Var(Var::Age) => a,
            Expr::Var(Var::Env) => x,
            Expr::Neg(inner) => -inner.eval_raw(a, x)?,
            Expr::Binary(op, lhs, rhs) => {
                let l = lhs.eval_raw(a, x)?;
                let r = rhs.eval_raw(a, x)?;
                match op {
                    BinOp::Add => l + r,
                    BinOp::Sub => l - r,
                    BinOp::Mul => l * r,
                    BinOp::Div => {
                        if r == 0.0 {
                            return Err(ExprError::Domain(format!(
                                "division by zero at (a={a}, x={x})"
                            )));
                        }
                        l / r
                    }
                    BinOp::Pow => l.powf(r),
                }
            }
            Expr::Call(func, args) => {
                let first = args[0].eval_raw(a, x)?;
                match func {
                    Func::Exp => first.exp(),
                    Func::Abs => first.abs(),
                    Func::Log => {
                        if first <= 0.0 {
                            return Err(ExprError::Domain(format!(
                                "log of non-positive value {first} at (a={a}, x={x})"
                            )));
                        }
                        first.ln()
                    }
                    Func::Min => first.min(args[1].eval_raw(a, x)?),
                    Func::Max => first.max(args[1].eval_raw(a, x)?),
                }
            }
        })
    }

    /// Whether the variable occurs anywhere in the tree.
    pub fn mentions(&self, var: Var) -> bool {
        match self {
            Expr::Literal(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Neg(inner) => inner.mentions(var),
            Expr::Binary(_, l, r) => l.mentions(var) || r.mentions(var),
            Expr::Call(_, args) => args.iter().any(|e| e.mentions(var)),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(op, ..) => op.precedence(),
            Expr::Neg(_) => 3,
            _ => 5,
        }
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, child: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({child})")
    } else {
        write!(f, "{child}")
    }
}

/// Prints with the minimal parentheses that reparse to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Literal(v) => {
                if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) {
                    // only reachable for hand-built trees
                    write!(f, "(0 - {:?})", v.abs())
                } else {
                    write!(f, "{v:?}")
                }
            }
            Expr::Var(Var::Age) => f.write_str("a"),
            Expr::Var(Var::Env) => f.write_str("x"),
            Expr::Neg(inner) => {
                f.write_str("-")?;
                write_child(f, inner, inner.precedence() < 3)
            }
            Expr::Binary(op, lhs, rhs) => {
                let p = op.precedence();
                let (left_parens, right_parens) = if *op == BinOp::Pow {
                    (lhs.precedence() <= p, rhs.precedence() < p)
                } else {
                    (lhs.precedence() < p, rhs.precedence() <= p)
                };
                write_child(f, lhs, left_parens)?;
                write!(f, " {} ", op.symbol())?;
                write_child(f, rhs, right_parens)
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, arg) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{arg}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(text: &str, a: f64, x: f64) -> Result<f64, ExprError> {
        parse(text)?.eval(a, x)
    }

    #[test]
    fn worked_examples() {
        assert_eq!(ev("2/(1+x)", 0.3, 1.0).unwrap(), 1.0);
        assert_eq!(ev("1+2*a", 3.0, 0.0).unwrap(), 7.0);
        assert_eq!(ev("exp(-a)", 0.0, 0.0).unwrap(), 1.0);
        assert_eq!(ev("2^3^2", 0.0, 0.0).unwrap(), 512.0);
        assert_eq!(ev("min(a,x)", 2.0, 5.0).unwrap(), 2.0);
        assert!(matches!(ev("log(x)", 1.0, 0.0), Err(ExprError::Domain(_))));
    }

    #[test]
    fn unary_minus_sits_below_power() {
        assert_eq!(ev("-2^2", 0.0, 0.0).unwrap(), -4.0);
        assert_eq!(ev("2^-1", 0.0, 0.0).unwrap(), 0.5);
        assert_eq!(ev("-a*3", 2.0, 0.0).unwrap(), -6.0);
        assert_eq!(ev("--a", 2.0, 0.0).unwrap(), 2.0);
        assert_eq!(ev("10 - 4 - 3", 0.0, 0.0).unwrap(), 3.0);
        assert_eq!(ev("8 / 4 / 2", 0.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn literals_and_whitespace() {
        assert_eq!(ev("  1.5e1 +\t.5 ", 0.0, 0.0).unwrap(), 15.5);
        assert_eq!(ev("2.5E-1", 0.0, 0.0).unwrap(), 0.25);
        assert_eq!(ev("max( a , x )", 1.0, 4.0).unwrap(), 4.0);
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        match parse("1 + * 2") {
            Err(ExprError::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("unexpected {other:?}"),
        }
        match parse("(a + 1") {
            Err(ExprError::Syntax {
                offset, expected, ..
            }) => {
                assert_eq!(offset, 6);
                assert!(expected.contains(')'));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse("a $ 2"),
            Err(ExprError::Syntax { offset: 2, .. })
        ));
        assert!(matches!(parse("min(a)"), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("exp(a, x)"), Err(ExprError::Syntax { .. })));
        assert!(matches!(
            parse("a x"),
            Err(ExprError::Syntax { offset: 2, .. })
        ));
        assert!(matches!(
            parse(""),
            Err(ExprError::Syntax { offset: 0, .. })
        ));
    }

    #[test]
    fn unknown_identifiers_rejected() {
        match parse("2*t + a") {
            Err(ExprError::UnknownIdentifier { name, offset }) => {
                assert_eq!(name, "t");
                assert_eq!(offset, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse("sin(a)"),
            Err(ExprError::UnknownIdentifier { .. })
        ));
    }

    #[test]
    fn division_by_exact_zero_and_non_finite() {
        assert!(matches!(ev("1/(x-1)", 0.0, 1.0), Err(ExprError::Domain(_))));
        assert!(matches!(
            ev("exp(1000)", 0.0, 0.0),
            Err(ExprError::NonFinite { .. })
        ));
        assert!(matches!(
            ev("(0-2)^0.5", 0.0, 0.0),
            Err(ExprError::NonFinite { .. })
        ));
        assert!(matches!(
            ev("log(0-1)", 0.0, 0.0),
            Err(ExprError::Domain(_))
        ));
    }

    #[test]
    fn display_reparses() {
        for text in [
            "-a^2",
            "(-a)^2",
            "2^-a^x",
            "(a^x)^2",
            "a - (x - 1)",
            "a / (x * 2)",
            "-(a + x)",
            "min(a, -x) * exp(-(a))",
        ] {
            let ast = parse(text).unwrap();
            let printed = ast.to_string();
            assert_eq!(parse(&printed).unwrap(), ast, "{text} -> {printed}");
        }
        assert_eq!(parse("2^3^2").unwrap().to_string(), "2.0 ^ 3.0 ^ 2.0");
    }

    #[test]
    fn mentions() {
        let e = parse("exp(-a) * 2").unwrap();
        assert!(e.mentions(Var::Age));
        assert!(!e.mentions(Var::Env));
    }
}
