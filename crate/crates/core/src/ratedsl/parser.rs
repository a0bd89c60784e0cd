//! Pratt parser for rate expressions.
//!
//! Binding powers, loosest first: `+ -` (left), `* /` (left), prefix `-`,
//! `^` (right). Prefix minus binds looser than `^`, so `-a^2` is `-(a^2)`,
//! while `2^-a` still parses because an operand may always start with a
//! prefix operator.

use super::lexer::{Lexer, Token, TokenKind};
use super::{BinOp, Expr, ExprError, Func, Var};

const PREFIX_NEG_BP: u8 = 30;

fn infix_binding(kind: &TokenKind<'_>) -> Option<(BinOp, u8, u8)> {
    match kind {
        TokenKind::Plus => Some((BinOp::Add, 10, 11)),
        TokenKind::Minus => Some((BinOp::Sub, 10, 11)),
        TokenKind::Star => Some((BinOp::Mul, 20, 21)),
        TokenKind::Slash => Some((BinOp::Div, 20, 21)),
        TokenKind::Caret => Some((BinOp::Pow, 41, 40)),
        _ => None,
    }
}

pub(crate) struct Parser<'a> {
    lexer: Lexer<'a>,
    current: Token<'a>,
}

impl<'a> Parser<'a> {
    pub(crate) fn new(src: &'a str) -> Result<Self, ExprError> {
        let mut lexer = Lexer::new(src);
        let current = lexer.next_token()?;
        Ok(Self { lexer, current })
    }

    fn advance(&mut self) -> Result<Token<'a>, ExprError> {
        let next = self.lexer.next_token()?;
        Ok(std::mem::replace(&mut self.current, next))
    }

    fn expect(&mut self, want: TokenKind<'static>, what: &str) -> Result<(), ExprError> {
        if self.current.kind == want {
            self.advance()?;
            Ok(())
        } else {
            Err(self.unexpected(what))
        }
    }

    fn unexpected(&self, expected: &str) -> ExprError {
        ExprError::Syntax {
            offset: self.current.offset,
            expected: expected.into(),
            found: self.current.kind.describe(),
        }
    }

    pub(crate) fn parse_complete(mut self) -> Result<Expr, ExprError> {
        let expr = self.parse_expr(0)?;
        if self.current.kind != TokenKind::Eof {
            return Err(self.unexpected("an operator or end of input"));
        }
        Ok(expr)
    }

    fn parse_expr(&mut self, min_bp: u8) -> Result<Expr, ExprError> {
        let mut lhs = self.parse_prefix()?;
        while let Some((op, lbp, rbp)) = infix_binding(&self.current.kind) {
            if lbp < min_bp {
                break;
            }
            self.advance()?;
            let rhs = self.parse_expr(rbp)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_prefix(&mut self) -> Result<Expr, ExprError> {
        let tok = self.advance()?;
        match tok.kind {
            TokenKind::Number(v) => Ok(Expr::Literal(v)),
            TokenKind::Minus => {
                let operand = self.parse_expr(PREFIX_NEG_BP)?;
                Ok(Expr::Neg(Box::new(operand)))
            }
            TokenKind::LParen => {
                let inner = self.parse_expr(0)?;
                self.expect(TokenKind::RParen, "`)`")?;
                Ok(inner)
            }
            TokenKind::Ident(name) => self.parse_identifier(name, tok.offset),
            other => Err(ExprError::Syntax {
                offset: tok.offset,
                expected: "an operand".into(),
                found: other.describe(),
            }),
        }
    }

    fn parse_identifier(&mut self, name: &str, offset: usize) -> Result<Expr, ExprError> {
        match name {
            "a" => return Ok(Expr::Var(Var::Age)),
            "x" => return Ok(Expr::Var(Var::Env)),
            _ => {}
        }
        let Some(func) = Func::from_name(name) else {
            return Err(ExprError::UnknownIdentifier {
                name: name.to_string(),
                offset,
            });
        };
        self.expect(TokenKind::LParen, "`(` after function name")?;
        let mut args = Vec::with_capacity(func.arity());
        if self.current.kind != TokenKind::RParen {
            loop {
                args.push(self.parse_expr(0)?);
                if self.current.kind == TokenKind::Comma {
                    self.advance()?;
                } else {
                    break;
                }
            }
        }
        if args.len() != func.arity() {
            return Err(ExprError::Syntax {
                offset,
                expected: format!("{} argument(s) for `{}`", func.arity(), func.name()),
                found: format!("{} argument(s)", args.len()),
            });
        }
        self.expect(TokenKind::RParen, "`,` or `)`")?;
        Ok(Expr::Call(func, args))
    }
}
