use super::ExprError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum TokenKind<'a> {
    Number(f64),
    Ident(&'a str),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    Eof,
}

impl TokenKind<'_> {
    pub(crate) fn describe(&self) -> String {
        match self {
            TokenKind::Number(v) => format!("number {v}"),
            TokenKind::Ident(name) => format!("identifier `{name}`"),
            TokenKind::Plus => "`+`".into(),
            TokenKind::Minus => "`-`".into(),
            TokenKind::Star => "`*`".into(),
            TokenKind::Slash => "`/`".into(),
            TokenKind::Caret => "`^`".into(),
            TokenKind::LParen => "`(`".into(),
            TokenKind::RParen => "`)`".into(),
            TokenKind::Comma => "`,`".into(),
            TokenKind::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Token<'a> {
    pub kind: TokenKind<'a>,
    pub offset: usize,
}

pub(crate) struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    pub(crate) fn new(src: &'a str) -> Self {
        Self { src, pos: 0 }
    }

    fn peek_byte(&self) -> Option<u8> {
        self.src.as_bytes().get(self.pos).copied()
    }

    pub(crate) fn next_token(&mut self) -> Result<Token<'a>, ExprError> {
        while matches!(self.peek_byte(), Some(b) if b.is_ascii_whitespace()) {
            self.pos += 1;
        }
        let offset = self.pos;
        let Some(b) = self.peek_byte() else {
            return Ok(Token {
                kind: TokenKind::Eof,
                offset,
            });
        };
        let single = |kind| Token { kind, offset };
        let tok = match b {
            b'+' => single(TokenKind::Plus),
            b'-' => single(TokenKind::Minus),
            b'*' => single(TokenKind::Star),
            b'/' => single(TokenKind::Slash),
            b'^' => single(TokenKind::Caret),
            b'(' => single(TokenKind::LParen),
            b')' => single(TokenKind::RParen),
            b',' => single(TokenKind::Comma),
            b'0'..=b'9' | b'.' => return self.number(offset),
            b if b.is_ascii_alphabetic() || b == b'_' => {
                while matches!(self.peek_byte(), Some(c) if c.is_ascii_alphanumeric() || c == b'_')
                {
                    self.pos += 1;
                }
                return Ok(Token {
                    kind: TokenKind::Ident(&self.src[offset..self.pos]),
                    offset,
                });
            }
            _ => {
                let ch = self.src[offset..].chars().next().unwrap_or('?');
                return Err(ExprError::Syntax {
                    offset,
                    expected: "a number, identifier, operator or parenthesis".into(),
                    found: format!("character {ch:?}"),
                });
            }
        };
        self.pos += 1;
        Ok(tok)
    }

    fn number(&mut self, offset: usize) -> Result<Token<'a>, ExprError> {
        let bytes = self.src.as_bytes();
        let digits = |pos: &mut usize| {
            let start = *pos;
            while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
                *pos += 1;
            }
            *pos - start
        };
        let mut pos = self.pos;
        let mut count = digits(&mut pos);
        if pos < bytes.len() && bytes[pos] == b'.' {
            pos += 1;
            count += digits(&mut pos);
        }
        if count == 0 {
            return Err(ExprError::Syntax {
                offset,
                expected: "digits".into(),
                found: "`.`".into(),
            });
        }
        if pos < bytes.len() && (bytes[pos] == b'e' || bytes[pos] == b'E') {
            let mut exp_pos = pos + 1;
            if exp_pos < bytes.len() && (bytes[exp_pos] == b'+' || bytes[exp_pos] == b'-') {
                exp_pos += 1;
            }
            if digits(&mut exp_pos) > 0 {
                pos = exp_pos;
            }
        }
        let text = &self.src[offset..pos];
        let value: f64 = text.parse().map_err(|_| ExprError::Syntax {
            offset,
            expected: "a numeric literal".into(),
            found: format!("`{text}`"),
        })?;
        if !value.is_finite() {
            return Err(ExprError::Syntax {
                offset,
                expected: "a finite numeric literal".into(),
                found: format!("`{text}`"),
            });
        }
        self.pos = pos;
        Ok(Token {
            kind: TokenKind::Number(value),
            offset,
        })
    }
}
