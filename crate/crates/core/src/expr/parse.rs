//! Recursive-descent parser for the coefficient DSL.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | power
//! power  := atom ('^' factor)?
//! atom   := number | 't' | 'x' | 'e' | 'pi' | fn '(' expr ')' | '(' expr ')'
//! fn     := exp | log | sqrt | abs
//! ```
//!
//! `^` binds tighter than unary minus (`-x^2 = -(x^2)`) and is
//! right-associative (`2^3^2 = 2^9`).

use thiserror::Error;

use super::{Expr, Func};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: expected {}, found {found}", expected.join(" | "))]
    Syntax {
        offset: usize,
        expected: Vec<&'static str>,
        found: String,
    },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("number out of range at byte {offset}: {text}")]
    NumberRange { offset: usize, text: String },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownIdentifier { offset, .. }
            | ParseError::NumberRange { offset, .. } => *offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'0'..=b'9' | b'.' => {
                i = scan_number(bytes, i);
                let text = &src[start..i];
                let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
                    offset: start,
                    expected: vec!["number"],
                    found: format!("`{text}`"),
                })?;
                if !value.is_finite() {
                    return Err(ParseError::NumberRange {
                        offset: start,
                        text: text.into(),
                    });
                }
                out.push((Tok::Num(value), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(src[start..i].to_string()), start));
                continue;
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(ParseError::Syntax {
                    offset: start,
                    expected: vec!["number", "identifier", "operator", "`(`", "`)`"],
                    found: format!("`{ch}`"),
                });
            }
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

fn scan_number(bytes: &[u8], mut i: usize) -> usize {
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
    }
    // exponent only when digits follow, so `2*e` style input is not swallowed
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        if j < bytes.len() && bytes[j].is_ascii_digit() {
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            i = j;
        }
    }
    i
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let tok = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        tok
    }

    fn unexpected(&self, expected: Vec<&'static str>) -> ParseError {
        ParseError::Syntax {
            offset: self.offset(),
            expected,
            found: self.peek().describe(),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Tok::Slash => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.factor()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exponent = self.factor()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        const ATOM: &[&str] = &["number", "`t`", "`x`", "function", "`(`", "`-`"];
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Const(v))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                let (_, offset) = self.bump();
                match name.as_str() {
                    "t" => Ok(Expr::T),
                    "x" => Ok(Expr::X),
                    "e" => Ok(Expr::Const(std::f64::consts::E)),
                    "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                    other => {
                        let Some(func) = Func::from_name(other) else {
                            return Err(ParseError::UnknownIdentifier { name, offset });
                        };
                        if *self.peek() != Tok::LParen {
                            return Err(self.unexpected(vec!["`(`"]));
                        }
                        self.bump();
                        let arg = self.expr()?;
                        self.expect_rparen()?;
                        Ok(Expr::Call(func, Box::new(arg)))
                    }
                }
            }
            _ => Err(self.unexpected(ATOM.to_vec())),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        if *self.peek() == Tok::RParen {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(vec!["`)`", "operator"]))
        }
    }
}

/// Parse DSL source text into an [`Expr`].
pub fn parse(source: &str) -> Result<Expr, ParseError> {
    let mut parser = Parser {
        toks: lex(source)?,
        pos: 0,
    };
    let expr = parser.expr()?;
    if *parser.peek() != Tok::End {
        return Err(parser.unexpected(vec!["operator", "end of input"]));
    }
    Ok(expr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(v: f64) -> Box<Expr> {
        Box::new(Expr::Const(v))
    }

    #[test]
    fn grammar_examples() {
        assert_eq!(
            parse("x^2 / 2").unwrap(),
            Expr::Div(Box::new(Expr::Pow(Box::new(Expr::X), c(2.0))), c(2.0))
        );
        assert_eq!(
            parse("x*(1/2 + x)").unwrap(),
            Expr::Mul(
                Box::new(Expr::X),
                Box::new(Expr::Add(Box::new(Expr::Div(c(1.0), c(2.0))), Box::new(Expr::X)))
            )
        );
        assert_eq!(
            parse("2^3^2").unwrap(),
            Expr::Pow(c(2.0), Box::new(Expr::Pow(c(3.0), c(2.0))))
        );
    }

    #[test]
    fn numbers() {
        assert_eq!(parse("1.5e3").unwrap(), Expr::Const(1500.0));
        assert_eq!(parse(".25").unwrap(), Expr::Const(0.25));
        assert_eq!(parse("2E-2").unwrap(), Expr::Const(0.02));
        assert_eq!(parse(" 3 ").unwrap(), Expr::Const(3.0));
        assert!(matches!(
            parse("1e400"),
            Err(ParseError::NumberRange { offset: 0, .. })
        ));
    }

    #[test]
    fn errors_carry_offsets() {
        match parse("x + * 2") {
            Err(ParseError::Syntax { offset, expected, .. }) => {
                assert_eq!(offset, 4);
                assert!(expected.contains(&"number"));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(
            parse("2 * y"),
            Err(ParseError::UnknownIdentifier {
                name: "y".into(),
                offset: 4
            })
        );
        assert_eq!(parse("(x + 1").unwrap_err().offset(), 6);
        assert_eq!(parse("x x").unwrap_err().offset(), 2);
        assert_eq!(parse("exp x").unwrap_err().offset(), 4);
        assert_eq!(parse("").unwrap_err().offset(), 0);
        assert_eq!(parse("x $ 1").unwrap_err().offset(), 2);
    }
}
