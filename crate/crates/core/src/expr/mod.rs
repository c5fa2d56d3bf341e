//! Coefficient expressions `b(t, x)` and `σ(t)`.
//!
//! Expressions are parsed once into an immutable tree and evaluated many
//! times. Every evaluation is pure: the same `(t, x)` always produces the
//! same bits, and the tree can be shared freely across threads.

mod hypothesis;
mod parse;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hypothesis::{check_hypothesis, Axis, HypothesisReport, HypothesisStatus, Property, Region, Spacing};
pub use parse::{parse, ParseError};

/// Elementary functions callable from the DSL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    pub(crate) fn from_name(name: &str) -> Option<Func> {
        match name {
            "exp" => Some(Func::Exp),
            "log" => Some(Func::Log),
            "sqrt" => Some(Func::Sqrt),
            "abs" => Some(Func::Abs),
            _ => None,
        }
    }
}

/// Parsed coefficient expression in the time variable `t` and state `x`.
///
/// The named constants `e` and `pi` parse to [`Expr::Const`]. The parser
/// only ever produces non-negative constants; a leading minus is a
/// [`Expr::Neg`] node.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    T,
    X,
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    /// Right-associative power.
    Pow(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Failure while evaluating an expression. Each variant names the
/// offending subexpression in rendered form.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("log of non-positive value {value} in `{expr}`")]
    LogDomain { value: f64, expr: String },
    #[error("sqrt of negative value {value} in `{expr}`")]
    SqrtDomain { value: f64, expr: String },
    #[error("division by zero in `{expr}`")]
    DivisionByZero { expr: String },
    #[error("non-finite value in `{expr}`")]
    NonFinite { expr: String },
}

impl Expr {
    pub fn constant(value: f64) -> Expr {
        Expr::Const(value)
    }

    /// Evaluate at `(t, x)`.
    pub fn eval(&self, t: f64, x: f64) -> Result<f64, EvalError> {
        let value = match self {
            Expr::Const(c) => *c,
            Expr::T => t,
            Expr::X => x,
            Expr::Add(a, b) => a.eval(t, x)? + b.eval(t, x)?,
            Expr::Sub(a, b) => a.eval(t, x)? - b.eval(t, x)?,
            Expr::Mul(a, b) => a.eval(t, x)? * b.eval(t, x)?,
            Expr::Div(a, b) => {
                let num = a.eval(t, x)?;
                let den = b.eval(t, x)?;
                if den == 0.0 {
                    return Err(EvalError::DivisionByZero {
                        expr: self.to_string(),
                    });
                }
                num / den
            }
            Expr::Pow(a, b) => a.eval(t, x)?.powf(b.eval(t, x)?),
            Expr::Neg(a) => -a.eval(t, x)?,
            Expr::Call(func, a) => {
                let arg = a.eval(t, x)?;
                match func {
                    Func::Exp => arg.exp(),
                    Func::Log => {
                        if arg <= 0.0 {
                            return Err(EvalError::LogDomain {
                                value: arg,
                                expr: self.to_string(),
                            });
                        }
                        arg.ln()
                    }
                    Func::Sqrt => {
                        if arg < 0.0 {
                            return Err(EvalError::SqrtDomain {
                                value: arg,
                                expr: self.to_string(),
                            });
                        }
                        arg.sqrt()
                    }
                    Func::Abs => arg.abs(),
                }
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(EvalError::NonFinite {
                expr: self.to_string(),
            })
        }
    }

    pub fn uses_t(&self) -> bool {
        self.any_node(&|e| matches!(e, Expr::T))
    }

    pub fn uses_x(&self) -> bool {
        self.any_node(&|e| matches!(e, Expr::X))
    }

    /// True when the tree is a single constant node equal to `value`.
    pub fn is_constant(&self, value: f64) -> bool {
        matches!(self, Expr::Const(c) if *c == value)
    }

    fn any_node(&self, pred: &dyn Fn(&Expr) -> bool) -> bool {
        if pred(self) {
            return true;
        }
        match self {
            Expr::Const(_) | Expr::T | Expr::X => false,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.any_node(pred) || b.any_node(pred)
            }
            Expr::Neg(a) | Expr::Call(_, a) => a.any_node(pred),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(..) => 3,
            Expr::Pow(..) => 4,
            Expr::Const(c) if c.is_sign_negative() => 0,
            _ => 5,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let paren = self.precedence() < min;
        if paren {
            f.write_str("(")?;
        }
        match self {
            Expr::Const(c) => write!(f, "{c}")?,
            Expr::T => f.write_str("t")?,
            Expr::X => f.write_str("x")?,
            Expr::Add(a, b) => binary(f, a, " + ", b, 1, 2)?,
            Expr::Sub(a, b) => binary(f, a, " - ", b, 1, 2)?,
            Expr::Mul(a, b) => binary(f, a, " * ", b, 2, 3)?,
            Expr::Div(a, b) => binary(f, a, " / ", b, 2, 3)?,
            Expr::Pow(a, b) => binary(f, a, "^", b, 5, 3)?,
            Expr::Neg(a) => {
                f.write_str("-")?;
                a.fmt_prec(f, 3)?;
            }
            Expr::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                a.fmt_prec(f, 0)?;
                f.write_str(")")?;
            }
        }
        if paren {
            f.write_str(")")?;
        }
        Ok(())
    }
}

fn binary(f: &mut fmt::Formatter<'_>, lhs: &Expr, op: &str, rhs: &Expr, lmin: u8, rmin: u8) -> fmt::Result {
    lhs.fmt_prec(f, lmin)?;
    f.write_str(op)?;
    rhs.fmt_prec(f, rmin)
}

/// Renders with the minimum parentheses needed to parse back to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

impl std::str::FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

impl Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Anything that evaluates like a coefficient `(t, x) ↦ value`.
///
/// Derived transforms of a drift are wrappers implementing this trait, so
/// no new expression text is ever generated.
pub trait Field: Send + Sync {
    fn eval(&self, t: f64, x: f64) -> Result<f64, EvalError>;
}

impl Field for Expr {
    fn eval(&self, t: f64, x: f64) -> Result<f64, EvalError> {
        Expr::eval(self, t, x)
    }
}

impl<F: Field + ?Sized> Field for &F {
    fn eval(&self, t: f64, x: f64) -> Result<f64, EvalError> {
        (**self).eval(t, x)
    }
}

/// `(t, x) ↦ b(t, x) / x`.
#[derive(Debug, Clone, Copy)]
pub struct PerUnit<F>(pub F);

impl<F: Field> Field for PerUnit<F> {
    fn eval(&self, t: f64, x: f64) -> Result<f64, EvalError> {
        if x == 0.0 {
            return Err(EvalError::DivisionByZero {
                expr: "b(t, x) / x at x = 0".into(),
            });
        }
        finite(self.0.eval(t, x)? / x, "b(t, x) / x")
    }
}

/// `(t, z) ↦ b(t, eᶻ) / eᶻ`, the drift seen in logarithmic coordinates.
#[derive(Debug, Clone, Copy)]
pub struct LogCoordinates<F>(pub F);

impl<F: Field> Field for LogCoordinates<F> {
    fn eval(&self, t: f64, z: f64) -> Result<f64, EvalError> {
        let x = finite(z.exp(), "exp(z)")?;
        if x == 0.0 {
            return Err(EvalError::DivisionByZero {
                expr: "b(t, exp(z)) / exp(z) underflow".into(),
            });
        }
        finite(self.0.eval(t, x)? / x, "b(t, exp(z)) / exp(z)")
    }
}

/// Adapts a closure to [`Field`].
pub struct FnField<F>(pub F);

impl<F> Field for FnField<F>
where
    F: Fn(f64, f64) -> Result<f64, EvalError> + Send + Sync,
{
    fn eval(&self, t: f64, x: f64) -> Result<f64, EvalError> {
        (self.0)(t, x)
    }
}

pub(crate) fn finite(value: f64, what: &str) -> Result<f64, EvalError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(EvalError::NonFinite { expr: what.into() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, t: f64, x: f64) -> Result<f64, EvalError> {
        parse(src).unwrap().eval(t, x)
    }

    #[test]
    fn arithmetic() {
        assert_eq!(ev("x^2/2", 0.0, 2.0).unwrap(), 2.0);
        assert_eq!(ev("exp(x) - 1", 5.0, 0.0).unwrap(), 0.0);
        assert_eq!(ev("2^3^2", 0.0, 0.0).unwrap(), 512.0);
        assert_eq!(ev("-x^2", 0.0, 3.0).unwrap(), -9.0);
        assert_eq!(ev("2^-1", 0.0, 0.0).unwrap(), 0.5);
        assert_eq!(ev("abs(t - x)", 1.0, 4.0).unwrap(), 3.0);
        assert_eq!(ev("sqrt(x) * pi", 0.0, 4.0).unwrap(), 2.0 * std::f64::consts::PI);
        assert_eq!(ev("log(e)", 0.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn domain_errors_name_the_subexpression() {
        match ev("1 + log(x)", 0.0, -1.0) {
            Err(EvalError::LogDomain { value, expr }) => {
                assert_eq!(value, -1.0);
                assert_eq!(expr, "log(x)");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            ev("sqrt(x - 1)", 0.0, 0.0),
            Err(EvalError::SqrtDomain { .. })
        ));
        assert!(matches!(
            ev("1 / (x - 2)", 0.0, 2.0),
            Err(EvalError::DivisionByZero { .. })
        ));
        assert!(matches!(
            ev("exp(x)", 0.0, 1000.0),
            Err(EvalError::NonFinite { .. })
        ));
        assert!(matches!(ev("x^0.5", 0.0, -1.0), Err(EvalError::NonFinite { .. })));
    }

    #[test]
    fn render_is_compact() {
        assert_eq!(parse("x^2 / 2").unwrap().to_string(), "x^2 / 2");
        assert_eq!(parse("x*(1/2 + x)").unwrap().to_string(), "x * (1 / 2 + x)");
        assert_eq!(parse("(2^3)^2").unwrap().to_string(), "(2^3)^2");
        assert_eq!(
            parse("a - (b - c)".replace(['a', 'b', 'c'], "x").as_str())
                .unwrap()
                .to_string(),
            "x - (x - x)"
        );
        assert_eq!(parse("(-x)^2").unwrap().to_string(), "(-x)^2");
    }

    #[test]
    fn transforms() {
        let b = parse("x*(1/2 + x)").unwrap();
        assert!((PerUnit(&b).eval(0.0, 3.0).unwrap() - 3.5).abs() < 1e-15);
        let tilde = LogCoordinates(&b).eval(0.0, 0.0).unwrap();
        assert!((tilde - 1.5).abs() < 1e-15);
        assert!(PerUnit(&b).eval(0.0, 0.0).is_err());
    }

    #[test]
    fn variable_usage() {
        let e = parse("(1 + t) * x^2").unwrap();
        assert!(e.uses_t() && e.uses_x());
        assert!(!parse("2").unwrap().uses_x());
        assert!(parse("1").unwrap().is_constant(1.0));
    }
}
