//! Problem files: JSON with expression strings and optional sections.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::expr::{parse, ParseError};
use crate::problem::{Problem, ProblemError};

/// A real number that may also be written as `"inf"` or `"-inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Real(pub f64);

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            v if v.is_finite() => serializer.serialize_f64(v),
            v if v > 0.0 => serializer.serialize_str("inf"),
            v if v < 0.0 => serializer.serialize_str("-inf"),
            _ => serializer.serialize_str("nan"),
        }
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct RealVisitor;

        impl Visitor<'_> for RealVisitor {
            type Value = Real;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number, \"inf\" or \"-inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Real, E> {
                Ok(Real(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Real, E> {
                Ok(Real(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Real, E> {
                Ok(Real(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Real, E> {
                match v {
                    "inf" | "+inf" | "infinity" => Ok(Real(f64::INFINITY)),
                    "-inf" | "-infinity" => Ok(Real(f64::NEG_INFINITY)),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }

        deserializer.deserialize_any(RealVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub name: String,
    pub xi: f64,
    /// `b(t, x)`.
    pub drift: String,
    /// `σ(t)`.
    pub sigma: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<IntervalSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ParamsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimSection>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalSection {
    pub l: Option<Real>,
    pub r: Option<Real>,
    pub zeta: Option<Real>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub a_scan: Option<Vec<f64>>,
    pub theta: Option<f64>,
    pub c: Option<f64>,
    pub delta: Option<f64>,
    pub screen: Option<ScreenSection>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScreenSection {
    pub x_lo: Option<f64>,
    pub x_hi: Option<f64>,
    pub nx: Option<usize>,
    pub nt: Option<usize>,
    pub t_hi: Option<f64>,
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub x_cap: Option<f64>,
}

#[derive(Debug, Error)]
pub enum FileError {
    #[error("cannot read {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{}: field `{field}`: {source}", path.display())]
    Expr {
        path: PathBuf,
        field: &'static str,
        source: ParseError,
    },
    #[error("{}: {source}", path.display())]
    Invalid { path: PathBuf, source: ProblemError },
}

/// A validated problem together with the simulation defaults of its file.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub problem: Problem,
    pub sim: SimSection,
}

impl ProblemFile {
    pub fn read(path: &Path) -> Result<Loaded, FileError> {
        let text = std::fs::read_to_string(path).map_err(|source| FileError::Io {
            path: path.into(),
            source,
        })?;
        let file: ProblemFile = serde_json::from_str(&text).map_err(|source| FileError::Json {
            path: path.into(),
            source,
        })?;
        file.into_problem(path)
    }

    pub fn into_problem(self, path: &Path) -> Result<Loaded, FileError> {
        let expr = |field: &'static str, text: &str| {
            parse(text).map_err(|source| FileError::Expr {
                path: path.into(),
                field,
                source,
            })
        };
        let mut problem = Problem::new(
            self.name,
            self.xi,
            expr("drift", &self.drift)?,
            expr("sigma", &self.sigma)?,
        );
        if let Some(iv) = self.interval {
            if let Some(Real(l)) = iv.l {
                problem.l = l;
            }
            if let Some(Real(r)) = iv.r {
                problem.r = r;
            }
            problem.zeta = iv.zeta.map(|z| z.0);
        }
        if let Some(p) = self.params {
            let params = &mut problem.params;
            if let Some(a) = p.a_scan {
                params.a_scan = a;
            }
            params.theta = p.theta;
            if let Some(c) = p.c {
                params.c = c;
            }
            if let Some(d) = p.delta {
                params.delta = d;
            }
            if let Some(s) = p.screen {
                let g = &mut params.screen;
                g.x_lo = s.x_lo.unwrap_or(g.x_lo);
                g.x_hi = s.x_hi.unwrap_or(g.x_hi);
                g.nx = s.nx.unwrap_or(g.nx);
                g.nt = s.nt.unwrap_or(g.nt);
                g.t_hi = s.t_hi.or(g.t_hi);
                g.tol = s.tol.unwrap_or(g.tol);
            }
        }
        problem.validate().map_err(|source| FileError::Invalid {
            path: path.into(),
            source,
        })?;
        Ok(Loaded {
            problem,
            sim: self.sim.unwrap_or_default(),
        })
    }
}
