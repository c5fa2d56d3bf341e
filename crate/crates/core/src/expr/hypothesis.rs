//! Grid screening of coefficient hypotheses (positivity, monotonicity,
//! lower bounds). A "passed" status only means no violation was found on
//! the sampled grid; it is a screen, not a proof.

use serde::{Deserialize, Serialize};

use super::Field;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    /// Geometric spacing; requires `0 < lo`.
    Log,
}

/// One axis of a screening grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub spacing: Spacing,
    /// Exclude `lo` itself (for half-open intervals such as `(0, 10]`).
    pub open_lo: bool,
}

impl Axis {
    pub fn point(value: f64) -> Axis {
        Axis {
            lo: value,
            hi: value,
            n: 1,
            spacing: Spacing::Linear,
            open_lo: false,
        }
    }

    pub fn linear(lo: f64, hi: f64, n: usize) -> Axis {
        Axis {
            lo,
            hi,
            n,
            spacing: Spacing::Linear,
            open_lo: false,
        }
    }

    pub fn log(lo: f64, hi: f64, n: usize) -> Axis {
        Axis {
            lo,
            hi,
            n,
            spacing: Spacing::Log,
            open_lo: false,
        }
    }

    pub fn open_lo(mut self) -> Axis {
        self.open_lo = true;
        self
    }

    pub fn nodes(&self) -> Vec<f64> {
        if self.n <= 1 {
            return vec![if self.open_lo { self.hi } else { self.lo }];
        }
        let (steps, shift) = if self.open_lo {
            (self.n as f64, 1.0)
        } else {
            ((self.n - 1) as f64, 0.0)
        };
        (0..self.n)
            .map(|i| {
                let u = (i as f64 + shift) / steps;
                let v = match self.spacing {
                    Spacing::Linear => self.lo + (self.hi - self.lo) * u,
                    Spacing::Log => (self.lo.ln() + (self.hi.ln() - self.lo.ln()) * u).exp(),
                };
                if i + 1 == self.n {
                    self.hi
                } else {
                    v
                }
            })
            .collect()
    }

    fn validate(&self, screened: bool) -> Result<(), String> {
        if !self.lo.is_finite() || !self.hi.is_finite() {
            return Err("region bounds must be finite".into());
        }
        if self.hi < self.lo {
            return Err(format!("empty axis [{}, {}]", self.lo, self.hi));
        }
        if self.spacing == Spacing::Log && self.lo <= 0.0 {
            return Err("log-spaced axis needs a positive lower bound".into());
        }
        if screened && self.n < 2 {
            return Err("a screened axis needs at least two grid points".into());
        }
        if self.n == 0 {
            return Err("axis has no grid points".into());
        }
        Ok(())
    }
}

/// Rectangle in `(t, x)` with its sampling grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub t: Axis,
    pub x: Axis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Property {
    #[serde(rename = "non-negativity")]
    NonNegative,
    #[serde(rename = "positivity-on-region")]
    Positive,
    #[serde(rename = "non-decreasing-in-t")]
    NonDecreasingInT,
    #[serde(rename = "non-decreasing-in-x")]
    NonDecreasingInX,
    /// Strict `value > 1/2`.
    #[serde(rename = "lower-bound-half")]
    LowerBoundHalf,
    /// `value ≥ 1/2 - tol`.
    #[serde(rename = "lower-bound-half-inclusive")]
    LowerBoundHalfInclusive,
}

impl Property {
    pub fn name(self) -> &'static str {
        match self {
            Property::NonNegative => "non-negativity",
            Property::Positive => "positivity-on-region",
            Property::NonDecreasingInT => "non-decreasing-in-t",
            Property::NonDecreasingInX => "non-decreasing-in-x",
            Property::LowerBoundHalf => "lower-bound-half",
            Property::LowerBoundHalfInclusive => "lower-bound-half-inclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum HypothesisStatus {
    Passed,
    FailedWithWitness {
        t: f64,
        x: f64,
        value: f64,
        detail: String,
    },
    Unverifiable {
        t: Option<f64>,
        x: Option<f64>,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub property: Property,
    /// Which function was screened, e.g. `b(x)/x`.
    pub subject: String,
    pub status: HypothesisStatus,
    pub grid: Region,
    pub tol: f64,
}

impl HypothesisReport {
    pub fn passed(&self) -> bool {
        self.status == HypothesisStatus::Passed
    }
}

/// Screen `property` of `field` on the sampled `region`.
pub fn check_hypothesis(
    field: &dyn Field,
    subject: &str,
    property: Property,
    region: &Region,
    tol: f64,
) -> HypothesisReport {
    let report = |status| HypothesisReport {
        property,
        subject: subject.to_string(),
        status,
        grid: *region,
        tol,
    };
    let screens_t = property == Property::NonDecreasingInT;
    let screens_x = property == Property::NonDecreasingInX;
    if let Err(reason) = region
        .t
        .validate(screens_t)
        .and_then(|_| region.x.validate(screens_x))
    {
        return report(HypothesisStatus::Unverifiable {
            t: None,
            x: None,
            reason,
        });
    }

    let ts = region.t.nodes();
    let xs = region.x.nodes();
    let mut values = Vec::with_capacity(ts.len());
    for &t in &ts {
        let mut row = Vec::with_capacity(xs.len());
        for &x in &xs {
            match field.eval(t, x) {
                Ok(v) => row.push(v),
                Err(e) => {
                    return report(HypothesisStatus::Unverifiable {
                        t: Some(t),
                        x: Some(x),
                        reason: e.to_string(),
                    })
                }
            }
        }
        values.push(row);
    }

    let fail = |i: usize, j: usize, detail: String| {
        report(HypothesisStatus::FailedWithWitness {
            t: ts[i],
            x: xs[j],
            value: values[i][j],
            detail,
        })
    };

    match property {
        Property::NonNegative | Property::Positive => {
            for (i, row) in values.iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    let bad = match property {
                        Property::NonNegative => v < -tol,
                        _ => v <= 0.0,
                    };
                    if bad {
                        return fail(i, j, format!("value {v} violates {}", property.name()));
                    }
                }
            }
        }
        Property::LowerBoundHalf | Property::LowerBoundHalfInclusive => {
            for (i, row) in values.iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    let bad = if property == Property::LowerBoundHalf {
                        v <= 0.5
                    } else {
                        v < 0.5 - tol
                    };
                    if bad {
                        return fail(i, j, format!("value {v} is not above 1/2"));
                    }
                }
            }
        }
        Property::NonDecreasingInT =>
        {
            #[allow(clippy::needless_range_loop)]
            for j in 0..xs.len() {
                for i in 1..ts.len() {
                    let drop = values[i][j] - values[i - 1][j];
                    if drop < -tol {
                        return fail(i, j, format!("decreases by {} from t = {}", -drop, ts[i - 1]));
                    }
                }
            }
        }
        Property::NonDecreasingInX => {
            for (i, row) in values.iter().enumerate() {
                for j in 1..xs.len() {
                    let drop = row[j] - row[j - 1];
                    if drop < -tol {
                        return fail(i, j, format!("decreases by {} from x = {}", -drop, xs[j - 1]));
                    }
                }
            }
        }
    }
    report(HypothesisStatus::Passed)
}
