use std::sync::Mutex;

use thiserror::Error;

use crate::expr::{
    check_hypothesis, Axis, EvalError, Field, FnField, HypothesisReport, LogCoordinates, Property, Region,
};
use crate::problem::Problem;
use crate::quadrature::{classify_toward, Antiderivative, IntegralVerdict, ShellConfig, Tolerance};

type Density = Box<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TimeChangeError {
    #[error("σ² is not positive on the screened times: {0:?}")]
    Degenerate(Box<HypothesisReport>),
    #[error(
        "Λ(∞) = ∫σ² = {value} is finite; the reduction does not apply (use the bounded-Λ result instead)"
    )]
    BoundedLambda { value: f64 },
    #[error("could not decide whether Λ(∞) is finite: {0}")]
    Undetermined(String),
}

/// The equation rewritten in the time `Λ(t) = ∫_0^t σ²`, where the noise
/// coefficient becomes 1 and the drift becomes `b(Λ⁻¹(t), x) / σ²(Λ⁻¹(t))`.
pub struct TimeChangedProblem {
    pub original: Problem,
    lambda: Option<Antiderivative<Density>>,
    last_inverse: Mutex<(f64, f64)>,
}

impl std::fmt::Debug for TimeChangedProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TimeChangedProblem")
            .field("original", &self.original.name)
            .field("identity", &self.is_identity())
            .finish()
    }
}

pub fn time_change_reduce(problem: &Problem) -> Result<TimeChangedProblem, TimeChangeError> {
    if problem.sigma_is_one() {
        return Ok(TimeChangedProblem {
            original: problem.clone(),
            lambda: None,
            last_inverse: Mutex::new((0.0, 0.0)),
        });
    }
    let sigma = problem.sigma.clone();
    let sq = FnField(move |t: f64, _x: f64| sigma.eval(t, 0.0).map(|s| s * s));
    let grid = &problem.params.screen;
    let t_hi = grid
        .t_hi
        .unwrap_or_else(|| 2.0 * problem.params.a_scan.iter().copied().fold(1.0, f64::max));
    let region = Region {
        t: Axis::linear(0.0, t_hi, grid.nt * 4).open_lo(),
        x: Axis::point(0.0),
    };
    let screen = check_hypothesis(&sq, "σ²(t)", Property::Positive, &region, grid.tol);
    if !screen.passed() {
        return Err(TimeChangeError::Degenerate(Box::new(screen)));
    }

    let sigma = problem.sigma.clone();
    let density: Density = Box::new(move |t: f64| match sigma.eval(t, 0.0) {
        Ok(s) => s * s,
        Err(_) => f64::NAN,
    });
    match classify_toward(&density, 0.0, f64::INFINITY, &ShellConfig::default()) {
        IntegralVerdict::Divergent { .. } => {}
        IntegralVerdict::Convergent { value, .. } => return Err(TimeChangeError::BoundedLambda { value }),
        IntegralVerdict::Inconclusive { diagnostic, .. } => {
            return Err(TimeChangeError::Undetermined(diagnostic))
        }
    }
    Ok(TimeChangedProblem {
        original: problem.clone(),
        lambda: Some(Antiderivative::new(
            density,
            0.0,
            0.0,
            f64::INFINITY,
            Tolerance::new(1e-14, 1e-13),
        )),
        last_inverse: Mutex::new((0.0, 0.0)),
    })
}

fn non_finite(what: &str) -> EvalError {
    EvalError::NonFinite { expr: what.into() }
}

impl TimeChangedProblem {
    /// True when `σ ≡ 1` and the reduction is the identity.
    pub fn is_identity(&self) -> bool {
        self.lambda.is_none()
    }

    pub fn lambda(&self, t: f64) -> Result<f64, EvalError> {
        match &self.lambda {
            None => Ok(t),
            Some(anti) => anti.eval(t).map_err(|_| non_finite("Λ(t)")),
        }
    }

    /// `Λ⁻¹(s)` by bracketed bisection/secant on the increasing `Λ`.
    pub fn lambda_inv(&self, s: f64) -> Result<f64, EvalError> {
        if self.lambda.is_none() || s <= 0.0 {
            return Ok(s.max(0.0));
        }
        {
            let last = self.last_inverse.lock().unwrap_or_else(|e| e.into_inner());
            if last.0 == s {
                return Ok(last.1);
            }
        }
        let target = |u: f64| self.lambda(u).map(|v| v - s);
        let (mut lo, mut f_lo) = (0.0, -s);
        let mut hi = 1.0;
        let mut f_hi = target(hi)?;
        while f_hi < 0.0 {
            lo = hi;
            f_lo = f_hi;
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(non_finite("Λ⁻¹ bracket"));
            }
            f_hi = target(hi)?;
        }
        let tol = 1e-13 * s.max(1.0);
        let mut u = hi;
        for iter in 0..200 {
            let secant = lo - f_lo * (hi - lo) / (f_hi - f_lo);
            u = if iter % 3 != 2 && secant > lo && secant < hi {
                secant
            } else {
                0.5 * (lo + hi)
            };
            let v = target(u)?;
            if v.abs() <= tol || hi - lo <= f64::EPSILON * hi {
                break;
            }
            if v < 0.0 {
                lo = u;
                f_lo = v;
            } else {
                hi = u;
                f_hi = v;
            }
        }
        *self.last_inverse.lock().unwrap_or_else(|e| e.into_inner()) = (s, u);
        Ok(u)
    }

    /// `(t, x) ↦ b(Λ⁻¹(t), x) / σ²(Λ⁻¹(t))`.
    pub fn reduced_drift(&self) -> ReducedDrift<'_> {
        ReducedDrift(self)
    }

    /// `b̆(t, x) = b(Λ⁻¹(t), eˣ) / (σ²(Λ⁻¹(t)) eˣ)`.
    pub fn breve(&self) -> LogCoordinates<ReducedDrift<'_>> {
        LogCoordinates(ReducedDrift(self))
    }
}

#[derive(Clone, Copy)]
pub struct ReducedDrift<'a>(&'a TimeChangedProblem);

impl Field for ReducedDrift<'_> {
    fn eval(&self, t: f64, x: f64) -> Result<f64, EvalError> {
        let p = &self.0.original;
        if self.0.is_identity() {
            return p.drift.eval(t, x);
        }
        let u = self.0.lambda_inv(t)?;
        let s = p.sigma.eval(u, 0.0)?;
        let sq = s * s;
        if sq == 0.0 {
            return Err(EvalError::DivisionByZero {
                expr: format!("σ²(Λ⁻¹({t}))"),
            });
        }
        crate::expr::finite(p.drift.eval(u, x)? / sq, "b(Λ⁻¹(t), x) / σ²(Λ⁻¹(t))")
    }
}
