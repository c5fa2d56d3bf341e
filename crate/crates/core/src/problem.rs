//! The SDE under study and the parameters of the pathwise criteria.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::expr::Expr;

/// `dX = b(t, X) dt + σ(t) X dW`, `X(0) = ξ`, together with the state
/// interval `(ℓ, r)` used by Feller's test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub name: String,
    pub xi: f64,
    pub drift: Expr,
    pub sigma: Expr,
    pub l: f64,
    pub r: f64,
    /// Anchor of the scale function; defaults to `ξ`.
    pub zeta: Option<f64>,
    pub params: CriterionParams,
}

/// Parameters of the criteria that freeze time at `a` and integrate from `θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionParams {
    pub a_scan: Vec<f64>,
    /// Lower limit of the tail integrals; `None` picks the criterion default.
    pub theta: Option<f64>,
    /// Threshold of the monotonicity region.
    pub c: f64,
    /// Relative offset of the default `θ = e^c (1 + δ)`.
    pub delta: f64,
    pub screen: ScreenGrid,
}

impl Default for CriterionParams {
    fn default() -> Self {
        CriterionParams {
            a_scan: (-4..=4).map(|k| 2f64.powi(k)).collect(),
            theta: None,
            c: 0.0,
            delta: 1e-3,
            screen: ScreenGrid::default(),
        }
    }
}

/// Sampling grid for hypothesis screens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreenGrid {
    pub x_lo: f64,
    pub x_hi: f64,
    pub nx: usize,
    pub nt: usize,
    /// Largest screened time; `None` means twice the largest scanned `a`.
    pub t_hi: Option<f64>,
    /// Slack allowed in monotonicity and bound checks.
    pub tol: f64,
}

impl Default for ScreenGrid {
    fn default() -> Self {
        ScreenGrid {
            x_lo: 1e-3,
            x_hi: 1e2,
            nx: 121,
            nt: 17,
            t_hi: None,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("ξ must be finite, got {0}")]
    Xi(f64),
    #[error("σ may depend on t only, but `{0}` uses x")]
    SigmaUsesX(String),
    #[error("need ℓ < ζ < r, got ℓ = {l}, ζ = {zeta}, r = {r}")]
    Interval { l: f64, zeta: f64, r: f64 },
    #[error("a-scan values must be positive and finite")]
    Scan,
    #[error("invalid screening grid: {0}")]
    Grid(String),
}

impl Problem {
    pub fn new(name: impl Into<String>, xi: f64, drift: Expr, sigma: Expr) -> Problem {
        Problem {
            name: name.into(),
            xi,
            drift,
            sigma,
            l: 0.0,
            r: f64::INFINITY,
            zeta: None,
            params: CriterionParams::default(),
        }
    }

    pub fn zeta(&self) -> f64 {
        self.zeta.unwrap_or(self.xi)
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        if !self.xi.is_finite() {
            return Err(ProblemError::Xi(self.xi));
        }
        if self.sigma.uses_x() {
            return Err(ProblemError::SigmaUsesX(self.sigma.to_string()));
        }
        let zeta = self.zeta();
        if !(self.l < zeta && zeta < self.r) {
            return Err(ProblemError::Interval {
                l: self.l,
                zeta,
                r: self.r,
            });
        }
        if self.params.a_scan.is_empty() || self.params.a_scan.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(ProblemError::Scan);
        }
        let g = &self.params.screen;
        if !(g.x_lo > 0.0 && g.x_lo < g.x_hi && g.x_hi.is_finite()) || g.nx < 2 || g.nt < 2 {
            return Err(ProblemError::Grid(format!(
                "need 0 < x_lo < x_hi < ∞ and at least two points per axis, got {g:?}"
            )));
        }
        Ok(())
    }

    /// True when σ is the constant 1 everywhere it is evaluated.
    pub fn sigma_is_one(&self) -> bool {
        !self.sigma.uses_t() && self.sigma.eval(0.0, 0.0).map(|s| s * s == 1.0).unwrap_or(false)
    }

    /// True when σ is identically zero (the equation is an ODE).
    pub fn sigma_is_zero(&self) -> bool {
        !self.sigma.uses_t() && self.sigma.eval(0.0, 0.0).map(|s| s == 0.0).unwrap_or(false)
    }

    /// SHA-256 of the dynamics `(ξ, b, σ)`. Reports and ensembles built from
    /// the same equation share this hash regardless of criterion settings.
    pub fn hash(&self) -> String {
        let canonical = format!("xi={:?};drift={};sigma={}", self.xi, self.drift, self.sigma);
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
