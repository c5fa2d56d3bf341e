use serde::{Deserialize, Serialize};

use super::{BrownianPath, SimError};
use crate::expr::Expr;
use crate::quadrature::{integrate, Tolerance};

/// Discretised `∫σ dW`, `Λ = ∫σ²` and the integrating factors
/// `g = exp(−∫σ dW + Λ/2)`, `f = 1/g` on the nodes of a Brownian path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformState {
    pub times: Vec<f64>,
    pub stoch_int: Vec<f64>,
    pub lambda: Vec<f64>,
    pub g: Vec<f64>,
    pub f: Vec<f64>,
}

pub fn girsanov_transform(sigma: &Expr, path: &BrownianPath) -> Result<TransformState, SimError> {
    let n = path.times.len();
    let sig = |t: f64| {
        sigma
            .eval(t, 0.0)
            .map_err(|source| SimError::Evaluation { t, x: 0.0, source })
    };
    let mut stoch_int = Vec::with_capacity(n);
    let mut lambda = Vec::with_capacity(n);
    stoch_int.push(0.0);
    lambda.push(0.0);
    let constant = !sigma.uses_t();
    let s0 = sig(0.0)?;
    for i in 0..n - 1 {
        let (a, b) = (path.times[i], path.times[i + 1]);
        // left-point Itô sum
        let s = if constant { s0 } else { sig(a)? };
        stoch_int.push(stoch_int[i] + s * (path.w[i + 1] - path.w[i]));
        let panel = if constant {
            s0 * s0 * (b - a)
        } else {
            let sq = |u: f64| sigma.eval(u, 0.0).map(|v| v * v).unwrap_or(f64::NAN);
            integrate(&sq, a, b, Tolerance::new(1e-14, 1e-12))
                .map_err(|e| SimError::Invalid(format!("Λ on [{a}, {b}]: {e}")))?
                .value
        };
        lambda.push(lambda[i] + panel);
    }
    let g: Vec<f64> = stoch_int
        .iter()
        .zip(&lambda)
        .map(|(i, l)| (-i + 0.5 * l).exp())
        .collect();
    let f = g.iter().map(|g| 1.0 / g).collect();
    Ok(TransformState {
        times: path.times.clone(),
        stoch_int,
        lambda,
        g,
        f,
    })
}

impl TransformState {
    /// `log g(t)`, linear in `t` between nodes.
    pub fn log_g(&self, path: &BrownianPath, t: f64) -> f64 {
        let (i, frac) = path.locate(t);
        let at = |k: usize| -self.stoch_int[k] + 0.5 * self.lambda[k];
        if frac == 0.0 {
            at(i)
        } else {
            at(i) + frac * (at(i + 1) - at(i))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::sdesim::brownian_path;

    #[test]
    fn zero_sigma_is_trivial() {
        let path = brownian_path(0.1, 1.0, 1, 0).unwrap();
        let st = girsanov_transform(&parse("0").unwrap(), &path).unwrap();
        assert!(st.g.iter().all(|&g| g == 1.0));
        assert!(st.lambda.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn unit_sigma_matches_closed_form() {
        let path = brownian_path(0.01, 1.0, 2, 5).unwrap();
        let st = girsanov_transform(&parse("1").unwrap(), &path).unwrap();
        for (k, &t) in path.times.iter().enumerate() {
            let want = (-path.w[k] + t / 2.0).exp();
            assert!((st.g[k] / want - 1.0).abs() < 1e-12);
            assert!((st.g[k] * st.f[k] - 1.0).abs() <= 2.0 * f64::EPSILON);
        }
        assert_eq!(st.g[0], 1.0);
    }

    #[test]
    fn lambda_of_constant_and_varying_sigma() {
        let path = brownian_path(0.25, 2.0, 3, 0).unwrap();
        let st = girsanov_transform(&parse("2").unwrap(), &path).unwrap();
        for (l, t) in st.lambda.iter().zip(&path.times) {
            assert!((l - 4.0 * t).abs() < 1e-12);
        }
        let st = girsanov_transform(&parse("1 + t").unwrap(), &path).unwrap();
        for (l, t) in st.lambda.iter().zip(&path.times) {
            let want = ((1.0 + t).powi(3) - 1.0) / 3.0;
            assert!((l - want).abs() < 1e-10);
        }
        assert!(st.lambda.windows(2).all(|w| w[1] >= w[0]));
    }
}
