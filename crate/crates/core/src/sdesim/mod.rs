//! Pathwise simulation of `dX = b(t, X) dt + σ(t) X dW`.
//!
//! Two solvers use the exact integrating-factor transforms, so the only
//! error left is that of the ODE integrator; Euler–Maruyama is kept as an
//! independent cross-check.

mod brownian;
mod solvers;
mod timechange;
mod transform;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::EvalError;
use crate::odeblow::{OdeError, StepControl, TrajectorySample};
use crate::problem::Problem;

pub use brownian::{brownian_path, BrownianPath};
pub use solvers::{euler_maruyama, solve_log_domain, solve_transformed, EmOutcome};
pub use timechange::{time_change_reduce, ReducedDrift, TimeChangeError, TimeChangedProblem};
pub use transform::{girsanov_transform, TransformState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("coefficient failed at t = {t}, x = {x}: {source}")]
    Evaluation {
        t: f64,
        x: f64,
        #[source]
        source: EvalError,
    },
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Transform,
    Logdomain,
    Em,
}

impl Solver {
    pub fn as_str(self) -> &'static str {
        match self {
            Solver::Transform => "transform",
            Solver::Logdomain => "logdomain",
            Solver::Em => "em",
        }
    }
}

impl std::str::FromStr for Solver {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "transform" => Ok(Solver::Transform),
            "logdomain" => Ok(Solver::Logdomain),
            "em" => Ok(Solver::Em),
            other => Err(format!(
                "unknown solver `{other}` (expected transform, logdomain or em)"
            )),
        }
    }
}

impl std::fmt::Display for Solver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One simulated path, whichever solver produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub trajectory: TrajectorySample,
    /// Only Euler–Maruyama can leave `(0, ∞)`; see [`EmOutcome`].
    pub positivity_violation: Option<f64>,
}

pub fn simulate(
    problem: &Problem,
    path: &BrownianPath,
    solver: Solver,
    ctrl: &StepControl,
) -> Result<Simulation, SimError> {
    let trajectory = match solver {
        Solver::Transform => solve_transformed(problem, path, ctrl)?,
        Solver::Logdomain => solve_log_domain(problem, path, ctrl)?,
        Solver::Em => {
            let em = euler_maruyama(problem, path, ctrl.x_cap)?;
            return Ok(Simulation {
                trajectory: em.trajectory,
                positivity_violation: em.positivity_violation,
            });
        }
    };
    Ok(Simulation {
        trajectory,
        positivity_violation: None,
    })
}
