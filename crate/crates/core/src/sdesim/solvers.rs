use serde::{Deserialize, Serialize};

use super::{girsanov_transform, BrownianPath, SimError};
use crate::expr::{finite, Field, LogCoordinates};
use crate::odeblow::{integrate_observed, BlowupInfo, Record, Refinement, StepControl, TrajectorySample};
use crate::problem::Problem;

fn positive_xi(problem: &Problem) -> Result<(), SimError> {
    if problem.xi > 0.0 {
        Ok(())
    } else {
        Err(SimError::Invalid(format!(
            "the transform solvers need ξ > 0, got {}",
            problem.xi
        )))
    }
}

fn path_control(ctrl: &StepControl, path: &BrownianPath) -> StepControl {
    StepControl {
        dt_max: Some(ctrl.dt_max.map_or(path.dt, |d| d.min(path.dt))),
        ..*ctrl
    }
}

/// Solve the random ODE `Y' = g(t) b(t, f(t) Y)`, `Y(0) = ξ`, on the path
/// and return `X = f Y` at the path nodes.
///
/// `log g` is interpolated linearly between nodes. Blow-up is declared when
/// `X` crosses the cap; the explosion time of `X` is that of `Y`.
pub fn solve_transformed(
    problem: &Problem,
    path: &BrownianPath,
    ctrl: &StepControl,
) -> Result<TrajectorySample, SimError> {
    positive_xi(problem)?;
    let st = girsanov_transform(&problem.sigma, path)?;
    let rhs = |t: f64, y: f64| {
        let log_g = st.log_g(path, t);
        let x = y * (-log_g).exp();
        let b = problem.drift.eval(t, x)?;
        finite(log_g.exp() * b, "g(t) b(t, f(t) y)")
    };
    let observe = |t: f64, y: f64| y.abs() * (-st.log_g(path, t)).exp();
    let mut traj = integrate_observed(
        &rhs,
        problem.xi,
        path.horizon(),
        &path_control(ctrl, path),
        Record::Nodes(&path.times),
        &observe,
    )?;
    for (k, v) in traj.values.iter_mut().enumerate() {
        *v *= st.f[k];
    }
    Ok(traj)
}

/// Integrate `Z = log X` for `σ ≡ 1`:
/// `Z_t = log ξ + ∫ (b̃(s, Z_s) − 1/2) ds + W_t`, with `b̃(t, z) = b(t, eᶻ)/eᶻ`.
///
/// The smooth part `U = Z − W` is integrated with the blow-up stepper and
/// capped at `log(x_cap)`, so superexponential growth never overflows.
pub fn solve_log_domain(
    problem: &Problem,
    path: &BrownianPath,
    ctrl: &StepControl,
) -> Result<TrajectorySample, SimError> {
    positive_xi(problem)?;
    if !problem.sigma_is_one() {
        return Err(SimError::Invalid(format!(
            "the log-domain solver needs σ ≡ 1, got σ = {}",
            problem.sigma
        )));
    }
    let tilde = LogCoordinates(&problem.drift);
    let rhs = |t: f64, u: f64| Ok(tilde.eval(t, u + path.at(t))? - 0.5);
    let observe = |t: f64, u: f64| u + path.at(t);
    let inner = StepControl {
        x_cap: ctrl.x_cap.ln(),
        ..path_control(ctrl, path)
    };
    let mut traj = integrate_observed(
        &rhs,
        problem.xi.ln(),
        path.horizon(),
        &inner,
        Record::Nodes(&path.times),
        &observe,
    )?;
    for (k, v) in traj.values.iter_mut().enumerate() {
        *v = (*v + path.w[k]).exp();
    }
    if let Some(info) = traj.blowup.as_mut() {
        info.cap_used = ctrl.x_cap;
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmOutcome {
    pub trajectory: TrajectorySample,
    /// First node where `X ≤ 0` although `ξ > 0`; a discretisation artefact.
    pub positivity_violation: Option<f64>,
}

/// Explicit Euler–Maruyama on the path grid,
/// `X_{i+1} = X_i + b(t_i, X_i) Δt + σ(t_i) X_i ΔW_i`, stopped once `|X| > x_cap`.
pub fn euler_maruyama(problem: &Problem, path: &BrownianPath, x_cap: f64) -> Result<EmOutcome, SimError> {
    let mut times = vec![0.0];
    let mut values = vec![problem.xi];
    let mut x = problem.xi;
    let mut violation = None;
    let mut blowup = None;
    for i in 0..path.steps() {
        let t = path.times[i];
        let err = |source| SimError::Evaluation { t, x, source };
        let b = problem.drift.eval(t, x).map_err(err)?;
        let s = problem.sigma.eval(t, 0.0).map_err(err)?;
        let next = x + b * (path.times[i + 1] - t) + s * x * (path.w[i + 1] - path.w[i]);
        if !next.is_finite() || next.abs() > x_cap {
            blowup = Some(BlowupInfo {
                t_estimate: path.times[i + 1],
                cap_used: x_cap,
                refinement: Refinement::CapHit,
            });
            break;
        }
        x = next;
        if problem.xi > 0.0 && x <= 0.0 && violation.is_none() {
            violation = Some(path.times[i + 1]);
        }
        times.push(path.times[i + 1]);
        values.push(x);
    }
    Ok(EmOutcome {
        trajectory: TrajectorySample {
            times,
            values,
            blowup,
        },
        positivity_violation: violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::sdesim::brownian_path;

    fn problem(drift: &str, sigma: &str) -> Problem {
        Problem::new("sim", 1.0, parse(drift).unwrap(), parse(sigma).unwrap())
    }

    #[test]
    fn zero_drift_is_exact_gbm() {
        let p = problem("0", "1");
        let path = brownian_path(1.0 / 64.0, 1.0, 42, 0).unwrap();
        let traj = solve_transformed(&p, &path, &StepControl::default()).unwrap();
        for (k, (&t, &x)) in path.times.iter().zip(&traj.values).enumerate() {
            let exact = (path.w[k] - t / 2.0).exp();
            assert!((x / exact - 1.0).abs() < 1e-12, "t = {t}");
        }
        let log = solve_log_domain(&p, &path, &StepControl::default()).unwrap();
        for (a, b) in traj.values.iter().zip(&log.values) {
            assert!((a / b - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_drift_matches_closed_form() {
        let mut p = problem("0.3 * x", "0.5");
        p.xi = 2.0;
        let path = brownian_path(1.0 / 256.0, 1.0, 9, 4).unwrap();
        let traj = solve_transformed(&p, &path, &StepControl::default()).unwrap();
        let st = girsanov_transform(&p.sigma, &path).unwrap();
        for (k, &t) in path.times.iter().enumerate() {
            let exact = 2.0 * (0.3 * t + st.stoch_int[k] - 0.5 * st.lambda[k]).exp();
            assert!((traj.values[k] / exact - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn log_domain_constant_tilde() {
        let p = problem("x", "1");
        let path = brownian_path(1.0 / 128.0, 2.0, 1, 1).unwrap();
        let traj = solve_log_domain(&p, &path, &StepControl::default()).unwrap();
        for (k, &t) in path.times.iter().enumerate() {
            let exact = (t / 2.0 + path.w[k]).exp();
            assert!((traj.values[k] / exact - 1.0).abs() < 1e-10);
        }
        assert!(solve_log_domain(&problem("x", "2"), &path, &StepControl::default()).is_err());
    }

    #[test]
    fn explosive_drift_agrees_across_transforms() {
        let p = problem("x * (1/2 + x)", "1");
        let path = brownian_path(30.0 / 1024.0, 30.0, 2024, 0).unwrap();
        let ctrl = StepControl::default();
        let a = solve_transformed(&p, &path, &ctrl).unwrap();
        let b = solve_log_domain(&p, &path, &ctrl).unwrap();
        let ta = a.blowup.expect("transform solver sees blow-up").t_estimate;
        let tb = b.blowup.expect("log-domain solver sees blow-up").t_estimate;
        assert!((ta - tb).abs() < 1e-3, "{ta} vs {tb}");
        for (x, z) in a.values.iter().zip(&b.values) {
            if *x > 1e6 {
                break;
            }
            assert!((x / z - 1.0).abs() < 1e-4);
        }
        // Y = g X is non-decreasing because b ≥ 0
        let st = girsanov_transform(&p.sigma, &path).unwrap();
        let y: Vec<f64> = a.values.iter().zip(&st.g).map(|(x, g)| x * g).collect();
        assert!(y.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12)));
        assert!(a.values.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn euler_maruyama_shape_and_cap() {
        let p = problem("0", "1");
        let path = brownian_path(0.01, 1.0, 3, 0).unwrap();
        let em = euler_maruyama(&p, &path, 1e12).unwrap();
        assert_eq!(em.trajectory.times.len(), path.steps() + 1);
        assert!(em.trajectory.blowup.is_none());

        let p = problem("x^3", "1");
        let path = brownian_path(0.01, 5.0, 3, 0).unwrap();
        let em = euler_maruyama(&p, &path, 1e12).unwrap();
        let info = em.trajectory.blowup.expect("cap hit");
        assert_eq!(info.refinement, Refinement::CapHit);
        assert!(em.trajectory.values.iter().all(|v| v.abs() <= 1e12));
    }

    #[test]
    fn euler_maruyama_flags_negative_values() {
        let p = problem("0", "3");
        let path = brownian_path(0.5, 50.0, 1, 0).unwrap();
        let em = euler_maruyama(&p, &path, 1e12).unwrap();
        assert!(em.positivity_violation.is_some());
    }

    #[test]
    fn deterministic_reduction_is_first_order() {
        let p = problem("x", "0");
        let errs: Vec<f64> = [0.01, 0.005]
            .iter()
            .map(|&dt| {
                let path = brownian_path(dt, 1.0, 0, 0).unwrap();
                let em = euler_maruyama(&p, &path, 1e12).unwrap();
                (em.trajectory.values.last().unwrap() - 1f64.exp()).abs()
            })
            .collect();
        let ratio = errs[0] / errs[1];
        assert!((ratio - 2.0).abs() < 0.1, "{ratio}");
    }
}
