use super::{
    any3, finite3, lossy, num, screen_t_hi, shells, t_axis, x_axis, CriterionId, CriterionReport, Verdict,
};
use crate::expr::{Axis, Property, Region};
use crate::odeblow::{integrate_blowup, StepControl};
use crate::problem::Problem;
use crate::quadrature::{classify_toward, IntegralVerdict, Tolerance};

/// Sample points of `[ξ, ∞)` for the positivity screen.
fn ray_axis(problem: &Problem) -> Axis {
    let g = &problem.params.screen;
    let xi = problem.xi;
    if xi > 0.0 {
        Axis::log(xi, g.x_hi.max(1e4 * xi), g.nx)
    } else {
        Axis::linear(xi, xi.abs().max(1.0) + g.x_hi, g.nx)
    }
}

/// `y' = b(y)`: blow-up iff `B_ξ(∞) = ∫_ξ^∞ ds/b(s) < ∞`, and then
/// `T_e = B_ξ(∞)`.
pub fn osgood_autonomous(problem: &Problem, tol: Tolerance) -> CriterionReport {
    let mut report = CriterionReport::new(CriterionId::Osgood, problem);
    if problem.drift.uses_t() {
        report.note("the drift depends on t; use osgood-nonautonomous");
        return report;
    }
    if !problem.sigma_is_zero() {
        report.note(format!(
            "σ = {} is not zero; the verdict concerns the deterministic equation y' = b(y)",
            problem.sigma
        ));
    }
    let region = Region {
        t: Axis::point(0.0),
        x: ray_axis(problem),
    };
    report.screen(
        &problem.drift,
        "b(x)",
        Property::Positive,
        region,
        problem.params.screen.tol,
    );

    let b = &problem.drift;
    let recip = lossy(|s| b.eval(0.0, s).map(|v| 1.0 / v));
    let tail = classify_toward(&recip, problem.xi, f64::INFINITY, &shells(tol));
    report.integral_push("B_xi(inf)", tail.clone());
    let verdict = match tail {
        IntegralVerdict::Convergent { value, .. } => {
            report.explosion_time = Some(value);
            Verdict::AlmostSureExplosion
        }
        IntegralVerdict::Divergent { .. } => Verdict::NoAlmostSureExplosion,
        IntegralVerdict::Inconclusive { .. } => Verdict::Inconclusive,
    };
    report.finish(verdict)
}

/// `y' = b(t, y)` with `b` non-decreasing in both arguments: blow-up iff
/// `∫_ξ^∞ ds/b(a, s) < ∞` for some `a > 0`, checked over the `a`-scan.
pub fn osgood_nonautonomous(problem: &Problem, tol: Tolerance) -> CriterionReport {
    let mut report = CriterionReport::new(CriterionId::OsgoodNonautonomous, problem);
    let params = &problem.params;
    let c = params.c;
    if !(problem.xi > c) {
        report.note(format!("needs ξ > c, got ξ = {}, c = {c}", problem.xi));
        return report;
    }
    if !problem.sigma_is_zero() {
        report.note(format!(
            "σ = {} is not zero; the verdict concerns the deterministic equation y' = b(t, y)",
            problem.sigma
        ));
    }
    let b = &problem.drift;
    let t = t_axis(screen_t_hi(problem), params.screen.nt);
    let all = Region {
        t,
        x: x_axis(problem, None),
    };
    let upper = Region {
        t,
        x: x_axis(problem, Some(c)),
    };
    let stol = params.screen.tol;
    report.screen(b, "b(t, x)", Property::NonNegative, all, stol);
    report.screen(b, "b(t, x)", Property::Positive, upper, stol);
    report.screen(b, "b(t, x)", Property::NonDecreasingInT, upper, stol);
    report.screen(b, "b(t, x)", Property::NonDecreasingInX, upper, stol);

    let mut bound = f64::INFINITY;
    let mut per_a = Vec::new();
    for &a in &params.a_scan {
        let recip = lossy(|s| b.eval(a, s).map(|v| 1.0 / v));
        let tail = classify_toward(&recip, problem.xi, f64::INFINITY, &shells(tol));
        if let Some(v) = tail.value() {
            // after time a the solution is above ξ and b(t, ·) ≥ b(a, ·)
            bound = bound.min(a + v);
        }
        per_a.push(finite3(&tail));
        report.integral_push(format!("int_xi^inf ds/b(a,s) [a={}]", num(a)), tail);
    }
    let verdict = match any3(per_a) {
        Some(true) => Verdict::AlmostSureExplosion,
        Some(false) => Verdict::NoAlmostSureExplosion,
        None => Verdict::Inconclusive,
    };
    if verdict == Verdict::AlmostSureExplosion {
        report.note(format!("explosion happens no later than {bound:.6}"));
        let f = |t: f64, y: f64| b.eval(t, y);
        let horizon = bound * (1.0 + 1e-6) + 1e-9;
        match integrate_blowup(&f, problem.xi, horizon, &StepControl::default()) {
            Ok(traj) => match traj.blowup {
                Some(info) => {
                    report.explosion_time = Some(info.t_estimate);
                    report.note(format!(
                        "explosion time estimated by the blow-up integrator ({})",
                        info.refinement.as_str()
                    ));
                }
                None => report.note("the blow-up integrator did not reach the cap before the bound"),
            },
            Err(e) => report.note(format!("blow-up integration failed: {e}")),
        }
    }
    report.finish(verdict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn problem(drift: &str, xi: f64) -> Problem {
        Problem::new("osgood", xi, parse(drift).unwrap(), parse("0").unwrap())
    }

    #[test]
    fn power_law_explosion_times() {
        for p in [1.5, 2.0, 3.0, 4.0] {
            let r = osgood_autonomous(&problem(&format!("x^{p}"), 1.0), Tolerance::default());
            assert_eq!(r.verdict, Verdict::AlmostSureExplosion, "{r:?}");
            let t = r.explosion_time.unwrap();
            assert!((t - 1.0 / (p - 1.0)).abs() < 1e-6, "p = {p}: {t}");
        }
    }

    #[test]
    fn constant_drift_from_zero() {
        let r = osgood_autonomous(&problem("1", 0.0), Tolerance::default());
        assert_eq!(r.verdict, Verdict::NoAlmostSureExplosion, "{r:?}");
        assert!(r.explosion_time.is_none());
    }

    #[test]
    fn vanishing_drift_is_inconclusive() {
        let r = osgood_autonomous(&problem("x - 2", 1.0), Tolerance::default());
        assert_eq!(r.verdict, Verdict::Inconclusive);
        assert!(!r.screens_passed());
    }

    #[test]
    fn nonautonomous_examples() {
        let r = osgood_nonautonomous(&problem("(1 + t) * x^2", 1.0), Tolerance::default());
        assert_eq!(r.verdict, Verdict::AlmostSureExplosion, "{r:?}");
        let at_one = r.integral("int_xi^inf ds/b(a,s) [a=1]").unwrap();
        assert!((at_one.value().unwrap() - 0.5).abs() < 1e-8);
        // y' = (1 + t) y², y(0) = 1 gives 1/y = 1 - t - t²/2
        let exact = 3f64.sqrt() - 1.0;
        assert!((r.explosion_time.unwrap() - exact).abs() < 1e-3, "{r:?}");

        for drift in ["x", "exp(t) * x"] {
            let r = osgood_nonautonomous(&problem(drift, 1.0), Tolerance::default());
            assert_eq!(r.verdict, Verdict::NoAlmostSureExplosion, "{drift}: {r:?}");
        }
    }
}
