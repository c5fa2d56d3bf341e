use super::{
    and3, any3, finite3, lossy, num, screen_t_hi, shells, t_axis, x_axis, z_axis, CriterionId,
    CriterionReport, Verdict,
};
use crate::expr::{Field, Property, Region};
use crate::problem::Problem;
use crate::quadrature::{classify_singular_left, classify_tail, IntegralVerdict, Tolerance};
use crate::sdesim::{time_change_reduce, TimeChangeError, TimeChangedProblem};

/// Grid points per doubling when scanning a denominator for sign.
const SCAN_PER_OCTAVE: i32 = 4;
const SCAN_OCTAVES: i32 = 60;

/// Reduce to `σ ≡ 1` in Λ-time, recording why when that is impossible.
fn reduce(problem: &Problem, report: &mut CriterionReport) -> Option<TimeChangedProblem> {
    match time_change_reduce(problem) {
        Ok(tc) => Some(tc),
        Err(TimeChangeError::Degenerate(screen)) => {
            report.hypotheses.push(*screen);
            report.note("σ² vanishes on the screened times; the time change does not exist");
            None
        }
        Err(TimeChangeError::BoundedLambda { value }) => {
            report.note(format!(
                "Λ(∞) = {value} < ∞: this criterion does not apply. On paths where X stays \
                 bounded for all time, ∫_θ^∞ ds/b(a,s) diverges for every a > 0 and θ > 0"
            ));
            None
        }
        Err(e @ TimeChangeError::Undetermined(_)) => {
            report.note(e.to_string());
            None
        }
    }
}

/// Screens on `b̃` (or `b̆` after a time change) in log coordinates; the
/// `above` region is `z > c` for the monotonicity in space, everything
/// else is screened on the whole sampled line.
fn screen_log_drift(
    report: &mut CriterionReport,
    problem: &Problem,
    tc: &TimeChangedProblem,
    properties: &[(Property, bool)],
) {
    let t_hi = screen_t_hi(problem);
    let t_hi = if tc.is_identity() {
        t_hi
    } else {
        match tc.lambda(t_hi) {
            Ok(v) => v,
            Err(e) => {
                report.note(format!("Λ({t_hi}) failed: {e}"));
                return;
            }
        }
    };
    let subject = if tc.is_identity() {
        "b(t, e^z)/e^z"
    } else {
        "b(Λ⁻¹(t), e^z)/(σ²(Λ⁻¹(t)) e^z)"
    };
    let breve = tc.breve();
    let t = t_axis(t_hi, problem.params.screen.nt);
    for &(property, above_c) in properties {
        let region = Region {
            t,
            x: z_axis(problem, above_c.then_some(problem.params.c)),
        };
        report.screen(&breve, subject, property, region, problem.params.screen.tol);
    }
}

/// Move `θ` above the last sign change of `den` on `[θ, θ·2^60]`.
/// Returns the new start and a note, or the reason no start exists.
fn lift_theta(den: &dyn Fn(f64) -> f64, theta: f64, delta: f64) -> Result<(f64, Option<String>), String> {
    let at = |j: i32| theta * 2f64.powf(j as f64 / SCAN_PER_OCTAVE as f64);
    let last_j = SCAN_PER_OCTAVE * SCAN_OCTAVES;
    let bad = |s: f64| !(den(s) > 0.0);
    if bad(at(last_j)) {
        return Err(format!(
            "denominator is not positive at s = {:e}; it is not eventually positive",
            at(last_j)
        ));
    }
    let Some(j) = (0..last_j).rev().find(|&j| bad(at(j))) else {
        return Ok((theta, None));
    };
    let (mut lo, mut hi) = (at(j), at(j + 1));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if bad(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lifted = hi * (1.0 + delta);
    Ok((
        lifted,
        Some(format!(
            "θ lifted from {theta} to {lifted} above the last zero of the denominator near s = {hi}"
        )),
    ))
}

/// `θ` for the pathwise tests: the explicit value, or `e^c (1 + δ)`.
fn pathwise_theta(problem: &Problem, report: &mut CriterionReport) -> f64 {
    let params = &problem.params;
    let threshold = params.c.exp();
    match params.theta {
        Some(theta) => {
            if theta <= threshold {
                report.note(format!(
                    "θ = {theta} is not above e^c = {threshold}; proceeding where the denominator is positive"
                ));
            }
            theta
        }
        None => threshold * (1.0 + params.delta),
    }
}

/// `σ ≡ 1`: `X` explodes iff `∫_θ^∞ ds/(2b(a,s) − s) < ∞` for some `a > 0`,
/// provided `b̃` is non-decreasing in `t`, non-decreasing in `z` above `c`,
/// `≥ 1/2` everywhere and `> 1/2` above `c`. General `σ` with `Λ(∞) = ∞`
/// uses the same screens on `b̆` and the denominator `2b(a,s) − σ²(a)s`.
pub fn semilinear_pathwise(problem: &Problem, tol: Tolerance) -> CriterionReport {
    let mut report = CriterionReport::new(CriterionId::Pathwise, problem);
    if !(problem.xi > 0.0) {
        report.note(format!("needs ξ > 0, got {}", problem.xi));
        return report;
    }
    let Some(tc) = reduce(problem, &mut report) else {
        return report;
    };
    screen_log_drift(
        &mut report,
        problem,
        &tc,
        &[
            (Property::NonDecreasingInT, false),
            (Property::NonDecreasingInX, true),
            (Property::LowerBoundHalfInclusive, false),
            (Property::LowerBoundHalf, true),
        ],
    );
    let theta = pathwise_theta(problem, &mut report);
    let b = &problem.drift;
    let cfg = shells(tol);
    let mut per_a = Vec::new();
    for &a in &problem.params.a_scan {
        let label = format!("int_theta^inf ds/(2b(a,s)-sigma2(a)s) [a={}]", num(a));
        let s2 = match problem.sigma.eval(a, 0.0) {
            Ok(s) => s * s,
            Err(e) => {
                per_a.push(None);
                report.integral_push(label, IntegralVerdict::inconclusive(0, 0.0, format!("σ(a): {e}")));
                continue;
            }
        };
        let den = lossy(|s| b.eval(a, s).map(|v| 2.0 * v - s2 * s));
        let verdict = match lift_theta(&den, theta, problem.params.delta) {
            Ok((start, note)) => {
                if let Some(note) = note {
                    report.note(format!("a = {}: {note}", num(a)));
                }
                classify_tail(&|s: f64| 1.0 / den(s), start, &cfg)
            }
            Err(reason) => IntegralVerdict::inconclusive(0, 0.0, reason),
        };
        per_a.push(finite3(&verdict));
        report.integral_push(label, verdict);
    }
    let verdict = match any3(per_a) {
        Some(true) => Verdict::AlmostSureExplosion,
        Some(false) => Verdict::NoAlmostSureExplosion,
        None => Verdict::Inconclusive,
    };
    report.finish(verdict)
}

fn screen_monotone_positive(report: &mut CriterionReport, problem: &Problem, positive_above: Option<f64>) {
    let t = t_axis(screen_t_hi(problem), problem.params.screen.nt);
    let c = problem.params.c;
    let b: &dyn Field = &problem.drift;
    let stol = problem.params.screen.tol;
    let upper = Region {
        t,
        x: x_axis(problem, Some(c)),
    };
    report.screen(b, "b(t, x)", Property::NonDecreasingInT, upper, stol);
    report.screen(b, "b(t, x)", Property::NonDecreasingInX, upper, stol);
    let positive = Region {
        t,
        x: x_axis(problem, positive_above),
    };
    report.screen(b, "b(t, x)", Property::Positive, positive, stol);
}

/// One-sided: if the path explodes then `∫_θ^∞ ds/b(a,s) < ∞`. Divergence
/// for every scanned `a` rules explosion out; convergence proves nothing.
pub fn necessity_test(problem: &Problem, tol: Tolerance) -> CriterionReport {
    let mut report = CriterionReport::new(CriterionId::Necessity, problem);
    let c = problem.params.c;
    let general = !problem.sigma_is_one();
    let floor = if general { 0.0 } else { c };
    if !(problem.xi > floor) {
        report.note(format!("needs ξ > {floor}, got {}", problem.xi));
        return report;
    }
    screen_monotone_positive(&mut report, problem, (!general).then_some(c));
    let theta = problem.params.theta.unwrap_or(problem.xi);
    if !(theta > 0.0) {
        report.note(format!("needs θ > 0, got {theta}"));
        return report;
    }
    let b = &problem.drift;
    let cfg = shells(tol);
    let mut per_a = Vec::new();
    for &a in &problem.params.a_scan {
        let recip = lossy(|s| b.eval(a, s).map(|v| 1.0 / v));
        let verdict = classify_tail(&recip, theta, &cfg);
        per_a.push(finite3(&verdict));
        report.integral_push(format!("int_theta^inf ds/b(a,s) [a={}]", num(a)), verdict);
    }
    let verdict = match any3(per_a) {
        Some(true) => {
            report.note("a convergent integral does not imply explosion");
            Verdict::NecessaryConditionSatisfied
        }
        Some(false) => Verdict::NecessaryConditionViolated,
        None => Verdict::Inconclusive,
    };
    report.finish(verdict)
}

/// One-sided: `∫_0^∞ ds/b(a,s) < ∞` for some `a > 0` implies explosion,
/// given `b̃` (or `b̆`) non-decreasing by components and `b > 0`. The
/// integral is split at `θ` (default 1) into a singular part and a tail.
pub fn sufficiency_test(problem: &Problem, tol: Tolerance) -> CriterionReport {
    let mut report = CriterionReport::new(CriterionId::Sufficiency, problem);
    if !(problem.xi > 0.0) {
        report.note(format!("needs ξ > 0, got {}", problem.xi));
        return report;
    }
    let Some(tc) = reduce(problem, &mut report) else {
        return report;
    };
    screen_log_drift(
        &mut report,
        problem,
        &tc,
        &[
            (Property::NonDecreasingInT, false),
            (Property::NonDecreasingInX, false),
        ],
    );
    let t = t_axis(screen_t_hi(problem), problem.params.screen.nt);
    let region = Region {
        t,
        x: x_axis(problem, None),
    };
    report.screen(
        &problem.drift,
        "b(t, x)",
        Property::Positive,
        region,
        problem.params.screen.tol,
    );

    let split = problem.params.theta.unwrap_or(1.0);
    if !(split > 0.0) {
        report.note(format!("needs a positive split point θ, got {split}"));
        return report;
    }
    let b = &problem.drift;
    let cfg = shells(tol);
    let mut per_a = Vec::new();
    for &a in &problem.params.a_scan {
        let recip = lossy(|s| b.eval(a, s).map(|v| 1.0 / v));
        let head = classify_singular_left(&recip, 0.0, split, &cfg);
        let tail = classify_tail(&recip, split, &cfg);
        per_a.push(and3(finite3(&head), finite3(&tail)));
        report.integral_push(format!("int_0^theta ds/b(a,s) [a={}]", num(a)), head);
        report.integral_push(format!("int_theta^inf ds/b(a,s) [a={}]", num(a)), tail);
    }
    let verdict = match any3(per_a) {
        Some(true) if report.screens_passed() => {
            // b̃(a, ·) non-decreasing on all of ℝ gives b(a, x) ≤ x b(a, 1)
            // for x < 1, so ∫_0 ds/b(a,s) = ∞; convergence means the
            // monotonicity fails somewhere the grid did not reach
            report.note(
                "∫_0 ds/b(a,s) converges, which is impossible when b(t, e^z)/e^z is \
                 non-decreasing in z on the whole line; the screen grid missed a violation",
            );
            Verdict::Inconclusive
        }
        Some(true) => Verdict::SufficientConditionSatisfied,
        Some(false) => Verdict::SufficientConditionNotSatisfied,
        None => Verdict::Inconclusive,
    };
    report.finish(verdict)
}
