use std::sync::Mutex;

use super::{and3, finite3, lossy, num, or3, shells, x_axis, CriterionId, CriterionReport, Verdict};
use crate::expr::{Axis, FnField, HypothesisStatus, PerUnit, Property, Region};
use crate::problem::Problem;
use crate::quadrature::{
    checkpoint, classify_toward, integrate, Antiderivative, IntegralVerdict, QuadError, Tolerance,
};

/// Checkpoints screened on each side of the anchor.
const SCREEN_LEVELS: usize = 60;

type Density = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// Scale density `p'(x) = exp(−2A(x))`, `A(x) = ∫_ζ^x b/s²`, and
/// `w(y) = ∫_ζ^y 2 e^{2A(z) − 2A(y)} / s²(z) dz`, the derivative of
/// `v(x) = ∫_ζ^x p'(y) ∫_ζ^y 2/(p' s²)(z) dz dy`.
///
/// `w` is tabulated at checkpoints `c` and continued by
/// `w(y) = w(c) e^{2A(c) − 2A(y)} + ∫_c^y …`, which never forms the
/// separate factors `p'(y)` and `1/p'(z)` that overflow on their own.
struct Scale {
    a: Antiderivative<Density>,
    two_over_s2: Density,
    zeta: f64,
    l: f64,
    r: f64,
    tol: Tolerance,
    above: Mutex<Vec<(f64, f64, f64)>>,
    below: Mutex<Vec<(f64, f64, f64)>>,
}

impl Scale {
    fn new(density: Density, two_over_s2: Density, zeta: f64, l: f64, r: f64, tol: Tolerance) -> Scale {
        let fine = tol.scaled(1e-2);
        Scale {
            a: Antiderivative::new(density, zeta, l, r, fine),
            two_over_s2,
            zeta,
            l,
            r,
            tol: fine,
            above: Mutex::new(vec![(zeta, 0.0, 0.0)]),
            below: Mutex::new(vec![(zeta, 0.0, 0.0)]),
        }
    }

    fn p_prime(&self, x: f64) -> f64 {
        match self.a.eval(x) {
            Ok(a) => (-2.0 * a).exp(),
            Err(_) => f64::NAN,
        }
    }

    /// `∫_from^to 2 e^{2A(z) − 2 a_to} / s²(z) dz`, oriented.
    fn damped(&self, from: f64, to: f64, a_to: f64) -> Result<f64, QuadError> {
        let f = |z: f64| match self.a.eval(z) {
            Ok(az) => (self.two_over_s2)(z) * (2.0 * (az - a_to)).exp(),
            Err(_) => f64::NAN,
        };
        if to >= from {
            Ok(integrate(&f, from, to, self.tol)?.value)
        } else {
            Ok(-integrate(&f, to, from, self.tol)?.value)
        }
    }

    fn w(&self, y: f64) -> Result<f64, QuadError> {
        if y == self.zeta {
            return Ok(0.0);
        }
        let up = y > self.zeta;
        let cache = if up { &self.above } else { &self.below };
        let mut table = cache.lock().unwrap_or_else(|e| e.into_inner());
        loop {
            let next = checkpoint(self.zeta, self.l, self.r, table.len(), up);
            let beyond = if up { next > y } else { next < y };
            if beyond || !next.is_finite() {
                break;
            }
            let (c, wc, ac) = *table.last().expect("anchor entry");
            let an = self.a.eval(next)?;
            let wn = wc * (2.0 * (ac - an)).exp() + self.damped(c, next, an)?;
            table.push((next, wn, an));
        }
        let idx = if up {
            table.partition_point(|&(n, _, _)| n <= y) - 1
        } else {
            table.partition_point(|&(n, _, _)| n >= y) - 1
        };
        let (c, wc, ac) = table[idx];
        drop(table);
        let ay = self.a.eval(y)?;
        Ok(wc * (2.0 * (ac - ay)).exp() + self.damped(c, y, ay)?)
    }

    fn v_prime(&self, y: f64) -> f64 {
        self.w(y).unwrap_or(f64::NAN)
    }
}

/// Screen `s²(x) > 0` at the checkpoints from `ζ` toward one end; the
/// screened coordinate is the checkpoint index, mapped back for witnesses.
fn screen_diffusion(
    report: &mut CriterionReport,
    s2: &(dyn Fn(f64) -> f64 + Sync),
    problem: &Problem,
    up: bool,
) {
    let (zeta, l, r) = (problem.zeta(), problem.l, problem.r);
    let at = move |k: f64| checkpoint(zeta, l, r, k as usize, up);
    let field = FnField(|_t: f64, k: f64| Ok(s2(at(k))));
    let end = if up { num(r) } else { num(l) };
    let subject = format!("σ²(x) at checkpoints x_k from ζ = {} toward {end}", num(zeta));
    let region = Region {
        t: Axis::point(0.0),
        x: Axis::linear(0.0, SCREEN_LEVELS as f64, SCREEN_LEVELS + 1),
    };
    report.screen(
        &field,
        &subject,
        Property::Positive,
        region,
        problem.params.screen.tol,
    );
    let last = report.hypotheses.last_mut().expect("just pushed");
    match &mut last.status {
        HypothesisStatus::FailedWithWitness { x, .. } => *x = at(*x),
        HypothesisStatus::Unverifiable { x: Some(x), .. } => *x = at(*x),
        _ => {}
    }
}

/// Constant σ of the semilinear form, when `b` and `σ` are time-independent.
fn autonomous_sigma(problem: &Problem, report: &mut CriterionReport) -> Option<f64> {
    if problem.drift.uses_t() || problem.sigma.uses_t() {
        report.note("needs time-independent b and σ");
        return None;
    }
    match problem.sigma.eval(0.0, 0.0) {
        Ok(s) => Some(s),
        Err(e) => {
            report.note(format!("σ cannot be evaluated: {e}"));
            None
        }
    }
}

fn scale_for(problem: &Problem, sigma: f64, zeta: f64, l: f64, r: f64, tol: Tolerance) -> Scale {
    let b = problem.drift.clone();
    let s2 = sigma * sigma;
    let density: Density = Box::new(move |x: f64| match b.eval(0.0, x) {
        Ok(v) => v / (s2 * x * x),
        Err(_) => f64::NAN,
    });
    let two_over_s2: Density = Box::new(move |z: f64| 2.0 / (s2 * z * z));
    Scale::new(density, two_over_s2, zeta, l, r, tol)
}

/// Feller's test for `dX = b(X) dt + σ X dW` on `(ℓ, r)`: explosion is
/// almost sure iff (i) `v(r−), v(ℓ+) < ∞`, (ii) `v(r−) < ∞, p(ℓ+) = −∞`
/// or (iii) `v(ℓ+) < ∞, p(r−) = ∞`; no explosion is almost sure iff
/// `v(ℓ+) = v(r−) = ∞`.
pub fn feller_test(problem: &Problem, tol: Tolerance) -> CriterionReport {
    let mut report = CriterionReport::new(CriterionId::Feller, problem);
    let Some(sigma) = autonomous_sigma(problem, &mut report) else {
        return report;
    };
    let (l, r, zeta) = (problem.l, problem.r, problem.zeta());
    if !(l < zeta && zeta < r && l < problem.xi && problem.xi < r) {
        report.note(format!(
            "needs ℓ < ζ < r and ξ in (ℓ, r), got ℓ = {}, ζ = {}, ξ = {}, r = {}",
            num(l),
            num(zeta),
            problem.xi,
            num(r)
        ));
        return report;
    }
    let s2 = move |x: f64| (sigma * x).powi(2);
    screen_diffusion(&mut report, &s2, problem, false);
    screen_diffusion(&mut report, &s2, problem, true);
    if !report.screens_passed() {
        report.note("the diffusion coefficient vanishes inside (ℓ, r)");
        return report;
    }

    let scale = scale_for(problem, sigma, zeta, l, r, tol);
    let cfg = shells(tol);
    let p_prime = |x: f64| scale.p_prime(x);
    let v_prime = |y: f64| scale.v_prime(y);
    let p_l = classify_toward(&p_prime, zeta, l, &cfg);
    let p_r = classify_toward(&p_prime, zeta, r, &cfg);
    let v_l = classify_toward(&v_prime, zeta, l, &cfg);
    let v_r = classify_toward(&v_prime, zeta, r, &cfg);

    let vl = finite3(&v_l);
    let vr = finite3(&v_r);
    let p_l_infinite = finite3(&p_l).map(|f| !f);
    let p_r_infinite = finite3(&p_r).map(|f| !f);
    let i = and3(vr, vl);
    let ii = and3(vr, p_l_infinite);
    let iii = and3(vl, p_r_infinite);
    let show = |c: Option<bool>| c.map_or("undetermined", |b| if b { "holds" } else { "fails" });
    report.note(format!(
        "condition (i) {}, (ii) {}, (iii) {}",
        show(i),
        show(ii),
        show(iii)
    ));

    report.integral_push(format!("p({}+)", num(l)), p_l);
    report.integral_push(format!("p({}-)", num(r)), p_r);
    report.integral_push(format!("v({}+)", num(l)), v_l);
    report.integral_push(format!("v({}-)", num(r)), v_r);

    let verdict = match or3(or3(i, ii), iii) {
        Some(true) => Verdict::AlmostSureExplosion,
        Some(false) if vl == Some(false) && vr == Some(false) => Verdict::NoAlmostSureExplosion,
        Some(false) => Verdict::PositiveProbabilityOfGlobalSolution,
        None => Verdict::Inconclusive,
    };
    report.finish(verdict)
}

fn doubled(v: IntegralVerdict) -> IntegralVerdict {
    match v {
        IntegralVerdict::Convergent {
            value,
            error_estimate,
        } => IntegralVerdict::Convergent {
            value: 2.0 * value,
            error_estimate: 2.0 * error_estimate,
        },
        other => other,
    }
}

/// `σ ≡ 1`, autonomous `b` with `b̄ = b/x` non-decreasing and `> 1/2`:
/// explosion is almost sure iff `∫_ξ^∞ ds/(2b(s) − s) < ∞`.
///
/// The speed integral `v(∞)` is also computed directly and must fall in
/// `2∫_ξ^∞ (1 − (ξ/y)^{2b̄(y)−1})/(2b(y) − y) dy ≤ v(∞) ≤ 2∫_ξ^∞ dz/(2b(z) − z)`.
pub fn semilinear_feller(problem: &Problem, tol: Tolerance) -> CriterionReport {
    let mut report = CriterionReport::new(CriterionId::SemilinearFeller, problem);
    if problem.drift.uses_t() || !problem.sigma_is_one() {
        report.note("needs a time-independent drift and σ ≡ 1");
        return report;
    }
    let xi = problem.xi;
    if !(xi > 0.0) {
        report.note(format!("needs ξ > 0, got {xi}"));
        return report;
    }
    let b = &problem.drift;
    let region = Region {
        t: Axis::point(0.0),
        x: x_axis(problem, None),
    };
    let stol = problem.params.screen.tol;
    let bar = PerUnit(b);
    report.screen(&bar, "b(x)/x", Property::NonDecreasingInX, region, stol);
    report.screen(&bar, "b(x)/x", Property::LowerBoundHalf, region, stol);

    let cfg = shells(tol);
    let main_f = lossy(|s| b.eval(0.0, s).map(|v| 1.0 / (2.0 * v - s)));
    let main = classify_toward(&main_f, xi, f64::INFINITY, &cfg);
    let lower_f = lossy(|y| {
        let v = b.eval(0.0, y)?;
        let bar = v / y;
        Ok((1.0 - (xi / y).powf(2.0 * bar - 1.0)) / (2.0 * v - y))
    });
    let lower = doubled(classify_toward(&lower_f, xi, f64::INFINITY, &cfg));
    let upper = doubled(main.clone());
    let scale = scale_for(problem, 1.0, xi, 0.0, f64::INFINITY, tol);
    let v_prime = |y: f64| scale.v_prime(y);
    let direct = classify_toward(&v_prime, xi, f64::INFINITY, &cfg);

    let mut agree = true;
    match (&main, &direct) {
        (
            IntegralVerdict::Convergent { .. },
            IntegralVerdict::Convergent {
                value,
                error_estimate,
            },
        ) => {
            let hi = upper.value().unwrap_or(f64::INFINITY);
            let lo = lower.value().unwrap_or(0.0);
            let slack = error_estimate + 1e2 * tol.bound(hi);
            if *value > hi + slack || *value < lo - slack {
                agree = false;
                report.note(format!(
                    "direct v(inf) = {value} lies outside the bracket [{lo}, {hi}]"
                ));
            }
        }
        (IntegralVerdict::Convergent { .. }, IntegralVerdict::Divergent { .. })
        | (IntegralVerdict::Divergent { .. }, IntegralVerdict::Convergent { .. }) => {
            agree = false;
            report.note("the direct v(inf) and the bracket disagree on convergence");
        }
        (_, IntegralVerdict::Inconclusive { diagnostic, .. }) => {
            report.note(format!("direct v(inf) undetermined: {diagnostic}"));
        }
        _ => {}
    }

    report.integral_push("int_xi^inf ds/(2b(s)-s)", main.clone());
    report.integral_push("v(inf) lower bracket", lower);
    report.integral_push("v(inf) upper bracket", upper);
    report.integral_push("v(inf) direct", direct);

    let verdict = match main {
        _ if !agree => Verdict::Inconclusive,
        IntegralVerdict::Convergent { .. } => Verdict::AlmostSureExplosion,
        IntegralVerdict::Divergent { .. } => Verdict::NoAlmostSureExplosion,
        IntegralVerdict::Inconclusive { .. } => Verdict::Inconclusive,
    };
    report.finish(verdict)
}
