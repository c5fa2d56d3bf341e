//! Deterministic blow-up machinery: Dormand–Prince stepping with explosion
//! detection, the exact Osgood solution `y(t) = B_ξ⁻¹(t)`, and a checker
//! for the comparison lemma.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{EvalError, Field};
use crate::quadrature::{classify_toward, Antiderivative, IntegralVerdict, ShellConfig, Tolerance};

/// Step-size and blow-up controls for [`integrate_blowup`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    /// Largest step; `None` means `horizon / 100`.
    pub dt_max: Option<f64>,
    pub dt_floor: f64,
    pub x_cap: f64,
    /// Local error tolerance, used both absolutely and relatively.
    pub tol: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            dt_max: None,
            dt_floor: 1e-14,
            x_cap: 1e12,
            tol: 1e-9,
            max_steps: 5_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Refinement {
    CapHit,
    TailCorrected,
}

impl Refinement {
    pub fn as_str(self) -> &'static str {
        match self {
            Refinement::CapHit => "cap-hit",
            Refinement::TailCorrected => "tail-corrected",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupInfo {
    pub t_estimate: f64,
    pub cap_used: f64,
    pub refinement: Refinement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub blowup: Option<BlowupInfo>,
}

impl TrajectorySample {
    pub fn last(&self) -> Option<(f64, f64)> {
        Some((*self.times.last()?, *self.values.last()?))
    }

    /// CSV with a `time,value` header and a trailing `# blowup …` comment.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "time,value")?;
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(out, "{t},{v}")?;
        }
        match &self.blowup {
            Some(b) => writeln!(
                out,
                "# blowup t={} cap={} refinement={}",
                b.t_estimate,
                b.cap_used,
                b.refinement.as_str()
            ),
            None => writeln!(out, "# blowup none"),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("right-hand side failed at t = {t}, y = {y}: {source}")]
    Evaluation {
        t: f64,
        y: f64,
        #[source]
        source: EvalError,
    },
    #[error("step size fell below {dt_floor} at t = {t} without growth of the solution")]
    StepCollapse { t: f64, dt_floor: f64 },
    #[error("step budget of {0} exhausted")]
    StepBudget(usize),
    #[error("{0}")]
    Invalid(String),
}

/// Which states are kept in the returned trajectory.
#[derive(Debug, Clone, Copy)]
pub enum Record<'a> {
    /// Every accepted step, starting at `t = 0`.
    Steps,
    /// Only the given increasing nodes; steps are shortened to land on them.
    Nodes(&'a [f64]),
}

const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrate `y' = f(t, y)`, `y(0) = ξ` up to `horizon`, stopping at blow-up.
pub fn integrate_blowup<F>(
    f: &F,
    xi: f64,
    horizon: f64,
    ctrl: &StepControl,
) -> Result<TrajectorySample, OdeError>
where
    F: Fn(f64, f64) -> Result<f64, EvalError>,
{
    integrate_observed(f, xi, horizon, ctrl, Record::Steps, &|_, y: f64| y.abs())
}

/// [`integrate_blowup`] recording only at `nodes` (the first node is the start time).
pub fn integrate_on_nodes<F>(
    f: &F,
    xi: f64,
    nodes: &[f64],
    ctrl: &StepControl,
) -> Result<TrajectorySample, OdeError>
where
    F: Fn(f64, f64) -> Result<f64, EvalError>,
{
    let horizon = *nodes
        .last()
        .ok_or_else(|| OdeError::Invalid("empty output grid".into()))?;
    integrate_observed(f, xi, horizon, ctrl, Record::Nodes(nodes), &|_, y: f64| y.abs())
}

/// Core stepper. Blow-up is declared when `observe(t, y)` exceeds the cap,
/// which lets a solver integrate a shifted state while capping the physical
/// one.
pub(crate) fn integrate_observed<F, O>(
    f: &F,
    xi: f64,
    horizon: f64,
    ctrl: &StepControl,
    record: Record<'_>,
    observe: &O,
) -> Result<TrajectorySample, OdeError>
where
    F: Fn(f64, f64) -> Result<f64, EvalError>,
    O: Fn(f64, f64) -> f64,
{
    let (t0, stops): (f64, &[f64]) = match record {
        Record::Steps => (0.0, &[]),
        Record::Nodes(nodes) => {
            if nodes.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(OdeError::Invalid(
                    "output nodes must be strictly increasing".into(),
                ));
            }
            (nodes[0], &nodes[1..])
        }
    };
    if !(horizon >= t0 && horizon.is_finite() && xi.is_finite()) {
        return Err(OdeError::Invalid(format!(
            "need finite ξ and horizon ≥ start, got ξ = {xi}, horizon = {horizon}"
        )));
    }
    let dt_max = ctrl.dt_max.unwrap_or((horizon - t0) / 100.0);
    if !(dt_max > 0.0) && horizon > t0 {
        return Err(OdeError::Invalid("dt_max must be positive".into()));
    }
    let keep_steps = matches!(record, Record::Steps);

    let mut times = vec![t0];
    let mut values = vec![xi];
    let mut t = t0;
    let mut y = xi;
    let mut next_stop = 0usize;
    let eval = |t: f64, y: f64| f(t, y).map_err(|source| OdeError::Evaluation { t, y, source });
    let mut k1 = eval(t, y)?;
    let mut h = dt_max;
    let mut prev_abs = y.abs();
    let mut steps = 0usize;

    let blowup_at = |t_last: f64, y_last: f64, t_cross: f64| -> BlowupInfo {
        let tail = classify_toward(
            &|s: f64| match f(t_last, s) {
                Ok(v) if v != 0.0 => 1.0 / v,
                _ => f64::NAN,
            },
            y_last,
            if y_last >= 0.0 {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            },
            &ShellConfig::with_tol(Tolerance::new(1e-12, 1e-9)),
        );
        match tail {
            IntegralVerdict::Convergent { value, .. } => BlowupInfo {
                t_estimate: t_last + value.abs(),
                cap_used: ctrl.x_cap,
                refinement: Refinement::TailCorrected,
            },
            _ => BlowupInfo {
                t_estimate: t_cross,
                cap_used: ctrl.x_cap,
                refinement: Refinement::CapHit,
            },
        }
    };

    while t < horizon {
        steps += 1;
        if steps > ctrl.max_steps {
            return Err(OdeError::StepBudget(ctrl.max_steps));
        }
        let growth = k1.abs() / (1.0 + y.abs());
        let cap = dt_max / (1.0 + growth);
        h = h.min(cap);
        let target = stops.get(next_stop).copied().unwrap_or(horizon).min(horizon);
        let mut landing = false;
        if t + h >= target {
            h = target - t;
            landing = true;
        }
        if h < ctrl.dt_floor && !landing {
            if y.abs() >= prev_abs && k1 != 0.0 {
                let info = blowup_at(t, y, t);
                return Ok(TrajectorySample {
                    times,
                    values,
                    blowup: Some(info),
                });
            }
            return Err(OdeError::StepCollapse {
                t,
                dt_floor: ctrl.dt_floor,
            });
        }

        match dp_step(&eval, t, y, k1, h) {
            Ok((y_new, k7, err_abs)) => {
                let scale = ctrl.tol * (1.0 + y.abs().max(y_new.abs()));
                let err = err_abs / scale;
                if err <= 1.0 && y_new.is_finite() {
                    let t_new = if landing { target } else { t + h };
                    if observe(t_new, y_new) > ctrl.x_cap {
                        let info = blowup_at(t, y, t_new);
                        return Ok(TrajectorySample {
                            times,
                            values,
                            blowup: Some(info),
                        });
                    }
                    prev_abs = y.abs();
                    t = t_new;
                    y = y_new;
                    k1 = k7;
                    if landing && next_stop < stops.len() {
                        next_stop += 1;
                        if !keep_steps {
                            times.push(t);
                            values.push(y);
                        }
                    }
                    if keep_steps {
                        times.push(t);
                        values.push(y);
                    }
                    let factor = if err == 0.0 {
                        5.0
                    } else {
                        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                    };
                    h = (h * factor).min(dt_max);
                } else {
                    let factor = if err.is_finite() {
                        (0.9 * err.powf(-0.2)).clamp(0.1, 0.5)
                    } else {
                        0.1
                    };
                    h *= factor;
                }
            }
            Err(e) => {
                // a stage left the domain: retreat, unless steps are already tiny
                let overflow = matches!(
                    e,
                    OdeError::Evaluation {
                        source: EvalError::NonFinite { .. },
                        ..
                    }
                );
                if h * 0.25 < ctrl.dt_floor {
                    if overflow && y.abs() >= prev_abs {
                        let info = blowup_at(t, y, t + h);
                        return Ok(TrajectorySample {
                            times,
                            values,
                            blowup: Some(info),
                        });
                    }
                    return Err(e);
                }
                h *= 0.25;
            }
        }
    }
    Ok(TrajectorySample {
        times,
        values,
        blowup: None,
    })
}

fn dp_step<G>(eval: &G, t: f64, y: f64, k1: f64, h: f64) -> Result<(f64, f64, f64), OdeError>
where
    G: Fn(f64, f64) -> Result<f64, OdeError>,
{
    let mut k = [0.0f64; 7];
    k[0] = k1;
    for stage in 1..7 {
        let incr: f64 = A[stage - 1].iter().zip(&k[..stage]).map(|(a, kv)| a * kv).sum();
        let ys = y + h * incr;
        if !ys.is_finite() {
            return Err(OdeError::Evaluation {
                t: t + C[stage - 1] * h,
                y: ys,
                source: EvalError::NonFinite {
                    expr: "stage value".into(),
                },
            });
        }
        k[stage] = eval(t + C[stage - 1] * h, ys)?;
    }
    let y_new = y + h * A[5].iter().zip(&k[..6]).map(|(a, kv)| a * kv).sum::<f64>();
    let err = (h * E.iter().zip(&k).map(|(e, kv)| e * kv).sum::<f64>()).abs();
    Ok((y_new, k[6], err))
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InverseError {
    #[error("t = {t} is at or past the explosion time {explosion_time}")]
    PastExplosion { t: f64, explosion_time: f64 },
    #[error("bracket expansion overflowed while searching for B(y) = {t}")]
    BracketOverflow { t: f64 },
    #[error("integrand 1/b failed near y = {at}")]
    Domain { at: f64 },
    #[error("{0}")]
    Invalid(String),
}

/// Solve `B_ξ(y) = t` for the autonomous Osgood solution `y(t) = B_ξ⁻¹(t)`,
/// where `B_ξ(y) = ∫_ξ^y ds / b(s)`.
pub fn osgood_inverse(b: &dyn Field, xi: f64, t: f64, tol: f64) -> Result<f64, InverseError> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(InverseError::Invalid(format!(
            "time must be finite and non-negative, got {t}"
        )));
    }
    if t == 0.0 {
        return Ok(xi);
    }
    let recip = |s: f64| match b.eval(0.0, s) {
        Ok(v) if v > 0.0 => 1.0 / v,
        _ => f64::NAN,
    };
    let cfg = ShellConfig::with_tol(Tolerance::new(tol * 1e-2, 1e-12));
    if let IntegralVerdict::Convergent { value, .. } = classify_toward(&recip, xi, f64::INFINITY, &cfg) {
        if t >= value - tol {
            return Err(InverseError::PastExplosion {
                t,
                explosion_time: value,
            });
        }
    }
    let big_b = Antiderivative::new(recip, xi, xi, f64::INFINITY, Tolerance::new(tol * 1e-3, 1e-13));
    let eval = |y: f64| big_b.eval(y).map_err(|_| InverseError::Domain { at: y });

    let scale = xi.abs().max(1.0);
    let mut lo = xi;
    let mut f_lo = -t;
    let mut step = scale;
    let (mut hi, mut f_hi) = loop {
        let cand = xi + step;
        if !cand.is_finite() {
            return Err(InverseError::BracketOverflow { t });
        }
        let v = eval(cand)? - t;
        if v >= 0.0 {
            break (cand, v);
        }
        lo = cand;
        f_lo = v;
        step *= 2.0;
    };

    let mut y = hi;
    for iter in 0..200 {
        let secant = lo - f_lo * (hi - lo) / (f_hi - f_lo);
        let mid = 0.5 * (lo + hi);
        // alternate so a stalled secant end cannot slow convergence
        let cand = if iter % 3 != 2 && secant > lo && secant < hi {
            secant
        } else {
            mid
        };
        let v = eval(cand)? - t;
        y = cand;
        if v.abs() <= tol || hi - lo <= f64::EPSILON * hi.abs() {
            return Ok(y);
        }
        if v < 0.0 {
            lo = cand;
            f_lo = v;
        } else {
            hi = cand;
            f_hi = v;
        }
    }
    Ok(y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// `x` is a lower solution: expect `y ≥ x`.
    Lower,
    /// `x` is an upper solution: expect `y ≤ x`.
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: f64,
    pub y: f64,
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub passed: bool,
    pub first_violation: Option<Violation>,
    pub nodes_checked: usize,
    pub note: Option<String>,
}

/// Integrate `x' = b(x)`, `x(0) = ξ` on the trajectory's time grid and check
/// the ordering `y ≥ x` (lower) or `y ≤ x` (upper) at every node.
pub fn comparison_check(
    y: &TrajectorySample,
    b: &dyn Field,
    xi: f64,
    side: Side,
    tol: f64,
) -> Result<ComparisonReport, OdeError> {
    if y.times.is_empty() {
        return Err(OdeError::Invalid("empty trajectory".into()));
    }
    let ctrl = StepControl {
        tol: 1e-12,
        ..StepControl::default()
    };
    let rhs = |t: f64, x: f64| b.eval(t, x);
    let x = integrate_on_nodes(&rhs, xi, &y.times, &ctrl)?;
    let mut note = None;
    if let Some(info) = x.blowup {
        note = Some(format!(
            "comparison solution blows up near t = {}; ordering checked up to t = {}",
            info.t_estimate,
            x.times.last().copied().unwrap_or(0.0)
        ));
    }
    let n = x.values.len();
    for i in 0..n {
        let (yv, xv) = (y.values[i], x.values[i]);
        let slack = tol * xv.abs().max(1.0);
        let bad = match side {
            Side::Lower => yv < xv - slack,
            Side::Upper => yv > xv + slack,
        };
        if bad {
            return Ok(ComparisonReport {
                passed: false,
                first_violation: Some(Violation {
                    t: y.times[i],
                    y: yv,
                    x: xv,
                }),
                nodes_checked: i + 1,
                note,
            });
        }
    }
    Ok(ComparisonReport {
        passed: true,
        first_violation: None,
        nodes_checked: n,
        note,
    })
}
