//! Explosion criteria evaluated from the coefficients.
//!
//! Every criterion returns a [`CriterionReport`]: the verdict, the
//! hypothesis screens that were run and the improper integrals behind the
//! verdict. If-and-only-if criteria use the binary verdicts; one-sided
//! results only ever speak of necessary or sufficient conditions.

mod feller;
mod osgood;
mod pathwise;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::expr::{check_hypothesis, Axis, EvalError, Field, HypothesisReport, Property, Region};
use crate::problem::Problem;
use crate::quadrature::{IntegralVerdict, ShellConfig, Tolerance};

pub use feller::{feller_test, semilinear_feller};
pub use osgood::{osgood_autonomous, osgood_nonautonomous};
pub use pathwise::{necessity_test, semilinear_pathwise, sufficiency_test};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    AlmostSureExplosion,
    NoAlmostSureExplosion,
    PositiveProbabilityOfGlobalSolution,
    NecessaryConditionSatisfied,
    NecessaryConditionViolated,
    SufficientConditionSatisfied,
    SufficientConditionNotSatisfied,
    Inconclusive,
}

impl Verdict {
    pub fn describe(self) -> &'static str {
        match self {
            Verdict::AlmostSureExplosion => "explodes",
            Verdict::NoAlmostSureExplosion => "no a.s. explosion",
            Verdict::PositiveProbabilityOfGlobalSolution => {
                "no a.s. explosion; positive probability of global solution"
            }
            Verdict::NecessaryConditionSatisfied => "necessary condition holds (explosion not ruled out)",
            Verdict::NecessaryConditionViolated => "necessary condition fails (no finite-time explosion)",
            Verdict::SufficientConditionSatisfied => "sufficient condition holds (explodes)",
            Verdict::SufficientConditionNotSatisfied => "sufficient condition fails (no conclusion)",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.describe())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriterionId {
    Osgood,
    OsgoodNonautonomous,
    Feller,
    SemilinearFeller,
    Pathwise,
    Necessity,
    Sufficiency,
}

impl CriterionId {
    pub const ALL: [CriterionId; 7] = [
        CriterionId::Osgood,
        CriterionId::OsgoodNonautonomous,
        CriterionId::Feller,
        CriterionId::SemilinearFeller,
        CriterionId::Pathwise,
        CriterionId::Necessity,
        CriterionId::Sufficiency,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CriterionId::Osgood => "osgood",
            CriterionId::OsgoodNonautonomous => "osgood-nonautonomous",
            CriterionId::Feller => "feller",
            CriterionId::SemilinearFeller => "semilinear-feller",
            CriterionId::Pathwise => "pathwise",
            CriterionId::Necessity => "necessity",
            CriterionId::Sufficiency => "sufficiency",
        }
    }
}

impl fmt::Display for CriterionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CriterionId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CriterionId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = CriterionId::ALL.iter().map(|id| id.as_str()).collect();
                format!(
                    "unknown criterion `{s}` (expected all or one of {})",
                    known.join(", ")
                )
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledIntegral {
    pub label: String,
    pub verdict: IntegralVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub criterion: CriterionId,
    pub verdict: Verdict,
    pub hypotheses: Vec<HypothesisReport>,
    pub integrals: Vec<LabeledIntegral>,
    pub explosion_time: Option<f64>,
    pub notes: Vec<String>,
    pub problem_hash: String,
}

impl CriterionReport {
    fn new(criterion: CriterionId, problem: &Problem) -> CriterionReport {
        CriterionReport {
            criterion,
            verdict: Verdict::Inconclusive,
            hypotheses: Vec::new(),
            integrals: Vec::new(),
            explosion_time: None,
            notes: Vec::new(),
            problem_hash: problem.hash(),
        }
    }

    /// One-line verdict, e.g. `explodes; T_e = 1.000000`.
    pub fn summary(&self) -> String {
        match (self.verdict, self.explosion_time) {
            (Verdict::AlmostSureExplosion, Some(t)) => format!("{}; T_e = {t:.6}", self.verdict),
            (v, _) => v.to_string(),
        }
    }

    pub fn screens_passed(&self) -> bool {
        self.hypotheses.iter().all(HypothesisReport::passed)
    }

    pub fn integral(&self, label: &str) -> Option<&IntegralVerdict> {
        self.integrals
            .iter()
            .find(|i| i.label == label)
            .map(|i| &i.verdict)
    }

    fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    fn integral_push(&mut self, label: impl Into<String>, verdict: IntegralVerdict) {
        self.integrals.push(LabeledIntegral {
            label: label.into(),
            verdict,
        });
    }

    /// Record a screen; returns whether it passed.
    fn screen(
        &mut self,
        field: &dyn Field,
        subject: &str,
        property: Property,
        region: Region,
        tol: f64,
    ) -> bool {
        let report = check_hypothesis(field, subject, property, &region, tol);
        let passed = report.passed();
        self.hypotheses.push(report);
        passed
    }

    /// A verdict only stands when every hypothesis screen passed.
    fn finish(mut self, verdict: Verdict) -> CriterionReport {
        if verdict != Verdict::Inconclusive && !self.screens_passed() {
            self.note(format!(
                "the integrals alone would give `{verdict}`, but a hypothesis screen failed"
            ));
            self.verdict = Verdict::Inconclusive;
            self.explosion_time = None;
        } else {
            self.verdict = verdict;
        }
        self
    }
}

/// Criteria that apply to the problem's form.
pub fn applicable(problem: &Problem) -> Vec<CriterionId> {
    let autonomous = !problem.drift.uses_t();
    if problem.sigma_is_zero() {
        return vec![if autonomous {
            CriterionId::Osgood
        } else {
            CriterionId::OsgoodNonautonomous
        }];
    }
    let mut ids = Vec::new();
    if autonomous && !problem.sigma.uses_t() {
        ids.push(CriterionId::Feller);
    }
    if autonomous && problem.sigma_is_one() {
        ids.push(CriterionId::SemilinearFeller);
    }
    ids.extend([
        CriterionId::Pathwise,
        CriterionId::Necessity,
        CriterionId::Sufficiency,
    ]);
    ids
}

pub fn run_criterion(id: CriterionId, problem: &Problem, tol: Tolerance) -> CriterionReport {
    match id {
        CriterionId::Osgood => osgood_autonomous(problem, tol),
        CriterionId::OsgoodNonautonomous => osgood_nonautonomous(problem, tol),
        CriterionId::Feller => feller_test(problem, tol),
        CriterionId::SemilinearFeller => semilinear_feller(problem, tol),
        CriterionId::Pathwise => semilinear_pathwise(problem, tol),
        CriterionId::Necessity => necessity_test(problem, tol),
        CriterionId::Sufficiency => sufficiency_test(problem, tol),
    }
}

/// Turn a fallible integrand into one that reports failure as NaN, which
/// the quadrature layer turns into a located domain error.
fn lossy<F: Fn(f64) -> Result<f64, EvalError>>(f: F) -> impl Fn(f64) -> f64 {
    move |s| f(s).unwrap_or(f64::NAN)
}

fn shells(tol: Tolerance) -> ShellConfig {
    ShellConfig::with_tol(tol)
}

/// Compact number formatting for labels: `inf`, `0`, `0.0625`.
fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

fn screen_t_hi(problem: &Problem) -> f64 {
    problem
        .params
        .screen
        .t_hi
        .unwrap_or_else(|| 2.0 * problem.params.a_scan.iter().copied().fold(0.0, f64::max))
}

fn t_axis(t_hi: f64, nt: usize) -> Axis {
    Axis::linear(0.0, t_hi, nt)
}

/// Positive half-line sampled logarithmically, `x ∈ [x_lo, x_hi]`, or the
/// part above `c` when `c > 0`.
fn x_axis(problem: &Problem, above: Option<f64>) -> Axis {
    let g = &problem.params.screen;
    match above {
        Some(c) if c > 0.0 => Axis::log(c, g.x_hi.max(10.0 * c), g.nx).open_lo(),
        _ => Axis::log(g.x_lo, g.x_hi, g.nx),
    }
}

/// Log coordinate `z = ln x` over the same range, or `z ∈ (c, …]`.
fn z_axis(problem: &Problem, above: Option<f64>) -> Axis {
    let g = &problem.params.screen;
    let (lo, hi) = (g.x_lo.ln(), g.x_hi.ln());
    match above {
        Some(c) => Axis::linear(c, hi.max(c + 1.0), g.nx).open_lo(),
        None => Axis::linear(lo, hi, g.nx),
    }
}

/// Kleene conjunction and disjunction over "unknown".
fn and3(a: Option<bool>, b: Option<bool>) -> Option<bool> {
    match (a, b) {
        (Some(false), _) | (_, Some(false)) => Some(false),
        (Some(true), Some(true)) => Some(true),
        _ => None,
    }
}

fn or3(a: Option<bool>, b: Option<bool>) -> Option<bool> {
    match (a, b) {
        (Some(true), _) | (_, Some(true)) => Some(true),
        (Some(false), Some(false)) => Some(false),
        _ => None,
    }
}

fn finite3(v: &IntegralVerdict) -> Option<bool> {
    match v {
        IntegralVerdict::Convergent { .. } => Some(true),
        IntegralVerdict::Divergent { .. } => Some(false),
        IntegralVerdict::Inconclusive { .. } => None,
    }
}

/// Existential over a scan: some item true wins, all false loses.
fn any3(items: impl IntoIterator<Item = Option<bool>>) -> Option<bool> {
    items.into_iter().fold(Some(false), or3)
}
