//! Monte Carlo ensembles: censored explosion times, Wilson intervals and
//! agreement with criterion verdicts.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::criteria::{CriterionReport, Verdict};
use crate::odeblow::StepControl;
use crate::problem::Problem;
use crate::sdesim::{brownian_path, simulate, Solver};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Largest tolerated share of failing paths.
const MAX_ERROR_SHARE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub solver: Solver,
    /// Grid spacing; `None` means `2⁻¹⁰ · horizon`.
    pub dt: Option<f64>,
    pub ctrl: StepControl,
}

impl McConfig {
    pub fn new(horizon: f64, n_paths: usize, seed: u64, solver: Solver) -> McConfig {
        McConfig {
            horizon,
            n_paths,
            seed,
            solver,
            dt: None,
            ctrl: StepControl::default(),
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(self.horizon / 1024.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathFailure {
    pub path_index: u64,
    pub message: String,
}

/// Everything needed to rerun an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub code_version: String,
    pub problem_hash: String,
    pub seed: u64,
    pub dt: f64,
    pub solver: Solver,
    pub simulated_horizon: f64,
    pub ctrl: StepControl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub n_paths: usize,
    pub n_exploded: usize,
    pub n_errors: usize,
    /// Censoring horizon `T`.
    pub horizon: f64,
    /// Explosion times `≤ T` of the exploded paths, ascending.
    pub explosion_times: Vec<f64>,
    /// Empirical `P(T_e ≤ T)` among paths without errors.
    pub exploded_fraction: f64,
    pub exploded_ci: [f64; 2],
    pub surviving_fraction: f64,
    pub surviving_ci: [f64; 2],
    /// Euler–Maruyama paths that left `(0, ∞)` before `T`.
    pub positivity_violations: usize,
    pub solver: Solver,
    pub seed: u64,
    pub dt: f64,
    pub failures: Vec<PathFailure>,
    pub manifest: Manifest,
}

impl McSummary {
    pub fn write_times_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "path_rank,explosion_time")?;
        for (i, t) in self.explosion_times.iter().enumerate() {
            writeln!(out, "{i},{t}")?;
        }
        writeln!(
            out,
            "# censored {} of {} at T={}",
            self.n_paths - self.n_errors - self.n_exploded,
            self.n_paths,
            self.horizon
        )
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error("invalid ensemble settings: {0}")]
    Invalid(String),
    #[error("{failed} of {n} paths failed (more than 1%); first failure on path {}: {}", first.path_index, first.message)]
    TooManyFailures {
        failed: usize,
        n: usize,
        first: PathFailure,
    },
    #[error("report and ensemble describe different problems ({report} vs {summary})")]
    HashMismatch { report: String, summary: String },
}

/// Wilson score interval for `k` successes out of `n`, clipped to `[0, 1]`.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> [f64; 2] {
    if n == 0 {
        return [0.0, 1.0];
    }
    let (k, n) = (k as f64, n as f64);
    let p = k / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let lo = if k == 0.0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (center + half).min(1.0) };
    [lo, hi]
}

enum Outcome {
    Exploded { t: f64, violation: Option<f64> },
    Survived { violation: Option<f64> },
    Failed(String),
}

fn run_path(problem: &Problem, cfg: &McConfig, dt: f64, index: u64) -> Outcome {
    let path = match brownian_path(dt, cfg.horizon, cfg.seed, index) {
        Ok(p) => p,
        Err(e) => return Outcome::Failed(e.to_string()),
    };
    match simulate(problem, &path, cfg.solver, &cfg.ctrl) {
        Ok(sim) => match sim.trajectory.blowup {
            Some(info) => Outcome::Exploded {
                t: info.t_estimate,
                violation: sim.positivity_violation,
            },
            None => Outcome::Survived {
                violation: sim.positivity_violation,
            },
        },
        Err(e) => Outcome::Failed(e.to_string()),
    }
}

/// Simulate once up to `cfg.horizon` and summarise the same paths censored
/// at each of `horizons` (each `≤ cfg.horizon`). Counts are therefore
/// monotone in the horizon by construction.
pub fn censoring_scan(
    problem: &Problem,
    cfg: &McConfig,
    horizons: &[f64],
) -> Result<Vec<McSummary>, McError> {
    if cfg.n_paths == 0 {
        return Err(McError::Invalid("need at least one path".into()));
    }
    if !(cfg.horizon > 0.0 && cfg.horizon.is_finite()) {
        return Err(McError::Invalid(format!(
            "horizon must be positive, got {}",
            cfg.horizon
        )));
    }
    if let Some(h) = horizons.iter().find(|&&h| !(h > 0.0 && h <= cfg.horizon)) {
        return Err(McError::Invalid(format!(
            "censoring horizon {h} must lie in (0, {}]",
            cfg.horizon
        )));
    }
    let dt = cfg.dt();
    if !(dt > 0.0 && dt <= cfg.horizon) {
        return Err(McError::Invalid(format!("need 0 < dt ≤ horizon, got dt = {dt}")));
    }
    let outcomes: Vec<Outcome> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| run_path(problem, cfg, dt, i))
        .collect();

    let failures: Vec<PathFailure> = outcomes
        .iter()
        .enumerate()
        .filter_map(|(i, o)| match o {
            Outcome::Failed(message) => Some(PathFailure {
                path_index: i as u64,
                message: message.clone(),
            }),
            _ => None,
        })
        .collect();
    if failures.len() as f64 > MAX_ERROR_SHARE * cfg.n_paths as f64 {
        return Err(McError::TooManyFailures {
            failed: failures.len(),
            n: cfg.n_paths,
            first: failures[0].clone(),
        });
    }

    let manifest = Manifest {
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        problem_hash: problem.hash(),
        seed: cfg.seed,
        dt,
        solver: cfg.solver,
        simulated_horizon: cfg.horizon,
        ctrl: cfg.ctrl,
    };
    let valid = cfg.n_paths - failures.len();
    let summaries = horizons
        .iter()
        .map(|&horizon| {
            let mut times = Vec::new();
            let mut violations = 0;
            for o in &outcomes {
                let violation = match o {
                    Outcome::Exploded { t, violation } => {
                        if *t <= horizon {
                            times.push(*t);
                        }
                        violation
                    }
                    Outcome::Survived { violation } => violation,
                    Outcome::Failed(_) => &None,
                };
                if violation.is_some_and(|v| v <= horizon) {
                    violations += 1;
                }
            }
            times.sort_by(f64::total_cmp);
            let k = times.len();
            let fraction = |k: usize| if valid == 0 { 0.0 } else { k as f64 / valid as f64 };
            McSummary {
                n_paths: cfg.n_paths,
                n_exploded: k,
                n_errors: failures.len(),
                horizon,
                explosion_times: times,
                exploded_fraction: fraction(k),
                exploded_ci: wilson_interval(k, valid, Z95),
                surviving_fraction: fraction(valid - k),
                surviving_ci: wilson_interval(valid - k, valid, Z95),
                positivity_violations: violations,
                solver: cfg.solver,
                seed: cfg.seed,
                dt,
                failures: failures.clone(),
                manifest: manifest.clone(),
            }
        })
        .collect();
    Ok(summaries)
}

pub fn run_mc(problem: &Problem, cfg: &McConfig) -> Result<McSummary, McError> {
    let mut all = censoring_scan(problem, cfg, &[cfg.horizon])?;
    Ok(all.remove(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementConfig {
    /// Wilson lower bound of the exploded fraction required at the largest
    /// horizon for an almost-sure explosion verdict.
    pub floor: f64,
    /// Wilson upper bound of the exploded fraction allowed for an
    /// almost-sure non-explosion verdict.
    pub ceiling: f64,
}

impl Default for AgreementConfig {
    fn default() -> Self {
        AgreementConfig {
            floor: 0.9,
            ceiling: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub pass: bool,
    pub explanation: String,
}

/// Check a verdict against ensembles of the same problem at one or more
/// horizons.
pub fn agreement_check(
    report: &CriterionReport,
    summaries: &[McSummary],
    cfg: &AgreementConfig,
) -> Result<Agreement, McError> {
    if let Some(s) = summaries
        .iter()
        .find(|s| s.manifest.problem_hash != report.problem_hash)
    {
        return Err(McError::HashMismatch {
            report: report.problem_hash.clone(),
            summary: s.manifest.problem_hash.clone(),
        });
    }
    let mut sorted: Vec<&McSummary> = summaries.iter().collect();
    sorted.sort_by(|a, b| a.horizon.total_cmp(&b.horizon));
    let Some(last) = sorted.last() else {
        return Err(McError::Invalid("no ensemble to compare with".into()));
    };
    let verdict = report.verdict;
    let result = |pass: bool, explanation: String| Ok(Agreement { pass, explanation });
    match verdict {
        Verdict::AlmostSureExplosion => {
            let lows: Vec<f64> = sorted.iter().map(|s| s.exploded_ci[0]).collect();
            let trend = lows.windows(2).all(|w| w[1] >= w[0]);
            let low = last.exploded_ci[0];
            let shown: Vec<String> = sorted
                .iter()
                .map(|s| {
                    format!(
                        "T={}: {:.4} [{:.4}, {:.4}]",
                        s.horizon, s.exploded_fraction, s.exploded_ci[0], s.exploded_ci[1]
                    )
                })
                .collect();
            let mut why = format!("exploded fraction {}", shown.join("; "));
            if sorted.len() < 2 {
                why.push_str("; single horizon, trend not checked");
            }
            if !trend {
                return result(false, format!("{why}; lower bound decreases with T"));
            }
            if low < cfg.floor {
                return result(
                    false,
                    format!("{why}; lower bound {low:.4} below floor {}", cfg.floor),
                );
            }
            result(true, why)
        }
        Verdict::NoAlmostSureExplosion => {
            let high = last.exploded_ci[1];
            let why = format!(
                "exploded {} of {} by T={}, upper bound {high:.4}",
                last.n_exploded, last.n_paths, last.horizon
            );
            if high < cfg.ceiling {
                result(true, why)
            } else {
                result(false, format!("{why} not below ceiling {}", cfg.ceiling))
            }
        }
        Verdict::PositiveProbabilityOfGlobalSolution => {
            let low = last.surviving_ci[0];
            let why = format!(
                "surviving fraction {:.4} at T={}, lower bound {low:.4}",
                last.surviving_fraction, last.horizon
            );
            result(low > 0.0, why)
        }
        Verdict::Inconclusive => result(true, "inconclusive verdict; nothing to compare".into()),
        one_sided => result(true, format!("one-sided verdict `{one_sided}` is not tested")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criteria::{feller_test, semilinear_feller, CriterionId, CriterionReport};
    use crate::expr::parse;
    use crate::quadrature::Tolerance;
    use rand_chacha::rand_core::{RngCore, SeedableRng};

    fn problem(drift: &str) -> Problem {
        Problem::new("mc", 1.0, parse(drift).unwrap(), parse("1").unwrap())
    }

    #[test]
    fn wilson_bounds() {
        let [lo, hi] = wilson_interval(0, 1, Z95);
        assert_eq!(lo, 0.0);
        assert!(hi < 1.0 && hi > 0.7);
        let [lo, hi] = wilson_interval(50, 100, Z95);
        assert!((lo - 0.4038).abs() < 1e-4 && (hi - 0.5962).abs() < 1e-4);
        for k in 0..=20 {
            let [lo, hi] = wilson_interval(k, 20, Z95);
            let p = k as f64 / 20.0;
            assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0);
        }
    }

    #[test]
    fn wilson_coverage() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let (n, reps, p) = (100, 1000, 0.3);
        let mut covered = 0;
        for _ in 0..reps {
            let k = (0..n)
                .filter(|_| ((rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64) < p)
                .count();
            let [lo, hi] = wilson_interval(k, n, Z95);
            if lo <= p && p <= hi {
                covered += 1;
            }
        }
        let coverage = covered as f64 / reps as f64;
        assert!((0.92..=0.98).contains(&coverage), "{coverage}");
    }

    #[test]
    fn brownian_motion_never_explodes() {
        let s = run_mc(&problem("0"), &McConfig::new(5.0, 50, 1, Solver::Transform)).unwrap();
        assert_eq!(s.n_exploded, 0);
        assert_eq!(s.surviving_fraction, 1.0);
    }

    #[test]
    fn deterministic_and_monotone() {
        let p = problem("x^2/2");
        let mut cfg = McConfig::new(4.0, 64, 9, Solver::Logdomain);
        cfg.dt = Some(4.0 / 256.0);
        let a = censoring_scan(&p, &cfg, &[1.0, 2.0, 4.0]).unwrap();
        let b = censoring_scan(&p, &cfg, &[1.0, 2.0, 4.0]).unwrap();
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0].n_exploded <= w[1].n_exploded));
        assert!(a[2].n_exploded > 0 && a[2].n_exploded < 64);
        let single = run_mc(&p, &cfg).unwrap();
        assert_eq!(single, a[2]);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let threaded = pool.install(|| censoring_scan(&p, &cfg, &[1.0, 2.0, 4.0]).unwrap());
        assert_eq!(a, threaded);
    }

    #[test]
    fn invalid_settings() {
        let p = problem("0");
        assert!(run_mc(&p, &McConfig::new(1.0, 0, 1, Solver::Em)).is_err());
        assert!(censoring_scan(&p, &McConfig::new(1.0, 1, 1, Solver::Em), &[2.0]).is_err());
        // the log-domain solver refuses σ ≠ 1 on every path
        let mut q = p.clone();
        q.sigma = parse("2").unwrap();
        assert!(matches!(
            run_mc(&q, &McConfig::new(1.0, 4, 1, Solver::Logdomain)),
            Err(McError::TooManyFailures { failed: 4, .. })
        ));
    }

    fn summary_with(report: &CriterionReport, horizon: f64, exploded: usize, n: usize) -> McSummary {
        let p = problem("0");
        let mut s = run_mc(&p, &McConfig::new(horizon, 1, 0, Solver::Transform)).unwrap();
        s.manifest.problem_hash = report.problem_hash.clone();
        s.horizon = horizon;
        s.n_paths = n;
        s.n_exploded = exploded;
        s.exploded_fraction = exploded as f64 / n as f64;
        s.exploded_ci = wilson_interval(exploded, n, Z95);
        s.surviving_fraction = 1.0 - s.exploded_fraction;
        s.surviving_ci = wilson_interval(n - exploded, n, Z95);
        s
    }

    #[test]
    fn agreement_rules() {
        let cfg = AgreementConfig::default();
        let mut report = semilinear_feller(&problem("x * (1/2 + x)"), Tolerance::default());
        assert_eq!(report.verdict, Verdict::AlmostSureExplosion);
        let ok = agreement_check(&report, &[summary_with(&report, 30.0, 960, 1000)], &cfg).unwrap();
        assert!(ok.pass, "{ok:?}");
        let bad = agreement_check(
            &report,
            &[
                summary_with(&report, 30.0, 100, 1000),
                summary_with(&report, 60.0, 100, 1000),
            ],
            &cfg,
        )
        .unwrap();
        assert!(!bad.pass && bad.explanation.contains("floor"), "{bad:?}");

        report.verdict = Verdict::NoAlmostSureExplosion;
        assert!(
            agreement_check(&report, &[summary_with(&report, 10.0, 0, 1000)], &cfg)
                .unwrap()
                .pass
        );
        assert!(
            !agreement_check(&report, &[summary_with(&report, 10.0, 0, 1)], &cfg)
                .unwrap()
                .pass
        );

        let example = feller_test(&problem("x^2/2"), Tolerance::default());
        assert_eq!(example.verdict, Verdict::PositiveProbabilityOfGlobalSolution);
        assert!(
            agreement_check(&example, &[summary_with(&example, 10.0, 600, 1000)], &cfg)
                .unwrap()
                .pass
        );
        assert!(
            !agreement_check(&example, &[summary_with(&example, 10.0, 1000, 1000)], &cfg)
                .unwrap()
                .pass
        );

        report.verdict = Verdict::NecessaryConditionSatisfied;
        report.criterion = CriterionId::Necessity;
        assert!(
            agreement_check(&report, &[summary_with(&report, 10.0, 0, 1000)], &cfg)
                .unwrap()
                .pass
        );

        let other = summary_with(&example, 10.0, 0, 10);
        assert!(matches!(
            agreement_check(&report, &[other], &cfg),
            Err(McError::HashMismatch { .. })
        ));
    }
}
