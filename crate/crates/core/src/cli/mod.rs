//! Command-line front end.
//!
//! Exit codes: 0 when a command ran (any verdict, including inconclusive),
//! 1 on input or runtime errors, 2 on usage errors.

pub mod file;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::criteria::{applicable, run_criterion, CriterionId, CriterionReport, Verdict};
use crate::expr::HypothesisStatus;
use crate::mc::{agreement_check, censoring_scan, AgreementConfig, McConfig};
use crate::odeblow::StepControl;
use crate::quadrature::{IntegralVerdict, Tolerance};
use crate::sdesim::{brownian_path, simulate, Solver};
use file::{Loaded, ProblemFile};

const DEFAULT_HORIZON: f64 = 10.0;

#[derive(Debug, Parser)]
#[command(
    name = "blowup",
    version,
    about = "Finite-time blow-up criteria and simulation for dX = b(t,X)dt + σ(t)X dW"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate blow-up criteria on a problem file.
    Check(CheckArgs),
    /// Simulate one path and write it as CSV.
    Simulate(SimulateArgs),
    /// Run a Monte Carlo ensemble and write its summary as JSON.
    Mc(McArgs),
}

#[derive(Debug, Clone, Copy)]
enum Selection {
    All,
    One(CriterionId),
}

fn parse_selection(s: &str) -> Result<Selection, String> {
    if s == "all" {
        Ok(Selection::All)
    } else {
        s.parse().map(Selection::One)
    }
}

#[derive(Debug, Args)]
struct CheckArgs {
    file: PathBuf,
    /// Criterion id, or `all` for every criterion applicable to the problem.
    #[arg(long, default_value = "all", value_parser = parse_selection)]
    criterion: Selection,
    /// Quadrature tolerance, absolute and relative.
    #[arg(long, env = "BLOWUP_TOL")]
    tol: Option<f64>,
    /// Print the full structured report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    file: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    path_index: u64,
    #[arg(long, default_value = "transform")]
    solver: Solver,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct McArgs {
    file: PathBuf,
    #[arg(long, default_value_t = 1000)]
    paths: usize,
    /// Censoring horizon; defaults to the file's `sim.horizon`, then 10.
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "transform")]
    solver: Solver,
    /// JSON destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// A `check --json` report to compare with; scans T/2 and T.
    #[arg(long)]
    agree: Option<PathBuf>,
    /// Also write the sorted explosion times as CSV.
    #[arg(long)]
    times: Option<PathBuf>,
}

/// Output of `check --json`.
#[derive(Debug, Clone, Serialize)]
pub struct CheckOutput {
    pub code_version: String,
    pub problem: ProblemSummary,
    pub tolerance: Tolerance,
    pub reports: Vec<CriterionReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProblemSummary {
    pub name: String,
    pub hash: String,
    pub xi: f64,
    pub drift: String,
    pub sigma: String,
}

/// The parts of a stored check report that agreement needs.
#[derive(Debug, Deserialize)]
struct StoredCheck {
    reports: Vec<StoredReport>,
}

#[derive(Debug, Deserialize)]
struct StoredReport {
    criterion: CriterionId,
    verdict: Verdict,
    problem_hash: String,
}

type CmdResult = Result<(), String>;

pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let result = match cli.command {
        Command::Check(a) => cmd_check(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Mc(a) => cmd_mc(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn load(path: &Path) -> Result<Loaded, String> {
    ProblemFile::read(path).map_err(|e| e.to_string())
}

/// Writes to `path`, or standard output when `None`.
fn with_output(path: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> CmdResult {
    let written = match path {
        Some(p) => File::create(p).and_then(|f| {
            let mut w = BufWriter::new(f);
            body(&mut w)?;
            w.flush()
        }),
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            body(&mut w).and_then(|()| w.flush())
        }
    };
    written.map_err(|e| match path {
        Some(p) => format!("cannot write {}: {e}", p.display()),
        None => format!("cannot write output: {e}"),
    })
}

fn step_control(sim: &file::SimSection) -> StepControl {
    let mut ctrl = StepControl::default();
    if let Some(cap) = sim.x_cap {
        ctrl.x_cap = cap;
    }
    ctrl
}

fn cmd_check(args: CheckArgs) -> CmdResult {
    let Loaded { problem, .. } = load(&args.file)?;
    let tol = match args.tol {
        Some(t) if t > 0.0 && t.is_finite() => Tolerance::from(t),
        Some(t) => return Err(format!("tolerance must be positive, got {t}")),
        None => Tolerance::default(),
    };
    let ids = match args.criterion {
        Selection::All => applicable(&problem),
        Selection::One(id) => vec![id],
    };
    let reports: Vec<CriterionReport> = ids
        .into_iter()
        .map(|id| run_criterion(id, &problem, tol))
        .collect();
    let output = CheckOutput {
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        problem: ProblemSummary {
            name: problem.name.clone(),
            hash: problem.hash(),
            xi: problem.xi,
            drift: problem.drift.to_string(),
            sigma: problem.sigma.to_string(),
        },
        tolerance: tol,
        reports,
    };
    with_output(None, |w| {
        if args.json {
            serde_json::to_writer_pretty(&mut *w, &output)?;
            writeln!(w)
        } else {
            write_table(w, &output)
        }
    })
}

fn fmt_integral(v: &IntegralVerdict) -> String {
    match v {
        IntegralVerdict::Convergent {
            value,
            error_estimate,
        } => {
            format!("= {value:.10} (convergent, error {error_estimate:.1e})")
        }
        IntegralVerdict::Divergent { .. } => "divergent".to_string(),
        IntegralVerdict::Inconclusive { diagnostic, .. } => format!("inconclusive: {diagnostic}"),
    }
}

fn write_table(w: &mut dyn Write, out: &CheckOutput) -> io::Result<()> {
    let p = &out.problem;
    writeln!(
        w,
        "problem  {}  (xi = {}, b = {}, sigma = {})",
        p.name, p.xi, p.drift, p.sigma
    )?;
    writeln!(w, "hash     {}", p.hash)?;
    writeln!(w)?;
    writeln!(w, "{:<22} verdict", "criterion")?;
    for r in &out.reports {
        writeln!(w, "{:<22} {}", r.criterion.as_str(), r.summary())?;
        let passed = r.hypotheses.iter().filter(|h| h.passed()).count();
        if !r.hypotheses.is_empty() {
            writeln!(w, "    screens {passed}/{} passed", r.hypotheses.len())?;
        }
        for h in r.hypotheses.iter().filter(|h| !h.passed()) {
            match &h.status {
                HypothesisStatus::FailedWithWitness { t, x, detail, .. } => writeln!(
                    w,
                    "    screen failed: {} {} at t = {t}, x = {x}: {detail}",
                    h.subject,
                    h.property.name()
                )?,
                HypothesisStatus::Unverifiable { reason, .. } => writeln!(
                    w,
                    "    screen unverifiable: {} {}: {reason}",
                    h.subject,
                    h.property.name()
                )?,
                HypothesisStatus::Passed => {}
            }
        }
        for i in &r.integrals {
            writeln!(w, "    {} {}", i.label, fmt_integral(&i.verdict))?;
        }
        for n in &r.notes {
            writeln!(w, "    note: {n}")?;
        }
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> CmdResult {
    let Loaded { problem, sim } = load(&args.file)?;
    let horizon = sim.horizon.unwrap_or(DEFAULT_HORIZON);
    let dt = sim.dt.unwrap_or(horizon / 1024.0);
    let ctrl = step_control(&sim);
    let path = brownian_path(dt, horizon, args.seed, args.path_index).map_err(|e| e.to_string())?;
    let run = simulate(&problem, &path, args.solver, &ctrl).map_err(|e| e.to_string())?;
    with_output(args.out.as_deref(), |w| {
        run.trajectory.write_csv(&mut *w)?;
        writeln!(
            w,
            "# solver={} seed={} path_index={} dt={dt} horizon={horizon}",
            args.solver, args.seed, args.path_index
        )?;
        if let Some(t) = run.positivity_violation {
            writeln!(w, "# positivity-violation t={t}")?;
        }
        Ok(())
    })
}

fn cmd_mc(args: McArgs) -> CmdResult {
    let Loaded { problem, sim } = load(&args.file)?;
    let horizon = args.horizon.or(sim.horizon).unwrap_or(DEFAULT_HORIZON);
    let mut cfg = McConfig::new(horizon, args.paths, args.seed, args.solver);
    cfg.dt = sim.dt;
    cfg.ctrl = step_control(&sim);

    let stored = match &args.agree {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            let check: StoredCheck =
                serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
            Some(check.reports)
        }
        None => None,
    };
    let horizons = if stored.is_some() {
        vec![horizon / 2.0, horizon]
    } else {
        vec![horizon]
    };
    let summaries = censoring_scan(&problem, &cfg, &horizons).map_err(|e| e.to_string())?;
    let summary = summaries.last().expect("one summary per horizon");

    with_output(args.out.as_deref(), |w| {
        serde_json::to_writer_pretty(&mut *w, summary)?;
        writeln!(w)
    })?;
    if let Some(times) = &args.times {
        with_output(Some(times), |w| summary.write_times_csv(w))?;
    }
    for stored in stored.unwrap_or_default() {
        let report = CriterionReport {
            criterion: stored.criterion,
            verdict: stored.verdict,
            hypotheses: Vec::new(),
            integrals: Vec::new(),
            explosion_time: None,
            notes: Vec::new(),
            problem_hash: stored.problem_hash,
        };
        let agreement =
            agreement_check(&report, &summaries, &AgreementConfig::default()).map_err(|e| e.to_string())?;
        eprintln!(
            "agreement {}: {} ({}): {}",
            report.criterion.as_str(),
            if agreement.pass { "PASS" } else { "FAIL" },
            report.verdict,
            agreement.explanation
        );
    }
    Ok(())
}
