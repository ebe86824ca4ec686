//! The three batch commands. Each writes its artifacts next to the scenario
//! (or under `--out-dir`) and returns a process exit code.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use krasov_core::assumptions::{check_all, AssumptionReport};
use krasov_core::simulate::{
    passivity_audit, simulate_closed_loop, simulate_prolonged, write_trace_csv, write_variational_csv,
    AuditReport, EpsilonCalibration, InequalityAudit, SimulationTrace, TraceSummary, VariationalTrace,
};
use krasov_core::{ControllerGains, Error};
use log::{info, warn};
use serde::Serialize;

use crate::scenario::{ModelKind, Overrides, ResolvedParams, RunSpec, Scenario, ScenarioError};

pub const EXIT_OK: i32 = 0;
/// An assumption fails, the run does not converge or an audit is dirty.
pub const EXIT_FAIL: i32 = 1;
/// The scenario cannot be read, parsed or validated.
pub const EXIT_SCENARIO: i32 = 2;
/// A model or controller quantity could not be evaluated.
pub const EXIT_EVALUATION: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;
/// The run stopped early; the partial trace was written.
pub const EXIT_INTERRUPTED: i32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Check,
    Simulate,
    Variational,
}

/// One line of console output per scenario.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub path: PathBuf,
    pub code: i32,
    pub message: String,
}

/// Runs one command on one scenario file.
pub fn run(command: Command, path: &Path, overrides: &Overrides) -> Outcome {
    let outcome = |code, message| Outcome { path: path.into(), code, message };
    let scenario = match Scenario::load(path, overrides) {
        Ok(s) => s,
        Err(e) => return outcome(EXIT_SCENARIO, scenario_diagnostic(&e)),
    };
    let result = match command {
        Command::Check => cmd_check(&scenario),
        Command::Simulate => cmd_simulate(&scenario),
        Command::Variational => cmd_variational(&scenario),
    };
    match result {
        Ok((code, message)) => outcome(code, message),
        Err(e) => outcome(EXIT_SCENARIO, format!("cannot write output: {e}")),
    }
}

fn scenario_diagnostic(e: &ScenarioError) -> String {
    e.to_string().trim_end().to_string()
}

/// Exit code for an error raised before or during a run.
pub fn exit_code_for(error: &Error) -> i32 {
    match error {
        Error::InfeasibleSetpoint { .. } => EXIT_INFEASIBLE,
        Error::AssumptionViolated(_) => EXIT_FAIL,
        Error::InvalidParameter(_) | Error::Dimension { .. } => EXIT_SCENARIO,
        Error::Integrability { .. } => EXIT_EVALUATION,
        Error::Singularity { .. }
        | Error::SingularInputMatrix { .. }
        | Error::BlowUp { .. }
        | Error::Evaluation { .. }
        | Error::AtSample { .. } => EXIT_INTERRUPTED,
    }
}

#[derive(Serialize)]
struct ScenarioEcho<'a> {
    scenario: String,
    model: ModelKind,
    params: &'a ResolvedParams,
    seed: u64,
}

impl<'a> ScenarioEcho<'a> {
    fn new(s: &'a Scenario) -> Self {
        ScenarioEcho {
            scenario: s.path.display().to_string(),
            model: s.kind,
            params: &s.params,
            seed: s.seed,
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}

fn create_out_dir(s: &Scenario) -> std::io::Result<()> {
    fs::create_dir_all(&s.out_dir)
}

#[derive(Serialize)]
struct CheckOutput<'a> {
    #[serde(flatten)]
    echo: ScenarioEcho<'a>,
    exit_code: i32,
    report: &'a AssumptionReport,
}

/// Samples A1 to A3 on the model's domain and writes `<stem>.check.json`.
pub fn cmd_check(s: &Scenario) -> std::io::Result<(i32, String)> {
    create_out_dir(s)?;
    let report = check_all(s.model.as_ref(), &s.check_config());
    let code = if report.has_errors() {
        EXIT_EVALUATION
    } else if report.all_pass() {
        EXIT_OK
    } else {
        EXIT_FAIL
    };
    let out = s.output_path("check.json");
    write_json(&out, &CheckOutput { echo: ScenarioEcho::new(s), exit_code: code, report: &report })?;
    let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3e}"));
    let verdict = |pass: bool| if pass { "pass" } else { "FAIL" };
    let message = format!(
        "a1 {} (worst eig {}), a2 {} (residual {}), a3 {} (asymmetry {}) -> {}",
        verdict(report.a1.pass),
        fmt(report.a1.worst_eig),
        verdict(report.a2.pass),
        fmt(report.a2.worst_residual),
        verdict(report.a3.pass),
        fmt(report.a3.worst_asymmetry),
        out.display()
    );
    Ok((code, message))
}

#[derive(Serialize)]
struct Calibration {
    epsilon: f64,
    constant: f64,
    slack_dt: f64,
    slack_half_dt: f64,
    refinement_ratio: f64,
}

impl From<EpsilonCalibration> for Calibration {
    fn from(c: EpsilonCalibration) -> Self {
        Calibration {
            epsilon: c.epsilon,
            constant: c.constant,
            slack_dt: c.slack_coarse,
            slack_half_dt: c.slack_fine,
            refinement_ratio: c.refinement_ratio(),
        }
    }
}

#[derive(Serialize)]
struct SimulateOutput<'a> {
    #[serde(flatten)]
    echo: ScenarioEcho<'a>,
    exit_code: i32,
    error: Option<String>,
    gains: ControllerGains,
    x_star: Vec<f64>,
    u_star: Option<Vec<f64>>,
    x0: Vec<f64>,
    u0: Option<Vec<f64>>,
    run: RunSpec,
    records: usize,
    #[serde(flatten)]
    summary: &'a TraceSummary,
    audit: Option<AuditReport>,
    calibration: Option<Calibration>,
    audits_clean: bool,
}

/// Runs the closed loop, writes `<stem>.trace.csv` and `<stem>.summary.json`.
///
/// The audit tolerance is fitted from a second run at `dt / 2`.
pub fn cmd_simulate(s: &Scenario) -> std::io::Result<(i32, String)> {
    create_out_dir(s)?;
    let cfg = s.simulation_config();
    let (n, m) = (s.model.state_dim(), s.model.input_dim());
    let (trace, error) = match simulate_closed_loop(s.model.as_ref(), &cfg) {
        Ok(trace) => (trace, None),
        Err(interrupted) => (interrupted.partial, Some(interrupted.error)),
    };

    let mut audit = None;
    let mut calibration = None;
    let mut audits_clean = false;
    let code = match &error {
        Some(e) => {
            warn!("{}: {e}", s.path.display());
            exit_code_for(e)
        }
        None => {
            audit = passivity_audit(&trace, &s.gains);
            let fine_cfg = cfg.clone().with_horizon(cfg.t_end, 0.5 * cfg.dt);
            match (audit, simulate_closed_loop(s.model.as_ref(), &fine_cfg)) {
                (Some(coarse), Ok(fine_trace)) => {
                    if let Some(fine) = passivity_audit(&fine_trace, &s.gains) {
                        let cal = EpsilonCalibration::fit(cfg.dt, coarse.slack(), fine.slack());
                        audits_clean = coarse.clean(cal.epsilon);
                        calibration = Some(cal.into());
                    }
                }
                (_, Err(e)) => warn!("{}: calibration run at dt/2 failed: {}", s.path.display(), e.error),
                (None, _) => {}
            }
            if trace.summary.converged && audits_clean {
                EXIT_OK
            } else {
                EXIT_FAIL
            }
        }
    };

    let wrote_trace = match &error {
        Some(Error::InfeasibleSetpoint { .. } | Error::AssumptionViolated(_)) => false,
        Some(Error::InvalidParameter(_) | Error::Dimension { .. }) => false,
        _ => {
            let mut out = BufWriter::new(File::create(s.output_path("trace.csv"))?);
            write_trace_csv(&trace, n, m, &mut out)?;
            out.flush()?;
            true
        }
    };
    let summary = SimulateOutput {
        echo: ScenarioEcho::new(s),
        exit_code: code,
        error: error.as_ref().map(ToString::to_string),
        gains: s.gains,
        x_star: s.x_star.iter().copied().collect(),
        u_star: trace.u_star.as_ref().map(|u| u.iter().copied().collect()),
        x0: s.x0.iter().copied().collect(),
        u0: s.u0.as_ref().map(|u| u.iter().copied().collect()),
        run: s.run,
        records: trace.records.len(),
        summary: &trace.summary,
        audit,
        calibration,
        audits_clean,
    };
    write_json(&s.output_path("summary.json"), &summary)?;
    info!("{}: {} records, exit {code}", s.path.display(), trace.records.len());
    Ok((code, simulate_message(&trace, error.as_ref(), wrote_trace)))
}

fn simulate_message(trace: &SimulationTrace, error: Option<&Error>, wrote_trace: bool) -> String {
    let tail = if wrote_trace { format!(", {} records written", trace.records.len()) } else { String::new() };
    match error {
        Some(e) => format!("{e}{tail}"),
        None => {
            let t = trace.summary.t_converge.map_or_else(|| "never".to_string(), |t| format!("t = {t:.3}"));
            format!(
                "converged {} (band reached {t}), final error {:.3e}{tail}",
                trace.summary.converged, trace.summary.final_error
            )
        }
    }
}

#[derive(Serialize)]
struct VariationalOutput<'a> {
    #[serde(flatten)]
    echo: ScenarioEcho<'a>,
    exit_code: i32,
    error: Option<String>,
    delta_x0: Vec<f64>,
    run: RunSpec,
    records: usize,
    complete: bool,
    audit: Option<InequalityAudit>,
    /// Largest value of `dS'_fd - dy^T dv` over the run.
    max_residual: Option<f64>,
    max_storage_increase: Option<f64>,
    calibration: Option<Calibration>,
}

/// Runs the prolonged system from `delta_x0` with `dv = 0`, writes
/// `<stem>.variational.csv` and `<stem>.variational.json`.
pub fn cmd_variational(s: &Scenario) -> std::io::Result<(i32, String)> {
    create_out_dir(s)?;
    let cfg = s.simulation_config();
    let (n, m) = (s.model.state_dim(), s.model.input_dim());
    let (trace, error) = match simulate_prolonged(s.model.as_ref(), &cfg, &s.delta_x0, None) {
        Ok(trace) => (trace, None),
        Err(interrupted) => (interrupted.partial, Some(interrupted.error)),
    };

    let mut calibration = None;
    let code = match (&error, trace.audit) {
        (Some(e), _) => exit_code_for(e),
        (None, None) => EXIT_FAIL,
        (None, Some(coarse)) => {
            let fine_cfg = cfg.clone().with_horizon(cfg.t_end, 0.5 * cfg.dt);
            match simulate_prolonged(s.model.as_ref(), &fine_cfg, &s.delta_x0, None) {
                Ok(VariationalTrace { audit: Some(fine), .. }) => {
                    let cal = EpsilonCalibration::fit(cfg.dt, coarse.slack, fine.slack);
                    let clean = coarse.holds_within(cal.epsilon);
                    calibration = Some(Calibration::from(cal));
                    if clean {
                        EXIT_OK
                    } else {
                        EXIT_FAIL
                    }
                }
                Ok(_) => EXIT_FAIL,
                Err(e) => {
                    warn!("{}: calibration run at dt/2 failed: {}", s.path.display(), e.error);
                    EXIT_FAIL
                }
            }
        }
    };

    if !matches!(&error, Some(e) if exit_code_for(e) != EXIT_INTERRUPTED) {
        let mut out = BufWriter::new(File::create(s.output_path("variational.csv"))?);
        write_variational_csv(&trace, n, m, &mut out)?;
        out.flush()?;
    }
    let increase = (trace.records.len() >= 2).then(|| trace.max_storage_increase());
    let summary = VariationalOutput {
        echo: ScenarioEcho::new(s),
        exit_code: code,
        error: error.as_ref().map(ToString::to_string),
        delta_x0: s.delta_x0.iter().copied().collect(),
        run: s.run,
        records: trace.records.len(),
        complete: trace.complete,
        audit: trace.audit,
        max_residual: trace.audit.map(|a| a.worst_residual),
        max_storage_increase: increase,
        calibration,
    };
    write_json(&s.output_path("variational.json"), &summary)?;
    let message = match &error {
        Some(e) => e.to_string(),
        None => format!(
            "{} records, max residual {}, max storage step {}",
            trace.records.len(),
            summary.max_residual.map_or_else(|| "n/a".into(), |v| format!("{v:.3e}")),
            increase.map_or_else(|| "n/a".into(), |v| format!("{v:.3e}")),
        ),
    };
    Ok((code, message))
}
