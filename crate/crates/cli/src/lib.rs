//! Scenario-driven batch front-end for `krasov-core`.
//!
//! A scenario file names a model, its parameters, controller gains, the
//! setpoint and the run horizon. The `check`, `simulate` and `variational`
//! commands turn one scenario into a JSON report and, for runs, a CSV trace.
//! Several scenarios run concurrently; the overall exit code is the largest
//! per-scenario code.

// Negated comparisons are how NaN parameters get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod scenario;

use std::path::PathBuf;

use rayon::prelude::*;

pub use commands::{
    cmd_check, cmd_simulate, cmd_variational, exit_code_for, run, Command, Outcome, EXIT_EVALUATION, EXIT_FAIL,
    EXIT_INFEASIBLE, EXIT_INTERRUPTED, EXIT_OK, EXIT_SCENARIO,
};
pub use scenario::{ModelKind, Overrides, Scenario, ScenarioError};

/// Runs `command` on every scenario concurrently. Outcomes keep input order.
pub fn run_batch(command: Command, paths: &[PathBuf], overrides: &Overrides) -> Vec<Outcome> {
    paths.par_iter().map(|p| run(command, p, overrides)).collect()
}

/// Overall exit code of a batch.
pub fn batch_exit_code(outcomes: &[Outcome]) -> i32 {
    outcomes.iter().map(|o| o.code).max().unwrap_or(EXIT_OK)
}
