//! Krasovskii passivity-based dynamic feedback for control-affine systems.
//!
//! A model describes `x' = f(x) + g(x) u` together with a constant metric `M`.
//! The crate checks the structural assumptions the controller relies on,
//! realizes the dynamic feedback
//!
//! ```text
//! u' = alpha(x, x') u + beta(x, x') + v'
//! ```
//!
//! with the outer port law that shapes `V_d = k1 V + ki |Gamma - Gamma*|^2 / 2`,
//! and simulates the closed loop with a fixed-step RK4 integrator while
//! auditing every passivity inequality along the trace.
//!
//! ```
//! use krasov_core::models::hvac_default_scenario;
//! use krasov_core::simulate::simulate_closed_loop;
//!
//! let (model, config) = hvac_default_scenario();
//! let trace = simulate_closed_loop(&model, &config.with_horizon(1.0, 1e-2)).unwrap();
//! assert_eq!(trace.records.len(), 101);
//! ```

// Negated comparisons are how NaN parameters get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Interrupted runs carry their partial trace by value.
#![allow(clippy::result_large_err)]

pub mod assumptions;
pub mod control;
pub mod error;
pub mod models;
pub mod simulate;
pub mod system;

pub use assumptions::{annihilator, check_all, AssumptionReport, CheckConfig, SampleSet};
pub use control::{
    alpha, beta, output_y, potential_gamma, solve_equilibrium_input, ControllerGains, ControllerRealization,
    Setpoint,
};
pub use error::{Error, Result};
pub use models::{HvacModel, HvacParams, LinearModel, RlcModel, RlcParams};
pub use simulate::{
    passivity_audit, simulate_closed_loop, simulate_driven, simulate_prolonged, AssumptionGate, SimulationConfig,
    SimulationTrace, TraceRecord, VariationalTrace,
};
pub use system::{ClosureModel, ControlAffineModel, Metric, StateBox};
