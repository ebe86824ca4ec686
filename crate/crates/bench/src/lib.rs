//! Shared fixtures for the criterion benches.

use krasov_core::models::hvac_default_scenario;
use krasov_core::{HvacModel, SimulationConfig};

/// The default HVAC scenario cut to `t_end` with every step logged.
pub fn hvac_run(t_end: f64) -> (HvacModel, SimulationConfig) {
    let (model, cfg) = hvac_default_scenario();
    let dt = cfg.dt;
    (model, cfg.with_horizon(t_end, dt))
}
