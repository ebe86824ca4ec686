//! Ready-made models: the two-zone thermal network, Brayton–Moser RLC
//! circuits and plain linear systems.

pub mod hvac;
pub mod linear;
pub mod rlc;

pub use hvac::{hvac_default_scenario, HvacModel, HvacParams};
pub use linear::LinearModel;
pub use rlc::{ResistorLaw, RlcModel, RlcParams};
