use thiserror::Error;

/// Errors raised by model evaluation, controller construction and integration.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} evaluated to a non-finite value at coordinate {coordinate}")]
    Evaluation { what: &'static str, coordinate: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("input matrix is rank deficient (sigma_min/sigma_max = {ratio:.3e}) at {at:?}")]
    SingularInputMatrix { ratio: f64, at: Vec<f64> },

    #[error("g^T g is near singular (condition number {condition:.3e}) at {at:?}")]
    Singularity { condition: f64, at: Vec<f64> },

    #[error("setpoint is not an equilibrium for any input (residual {residual:.3e})")]
    InfeasibleSetpoint { residual: f64 },

    #[error("M g is not integrable: path integrals disagree by {discrepancy:.3e}")]
    Integrability { discrepancy: f64 },

    #[error("integration blew up at t = {t}")]
    BlowUp { t: f64 },

    #[error("{source} (at sample {at:?})")]
    AtSample { at: Vec<f64>, source: Box<Error> },

    #[error("assumption {0} does not hold on the sampled domain")]
    AssumptionViolated(&'static str),
}

impl Error {
    pub(crate) fn at_sample(self, x: &nalgebra::DVector<f64>) -> Self {
        match self {
            Error::SingularInputMatrix { ratio, .. } => Error::SingularInputMatrix {
                ratio,
                at: x.iter().copied().collect(),
            },
            e @ (Error::AtSample { .. } | Error::Singularity { .. }) => e,
            e => Error::AtSample {
                at: x.iter().copied().collect(),
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
