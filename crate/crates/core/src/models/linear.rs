//! Linear systems `x' = A x + B u` with a user-supplied metric.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::system::{ControlAffineModel, Metric, StateBox};

#[derive(Debug, Clone)]
pub struct LinearModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    metric: Metric,
    domain: StateBox,
}

impl LinearModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, metric: Metric, domain: StateBox) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() || n == 0 {
            return Err(Error::InvalidParameter("A must be a non-empty square matrix".into()));
        }
        if b.nrows() != n || b.ncols() == 0 || b.ncols() >= n {
            return Err(Error::InvalidParameter(format!(
                "B must be {n} x m with 1 <= m < {n}, got {} x {}",
                b.nrows(),
                b.ncols()
            )));
        }
        if metric.dim() != n {
            return Err(Error::Dimension { context: "metric", expected: n, got: metric.dim() });
        }
        if domain.dim() != n {
            return Err(Error::Dimension { context: "state box", expected: n, got: domain.dim() });
        }
        Ok(LinearModel { a, b, metric, domain })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
}

impl ControlAffineModel for LinearModel {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x
    }

    fn input_matrix(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.b.clone()
    }

    fn drift_jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.a.clone())
    }

    fn input_matrix_derivative(&self, _x: &DVector<f64>, _w: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(self.b.nrows(), self.b.ncols()))
    }

    fn potential(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        Some((self.metric.matrix() * &self.b).transpose() * x)
    }

    fn metric(&self) -> &Metric {
        &self.metric
    }

    fn domain(&self) -> &StateBox {
        &self.domain
    }
}
