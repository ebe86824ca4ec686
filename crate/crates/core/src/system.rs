//! Model interface for control-affine systems `x' = f(x) + g(x) u`.
//!
//! Models supply the drift `f`, the input matrix `g`, a constant contraction
//! metric `M` and the box over which assumption checks sample. Jacobians are
//! optional: when a model does not provide them, central finite differences
//! are used instead.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default finite-difference step, applied on coordinates normalized by `max(1, |x_i|)`.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Constant symmetric positive definite metric.
#[derive(Debug, Clone, PartialEq)]
pub struct Metric(DMatrix<f64>);

impl Metric {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::InvalidParameter(format!(
                "metric must be a non-empty square matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("metric has non-finite entries".into()));
        }
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(Error::InvalidParameter(format!(
                "metric is not symmetric (max asymmetry {asym:.3e})"
            )));
        }
        let min_eig = matrix.clone().symmetric_eigenvalues().min();
        if min_eig <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "metric is not positive definite (min eigenvalue {min_eig:.3e})"
            )));
        }
        Ok(Metric(matrix))
    }

    pub fn identity(n: usize) -> Self {
        Metric(DMatrix::identity(n, n))
    }

    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(entries)))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// `v^T M v`
    pub fn quadratic(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.0 * v))
    }

    /// Smallest eigenvalue of `M`.
    pub fn min_eigenvalue(&self) -> f64 {
        self.0.clone().symmetric_eigenvalues().min()
    }
}

/// Axis-aligned box in state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl StateBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "state box bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidParameter(format!(
                    "state box axis {i} has invalid bounds [{lo}, {hi}]"
                )));
            }
        }
        Ok(StateBox { lower, upper })
    }

    pub fn uniform(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; n], vec![hi; n])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    pub fn center(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.lower.iter().zip(&self.upper).map(|(lo, hi)| 0.5 * (lo + hi)),
        )
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.lower
                .iter()
                .zip(&self.upper)
                .map(|(lo, hi)| lo + (hi - lo) * rng.random::<f64>()),
        )
    }
}

/// A control-affine system `x' = f(x) + g(x) u` with a constant contraction metric.
///
/// Implementations must be pure: evaluating any method twice at the same
/// point gives the same result, and concurrent evaluation is allowed.
pub trait ControlAffineModel: Send + Sync {
    fn state_dim(&self) -> usize;

    fn input_dim(&self) -> usize;

    /// Drift vector field `f(x)`.
    fn drift(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Input matrix `g(x)`, `n x m`.
    fn input_matrix(&self, x: &DVector<f64>) -> DMatrix<f64>;

    /// Analytic `df/dx`, if the model has one.
    fn drift_jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    /// Analytic directional derivative `(dg/dx) w`, an `n x m` matrix.
    fn input_matrix_derivative(&self, _x: &DVector<f64>, _w: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    /// Closed-form potential `Gamma(x)` whose gradients are the columns of `M g(x)`.
    fn potential(&self, _x: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }

    fn metric(&self) -> &Metric;

    /// Box on which assumptions are sampled.
    fn domain(&self) -> &StateBox;
}

fn first_non_finite<'a>(values: impl IntoIterator<Item = &'a f64>) -> Option<usize> {
    values.into_iter().position(|v| !v.is_finite())
}

fn check_state<M: ControlAffineModel + ?Sized>(model: &M, x: &DVector<f64>) -> Result<()> {
    if x.len() != model.state_dim() {
        return Err(Error::Dimension {
            context: "state vector",
            expected: model.state_dim(),
            got: x.len(),
        });
    }
    Ok(())
}

/// `f(x)`, rejecting non-finite output.
pub fn eval_drift<M: ControlAffineModel + ?Sized>(model: &M, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_state(model, x)?;
    let fx = model.drift(x);
    if let Some(coordinate) = first_non_finite(fx.iter()) {
        return Err(Error::Evaluation { what: "drift", coordinate });
    }
    Ok(fx)
}

/// `g(x)`, rejecting non-finite output.
pub fn eval_input_matrix<M: ControlAffineModel + ?Sized>(
    model: &M,
    x: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    check_state(model, x)?;
    let g = model.input_matrix(x);
    if let Some(pos) = first_non_finite(g.iter()) {
        // column-major position -> row index
        return Err(Error::Evaluation {
            what: "input matrix",
            coordinate: pos % g.nrows(),
        });
    }
    Ok(g)
}

fn fd_step(h: f64, xi: f64) -> f64 {
    h * xi.abs().max(1.0)
}

/// Central-difference approximation of `df/dx` at `x`.
pub fn numeric_drift_jacobian<M: ControlAffineModel + ?Sized>(
    model: &M,
    x: &DVector<f64>,
    h: f64,
) -> Result<DMatrix<f64>> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("finite-difference step must be positive, got {h}")));
    }
    check_state(model, x)?;
    let n = x.len();
    let mut jac = DMatrix::zeros(n, n);
    let mut probe = x.clone();
    for k in 0..n {
        let step = fd_step(h, x[k]);
        probe[k] = x[k] + step;
        let plus = model.drift(&probe);
        probe[k] = x[k] - step;
        let minus = model.drift(&probe);
        probe[k] = x[k];
        if first_non_finite(plus.iter().chain(minus.iter())).is_some() {
            return Err(Error::Evaluation { what: "drift", coordinate: k });
        }
        jac.set_column(k, &((plus - minus) / (2.0 * step)));
    }
    Ok(jac)
}

/// `df/dx` from the model when available, finite differences otherwise.
pub fn drift_jacobian<M: ControlAffineModel + ?Sized>(model: &M, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_state(model, x)?;
    match model.drift_jacobian(x) {
        Some(jac) => {
            if let Some(pos) = first_non_finite(jac.iter()) {
                return Err(Error::Evaluation {
                    what: "drift jacobian",
                    coordinate: pos / jac.nrows(),
                });
            }
            Ok(jac)
        }
        None => numeric_drift_jacobian(model, x, DEFAULT_FD_STEP),
    }
}

/// Central-difference directional derivative `(dg/dx) w`.
pub fn numeric_input_matrix_derivative<M: ControlAffineModel + ?Sized>(
    model: &M,
    x: &DVector<f64>,
    w: &DVector<f64>,
    h: f64,
) -> Result<DMatrix<f64>> {
    check_state(model, x)?;
    check_state(model, w)?;
    let (n, m) = (model.state_dim(), model.input_dim());
    let wnorm = w.amax();
    if wnorm == 0.0 {
        return Ok(DMatrix::zeros(n, m));
    }
    let eps = fd_step(h, x.amax()) / wnorm;
    let plus = model.input_matrix(&(x + w * eps));
    let minus = model.input_matrix(&(x - w * eps));
    let out = (plus - minus) / (2.0 * eps);
    if let Some(pos) = first_non_finite(out.iter()) {
        return Err(Error::Evaluation {
            what: "input matrix derivative",
            coordinate: pos % n,
        });
    }
    Ok(out)
}

/// Time derivative of the input matrix along velocity `xdot`: `(dg/dx) xdot`.
pub fn g_time_derivative<M: ControlAffineModel + ?Sized>(
    model: &M,
    x: &DVector<f64>,
    xdot: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    check_state(model, x)?;
    check_state(model, xdot)?;
    match model.input_matrix_derivative(x, xdot) {
        Some(dg) => {
            if let Some(pos) = first_non_finite(dg.iter()) {
                return Err(Error::Evaluation {
                    what: "input matrix derivative",
                    coordinate: pos % dg.nrows(),
                });
            }
            Ok(dg)
        }
        None => numeric_input_matrix_derivative(model, x, xdot, DEFAULT_FD_STEP),
    }
}

type VecFn = Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type MatFn = Box<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
type DirFn = Box<dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// A model assembled from closures.
///
/// ```
/// use krasov_core::system::{ClosureModel, Metric, StateBox};
/// use nalgebra::{DMatrix, DVector};
///
/// let model = ClosureModel::new(
///     2,
///     1,
///     |x: &DVector<f64>| -x,
///     |_x: &DVector<f64>| DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
///     Metric::identity(2),
///     StateBox::uniform(2, -1.0, 1.0).unwrap(),
/// )
/// .unwrap();
/// # let _ = model;
/// ```
pub struct ClosureModel {
    n: usize,
    m: usize,
    drift: VecFn,
    input: MatFn,
    drift_jac: Option<MatFn>,
    input_deriv: Option<DirFn>,
    potential: Option<VecFn>,
    metric: Metric,
    domain: StateBox,
}

impl ClosureModel {
    pub fn new(
        n: usize,
        m: usize,
        drift: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        input: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
        metric: Metric,
        domain: StateBox,
    ) -> Result<Self> {
        if n == 0 || m == 0 || m >= n {
            return Err(Error::InvalidParameter(format!(
                "need n >= 1 and 1 <= m < n, got n = {n}, m = {m}"
            )));
        }
        if metric.dim() != n {
            return Err(Error::Dimension { context: "metric", expected: n, got: metric.dim() });
        }
        if domain.dim() != n {
            return Err(Error::Dimension { context: "state box", expected: n, got: domain.dim() });
        }
        Ok(ClosureModel {
            n,
            m,
            drift: Box::new(drift),
            input: Box::new(input),
            drift_jac: None,
            input_deriv: None,
            potential: None,
            metric,
            domain,
        })
    }

    pub fn with_drift_jacobian(
        mut self,
        jac: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.drift_jac = Some(Box::new(jac));
        self
    }

    pub fn with_input_derivative(
        mut self,
        deriv: impl Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.input_deriv = Some(Box::new(deriv));
        self
    }

    pub fn with_potential(
        mut self,
        potential: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.potential = Some(Box::new(potential));
        self
    }
}

impl std::fmt::Debug for ClosureModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClosureModel")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("metric", &self.metric)
            .field("domain", &self.domain)
            .finish_non_exhaustive()
    }
}

impl ControlAffineModel for ClosureModel {
    fn state_dim(&self) -> usize {
        self.n
    }

    fn input_dim(&self) -> usize {
        self.m
    }

    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.drift)(x)
    }

    fn input_matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.input)(x)
    }

    fn drift_jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.drift_jac.as_ref().map(|j| j(x))
    }

    fn input_matrix_derivative(&self, x: &DVector<f64>, w: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.input_deriv.as_ref().map(|d| d(x, w))
    }

    fn potential(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        self.potential.as_ref().map(|p| p(x))
    }

    fn metric(&self) -> &Metric {
        &self.metric
    }

    fn domain(&self) -> &StateBox {
        &self.domain
    }
}
