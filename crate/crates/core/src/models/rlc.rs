//! RLC circuits in Brayton–Moser form.
//!
//! With inductor currents `i`, capacitor voltages `v` and mixed potential
//! `P(i, v) = i^T Gamma v + G(i) - J(v)`:
//!
//! ```text
//! -L i' = dP/di - B_s V_s
//!  C v' = dP/dv
//! ```
//!
//! The state is `x = (i, v)`, the input is `V_s`, and the metric is
//! `diag(L, C)`, which makes the Krasovskii storage equal to
//! `S = (i'^T L i' + v'^T C v') / 2`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::{ControlAffineModel, Metric, StateBox};

/// Separable resistor potential `sum_k linear_k z_k^2 / 2 + cubic_k z_k^4 / 4`.
///
/// Non-negative coefficients keep the Hessian positive semidefinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResistorLaw {
    pub linear: Vec<f64>,
    #[serde(default)]
    pub cubic: Vec<f64>,
}

impl ResistorLaw {
    pub fn linear(coeffs: Vec<f64>) -> Self {
        let n = coeffs.len();
        ResistorLaw { linear: coeffs, cubic: vec![0.0; n] }
    }

    fn validate(&self, name: &str, len: usize) -> Result<()> {
        if self.linear.len() != len || (self.cubic.len() != len && !self.cubic.is_empty()) {
            return Err(Error::InvalidParameter(format!("{name} coefficients must have length {len}")));
        }
        if self.linear.iter().chain(&self.cubic).any(|c| !(*c >= 0.0 && c.is_finite())) {
            return Err(Error::InvalidParameter(format!("{name} coefficients must be finite and >= 0")));
        }
        Ok(())
    }

    fn cubic_at(&self, k: usize) -> f64 {
        self.cubic.get(k).copied().unwrap_or(0.0)
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        z.iter()
            .enumerate()
            .map(|(k, zk)| 0.5 * self.linear[k] * zk * zk + 0.25 * self.cubic_at(k) * zk.powi(4))
            .sum()
    }

    pub fn gradient(&self, z: &[f64]) -> DVector<f64> {
        DVector::from_iterator(z.len(), z.iter().enumerate().map(|(k, zk)| self.linear[k] * zk + self.cubic_at(k) * zk.powi(3)))
    }

    pub fn hessian(&self, z: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(
            z.len(),
            z.iter().enumerate().map(|(k, zk)| self.linear[k] + 3.0 * self.cubic_at(k) * zk * zk),
        ))
    }
}

/// Circuit parameters. Matrices are given row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RlcParams {
    pub inductance: Vec<Vec<f64>>,
    pub capacitance: Vec<Vec<f64>>,
    /// `n_L x n_C` coupling between inductor currents and capacitor voltages.
    pub interconnection: Vec<Vec<f64>>,
    /// Current potential `G(i)`.
    pub current_law: ResistorLaw,
    /// Voltage potential `J(v)`.
    pub voltage_law: ResistorLaw,
    /// `n_L x m` source matrix `B_s`.
    pub source: Vec<Vec<f64>>,
    /// Half-width of the sampled box around the origin.
    #[serde(default = "default_halfwidth")]
    pub domain_halfwidth: f64,
}

fn default_halfwidth() -> f64 {
    5.0
}

impl RlcParams {
    /// Series loop: source, resistor `R`, inductor and capacitor.
    pub fn series(l: f64, c: f64, r: f64) -> Self {
        RlcParams {
            inductance: vec![vec![l]],
            capacitance: vec![vec![c]],
            interconnection: vec![vec![1.0]],
            current_law: ResistorLaw::linear(vec![r]),
            voltage_law: ResistorLaw::linear(vec![0.0]),
            source: vec![vec![1.0]],
            domain_halfwidth: default_halfwidth(),
        }
    }

    /// Two meshes sharing the first capacitor: `V_s - L1 - node a (C1 || leak) - L2 - node b (C2 || leak)`,
    /// with a cubic resistor in the first mesh.
    pub fn two_mesh() -> Self {
        RlcParams {
            inductance: vec![vec![1.0, 0.0], vec![0.0, 0.5]],
            capacitance: vec![vec![1.0, 0.0], vec![0.0, 2.0]],
            interconnection: vec![vec![1.0, 0.0], vec![-1.0, 1.0]],
            current_law: ResistorLaw { linear: vec![0.5, 0.8], cubic: vec![0.1, 0.0] },
            voltage_law: ResistorLaw::linear(vec![0.2, 0.25]),
            source: vec![vec![1.0], vec![0.0]],
            domain_halfwidth: default_halfwidth(),
        }
    }
}

impl Default for RlcParams {
    fn default() -> Self {
        RlcParams::series(1.0, 1.0, 1.5)
    }
}

fn to_matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidParameter(format!("{name} must be a non-empty rectangular matrix")));
    }
    Ok(DMatrix::from_row_iterator(nrows, ncols, rows.iter().flatten().copied()))
}

#[derive(Debug, Clone)]
pub struct RlcModel {
    params: RlcParams,
    n_l: usize,
    n_c: usize,
    inductance_inv: DMatrix<f64>,
    capacitance_inv: DMatrix<f64>,
    interconnection: DMatrix<f64>,
    source: DMatrix<f64>,
    metric: Metric,
    domain: StateBox,
}

impl RlcModel {
    pub fn new(params: RlcParams) -> Result<Self> {
        let l = to_matrix("inductance", &params.inductance)?;
        let c = to_matrix("capacitance", &params.capacitance)?;
        let gamma = to_matrix("interconnection", &params.interconnection)?;
        let b = to_matrix("source", &params.source)?;
        let (n_l, n_c) = (l.nrows(), c.nrows());
        if !l.is_square() || !c.is_square() {
            return Err(Error::InvalidParameter("inductance and capacitance must be square".into()));
        }
        if gamma.shape() != (n_l, n_c) {
            return Err(Error::InvalidParameter(format!("interconnection must be {n_l} x {n_c}")));
        }
        if b.nrows() != n_l {
            return Err(Error::InvalidParameter(format!("source matrix must have {n_l} rows")));
        }
        params.current_law.validate("current law", n_l)?;
        params.voltage_law.validate("voltage law", n_c)?;
        if !(params.domain_halfwidth > 0.0) {
            return Err(Error::InvalidParameter("domain half-width must be positive".into()));
        }
        let n = n_l + n_c;
        if b.ncols() >= n {
            return Err(Error::InvalidParameter("more sources than states".into()));
        }
        let mut m = DMatrix::zeros(n, n);
        m.view_mut((0, 0), (n_l, n_l)).copy_from(&l);
        m.view_mut((n_l, n_l), (n_c, n_c)).copy_from(&c);
        let metric = Metric::new(m).map_err(|e| Error::InvalidParameter(format!("L and C must be SPD: {e}")))?;
        let inductance_inv = l.try_inverse().ok_or_else(|| Error::InvalidParameter("singular inductance".into()))?;
        let capacitance_inv = c.try_inverse().ok_or_else(|| Error::InvalidParameter("singular capacitance".into()))?;
        let domain = StateBox::uniform(n, -params.domain_halfwidth, params.domain_halfwidth)?;
        Ok(RlcModel {
            params,
            n_l,
            n_c,
            inductance_inv,
            capacitance_inv,
            interconnection: gamma,
            source: b,
            metric,
            domain,
        })
    }

    pub fn params(&self) -> &RlcParams {
        &self.params
    }

    pub fn inductor_count(&self) -> usize {
        self.n_l
    }

    pub fn capacitor_count(&self) -> usize {
        self.n_c
    }

    pub fn source_matrix(&self) -> &DMatrix<f64> {
        &self.source
    }

    fn split<'x>(&self, x: &'x DVector<f64>) -> (&'x [f64], &'x [f64]) {
        x.as_slice().split_at(self.n_l)
    }

    /// `P(i, v) = i^T Gamma v + G(i) - J(v)`
    pub fn mixed_potential(&self, x: &DVector<f64>) -> f64 {
        let (i, v) = self.split(x);
        let iv = DVector::from_column_slice(i);
        let vv = DVector::from_column_slice(v);
        iv.dot(&(&self.interconnection * vv)) + self.params.current_law.value(i) - self.params.voltage_law.value(v)
    }

    /// Storage `S = (i'^T L i' + v'^T C v') / 2` with the source at `vs`.
    pub fn storage(&self, x: &DVector<f64>, vs: &DVector<f64>) -> f64 {
        let xd = self.drift(x) + self.input_matrix(x) * vs;
        0.5 * self.metric.quadratic(&xd)
    }

    /// Dissipation `i'^T G_ii i' + v'^T J_vv v'` at velocity `xdot`.
    pub fn dissipation(&self, x: &DVector<f64>, xdot: &DVector<f64>) -> f64 {
        let (i, v) = self.split(x);
        let (di, dv) = xdot.as_slice().split_at(self.n_l);
        let di = DVector::from_column_slice(di);
        let dv = DVector::from_column_slice(dv);
        di.dot(&(self.params.current_law.hessian(i) * &di)) + dv.dot(&(self.params.voltage_law.hessian(v) * &dv))
    }
}

impl ControlAffineModel for RlcModel {
    fn state_dim(&self) -> usize {
        self.n_l + self.n_c
    }

    fn input_dim(&self) -> usize {
        self.source.ncols()
    }

    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        let (i, v) = self.split(x);
        let iv = DVector::from_column_slice(i);
        let vv = DVector::from_column_slice(v);
        let dp_di = &self.interconnection * &vv + self.params.current_law.gradient(i);
        let dp_dv = self.interconnection.transpose() * &iv - self.params.voltage_law.gradient(v);
        let di = -(&self.inductance_inv * dp_di);
        let dv = &self.capacitance_inv * dp_dv;
        let mut out = DVector::zeros(self.state_dim());
        out.rows_mut(0, self.n_l).copy_from(&di);
        out.rows_mut(self.n_l, self.n_c).copy_from(&dv);
        out
    }

    fn input_matrix(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.state_dim(), self.input_dim());
        g.rows_mut(0, self.n_l).copy_from(&(&self.inductance_inv * &self.source));
        g
    }

    fn drift_jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let (i, v) = self.split(x);
        let (n_l, n_c) = (self.n_l, self.n_c);
        let mut jac = DMatrix::zeros(n_l + n_c, n_l + n_c);
        jac.view_mut((0, 0), (n_l, n_l))
            .copy_from(&(-(&self.inductance_inv * self.params.current_law.hessian(i))));
        jac.view_mut((0, n_l), (n_l, n_c))
            .copy_from(&(-(&self.inductance_inv * &self.interconnection)));
        jac.view_mut((n_l, 0), (n_c, n_l))
            .copy_from(&(&self.capacitance_inv * self.interconnection.transpose()));
        jac.view_mut((n_l, n_l), (n_c, n_c))
            .copy_from(&(-(&self.capacitance_inv * self.params.voltage_law.hessian(v))));
        Some(jac)
    }

    fn input_matrix_derivative(&self, _x: &DVector<f64>, _w: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(self.state_dim(), self.input_dim()))
    }

    /// `M g = (B_s, 0)` is constant, so `Gamma(x) = B_s^T i`.
    fn potential(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let (i, _) = self.split(x);
        Some(self.source.transpose() * DVector::from_column_slice(i))
    }

    fn metric(&self) -> &Metric {
        &self.metric
    }

    fn domain(&self) -> &StateBox {
        &self.domain
    }
}
