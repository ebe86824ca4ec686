//! Dynamic state feedback built from the Krasovskii storage `V = x'^T M x' / 2`.
//!
//! The controller state is the plant input `u` itself, driven by
//!
//! ```text
//! u' = alpha u + beta + v'
//! alpha = -(g^T g)^{-1} g^T g'      beta = -g^T M x'
//! ```
//!
//! which makes the loop passive from `v'` to the power-shaping output
//! `y = g^T M x'`. The outer law
//!
//! ```text
//! v' = (vbar' - kd y - ki (Gamma(x) - Gamma(x*))) / k1
//! ```
//!
//! shapes the closed-loop storage so its minimum sits at the setpoint.
//! `Gamma` is a potential with `dGamma/dt = y`, i.e. its component gradients
//! are the columns of `M g`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::{eval_drift, eval_input_matrix, g_time_derivative, ControlAffineModel};

/// Condition-number cap on `g^T g` beyond which `alpha` refuses to evaluate.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// Residual bound for `f(x*) + g(x*) u*` accepted as an equilibrium.
pub const EQUILIBRIUM_TOLERANCE: f64 = 1e-9;

/// Trapezoid segments used when a model has no closed-form potential.
pub const PATH_SEGMENTS: usize = 1000;

/// Relative disagreement between two integration paths tolerated before
/// the potential is declared path dependent.
pub const PATH_INDEPENDENCE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerGains {
    pub k1: f64,
    pub kd: f64,
    pub ki: f64,
}

impl ControllerGains {
    pub fn new(k1: f64, kd: f64, ki: f64) -> Result<Self> {
        let gains = ControllerGains { k1, kd, ki };
        gains.validate()?;
        Ok(gains)
    }

    /// Requires `k1 > 0`, `kd >= 0`, `ki > 0`.
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0 && self.k1.is_finite()) {
            return Err(Error::InvalidParameter(format!("k1 must be > 0, got {}", self.k1)));
        }
        if !(self.kd >= 0.0 && self.kd.is_finite()) {
            return Err(Error::InvalidParameter(format!("kd must be >= 0, got {}", self.kd)));
        }
        if !(self.ki > 0.0 && self.ki.is_finite()) {
            return Err(Error::InvalidParameter(format!("ki must be > 0, got {}", self.ki)));
        }
        Ok(())
    }
}

impl Default for ControllerGains {
    fn default() -> Self {
        ControllerGains { k1: 1.0, kd: 1.0, ki: 1.0 }
    }
}

fn check_len(context: &'static str, v: &DVector<f64>, expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::Dimension { context, expected, got: v.len() });
    }
    Ok(())
}

/// `f(x) + g(x) u`
pub fn xdot<M: ControlAffineModel + ?Sized>(model: &M, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
    check_len("input vector", u, model.input_dim())?;
    let f = eval_drift(model, x)?;
    let g = eval_input_matrix(model, x)?;
    Ok(f + g * u)
}

/// `alpha = -(g^T g)^{-1} g^T g'` with `g' = (dg/dx) x'`.
///
/// Fails loudly when `g^T g` is ill conditioned instead of regularizing.
pub fn alpha<M: ControlAffineModel + ?Sized>(
    model: &M,
    x: &DVector<f64>,
    xdot_val: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let g = eval_input_matrix(model, x)?;
    let gdot = g_time_derivative(model, x, xdot_val)?;
    let gram = g.transpose() * &g;
    let eig = gram.clone().symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_GRAM_CONDITION) {
        return Err(Error::Singularity {
            condition,
            at: x.iter().copied().collect(),
        });
    }
    let rhs = -(g.transpose() * gdot);
    let chol = gram.cholesky().ok_or_else(|| Error::Singularity {
        condition,
        at: x.iter().copied().collect(),
    })?;
    Ok(chol.solve(&rhs))
}

/// Power-shaping output `y = g^T M x'`.
pub fn output_y<M: ControlAffineModel + ?Sized>(
    model: &M,
    x: &DVector<f64>,
    xdot_val: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_len("velocity", xdot_val, model.state_dim())?;
    let g = eval_input_matrix(model, x)?;
    Ok(g.transpose() * (model.metric().matrix() * xdot_val))
}

/// `beta = -g^T M x'`
pub fn beta<M: ControlAffineModel + ?Sized>(
    model: &M,
    x: &DVector<f64>,
    xdot_val: &DVector<f64>,
) -> Result<DVector<f64>> {
    Ok(-output_y(model, x, xdot_val)?)
}

/// Controller state equation `u' = alpha u + beta + v'`, with `x' = f + g u`.
pub fn u_dot<M: ControlAffineModel + ?Sized>(
    model: &M,
    x: &DVector<f64>,
    u: &DVector<f64>,
    vdot: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_len("port input", vdot, model.input_dim())?;
    let xd = xdot(model, x, u)?;
    Ok(alpha(model, x, &xd)? * u + beta(model, x, &xd)? + vdot)
}

/// `int_0^1 (M g(x_ref + s (x - x_ref)))^T (x - x_ref) ds` by the trapezoid rule.
///
/// This is `Gamma(x) - Gamma(x_ref)` for any potential of `M g`.
pub fn potential_via_path<M: ControlAffineModel + ?Sized>(
    model: &M,
    x: &DVector<f64>,
    x_ref: &DVector<f64>,
    segments: usize,
) -> Result<DVector<f64>> {
    if segments == 0 {
        return Err(Error::InvalidParameter("path integral needs at least one segment".into()));
    }
    check_len("state vector", x, model.state_dim())?;
    check_len("reference state", x_ref, model.state_dim())?;
    let delta = x - x_ref;
    let mut acc = DVector::zeros(model.input_dim());
    if delta.amax() == 0.0 {
        return Ok(acc);
    }
    let metric_delta = model.metric().matrix() * &delta;
    let h = 1.0 / segments as f64;
    for k in 0..=segments {
        let s = k as f64 * h;
        let g = eval_input_matrix(model, &(x_ref + &delta * s))?;
        let weight = if k == 0 || k == segments { 0.5 } else { 1.0 };
        acc += g.transpose() * &metric_delta * weight;
    }
    Ok(acc * h)
}

/// Sum of straight-segment integrals through `waypoints`.
pub fn potential_along_polyline<M: ControlAffineModel + ?Sized>(
    model: &M,
    waypoints: &[DVector<f64>],
    segments_per_leg: usize,
) -> Result<DVector<f64>> {
    let mut acc = DVector::zeros(model.input_dim());
    for leg in waypoints.windows(2) {
        acc += potential_via_path(model, &leg[1], &leg[0], segments_per_leg)?;
    }
    Ok(acc)
}

/// `Gamma(x)`: the model's closed form when it has one; otherwise the path
/// integral from the domain center, cross-checked against an axis-by-axis
/// path to detect a non-integrable `M g`.
pub fn potential_gamma<M: ControlAffineModel + ?Sized>(model: &M, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_len("state vector", x, model.state_dim())?;
    if let Some(gamma) = model.potential(x) {
        return Ok(gamma);
    }
    let anchor = model.domain().center();
    let straight = potential_via_path(model, x, &anchor, PATH_SEGMENTS)?;
    let mut waypoints = vec![anchor.clone()];
    let mut corner = anchor;
    for k in 0..x.len() {
        corner[k] = x[k];
        waypoints.push(corner.clone());
    }
    let staircase = potential_along_polyline(model, &waypoints, PATH_SEGMENTS)?;
    let discrepancy = (&straight - &staircase).amax();
    let scale = 1.0 + straight.amax().max(staircase.amax());
    if discrepancy > PATH_INDEPENDENCE_TOLERANCE * scale {
        return Err(Error::Integrability { discrepancy });
    }
    Ok(straight)
}

/// Least-squares `u*` with `f(x*) + g(x*) u* = 0`; errors if the residual is
/// not below [`EQUILIBRIUM_TOLERANCE`].
pub fn solve_equilibrium_input<M: ControlAffineModel + ?Sized>(
    model: &M,
    x_star: &DVector<f64>,
) -> Result<DVector<f64>> {
    let f = eval_drift(model, x_star)?;
    let g = eval_input_matrix(model, x_star)?;
    let svd = g.clone().svd(true, true);
    let sv = &svd.singular_values;
    let (lo, hi) = (sv.min(), sv.max());
    let ratio = if hi > 0.0 { lo / hi } else { 0.0 };
    if ratio < crate::assumptions::RANK_TOLERANCE {
        return Err(Error::SingularInputMatrix {
            ratio,
            at: x_star.iter().copied().collect(),
        });
    }
    let u_star = svd
        .solve(&(-&f), 0.0)
        .map_err(|msg| Error::InvalidParameter(msg.to_string()))?;
    let residual = (f + g * &u_star).norm();
    if !(residual < EQUILIBRIUM_TOLERANCE) {
        return Err(Error::InfeasibleSetpoint { residual });
    }
    Ok(u_star)
}

/// Operating point `(x*, u*)` with `Gamma(x*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Setpoint {
    pub x_star: DVector<f64>,
    pub u_star: DVector<f64>,
    pub gamma_star: DVector<f64>,
}

impl Setpoint {
    pub fn resolve<M: ControlAffineModel + ?Sized>(model: &M, x_star: DVector<f64>) -> Result<Self> {
        let u_star = solve_equilibrium_input(model, &x_star)?;
        let gamma_star = potential_gamma(model, &x_star)?;
        Ok(Setpoint { x_star, u_star, gamma_star })
    }
}

/// A controller bound to a model: gains, setpoint and the dynamic state `u`.
///
/// Owned by a single simulation run; clone it for concurrent runs.
#[derive(Debug, Clone)]
pub struct ControllerRealization<'a, M: ControlAffineModel + ?Sized> {
    model: &'a M,
    pub gains: ControllerGains,
    pub setpoint: Setpoint,
    u: DVector<f64>,
    closed_form_potential: bool,
}

impl<'a, M: ControlAffineModel + ?Sized> ControllerRealization<'a, M> {
    pub fn new(model: &'a M, gains: ControllerGains, setpoint: Setpoint, u0: DVector<f64>) -> Result<Self> {
        check_len("setpoint state", &setpoint.x_star, model.state_dim())?;
        check_len("initial input", &u0, model.input_dim())?;
        if u0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("initial input must be finite".into()));
        }
        let closed_form_potential = model.potential(&setpoint.x_star).is_some();
        Ok(ControllerRealization { model, gains, setpoint, u: u0, closed_form_potential })
    }

    pub fn model(&self) -> &'a M {
        self.model
    }

    pub fn u(&self) -> &DVector<f64> {
        &self.u
    }

    pub fn set_u(&mut self, u: DVector<f64>) -> Result<()> {
        check_len("controller state", &u, self.model.input_dim())?;
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Evaluation { what: "controller state", coordinate: u.iter().position(|v| !v.is_finite()).unwrap_or(0) });
        }
        self.u = u;
        Ok(())
    }

    /// `Gamma(x) - Gamma(x*)`. Without a closed form this is the straight
    /// path integral anchored at `x*`.
    pub fn gamma_error(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if self.closed_form_potential {
            let gamma = self
                .model
                .potential(x)
                .ok_or(Error::Evaluation { what: "potential", coordinate: 0 })?;
            Ok(gamma - &self.setpoint.gamma_star)
        } else {
            potential_via_path(self.model, x, &self.setpoint.x_star, PATH_SEGMENTS)
        }
    }

    /// Closed-loop storage `k1/2 x'^T M x' + ki/2 |Gamma(x) - Gamma(x*)|^2`.
    pub fn shaped_storage(&self, x: &DVector<f64>, xdot_val: &DVector<f64>) -> Result<f64> {
        let gamma_err = self.gamma_error(x)?;
        Ok(0.5 * self.gains.k1 * self.model.metric().quadratic(xdot_val)
            + 0.5 * self.gains.ki * gamma_err.norm_squared())
    }
}

/// Outer law `v' = (vbar' - kd y - ki (Gamma(x) - Gamma(x*))) / k1`.
pub fn stabilizing_vdot<M: ControlAffineModel + ?Sized>(
    realization: &ControllerRealization<'_, M>,
    x: &DVector<f64>,
    xdot_val: &DVector<f64>,
    vbar_dot: &DVector<f64>,
) -> Result<DVector<f64>> {
    let model = realization.model();
    check_len("reference port input", vbar_dot, model.input_dim())?;
    let gains = realization.gains;
    let y = output_y(model, x, xdot_val)?;
    let gamma_err = realization.gamma_error(x)?;
    Ok((vbar_dot - y * gains.kd - gamma_err * gains.ki) / gains.k1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{ClosureModel, Metric, StateBox};
    use nalgebra::dvector;

    fn constant_input_model() -> ClosureModel {
        // f = -x, g = B constant
        ClosureModel::new(
            3,
            1,
            |x: &DVector<f64>| -x,
            |_| DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 0.0]),
            Metric::diagonal(&[1.0, 2.0, 3.0]).unwrap(),
            StateBox::uniform(3, -2.0, 2.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn gains_validation() {
        assert!(ControllerGains::new(1.0, 0.0, 0.1).is_ok());
        assert!(ControllerGains::new(0.0, 1.0, 0.1).is_err());
        assert!(ControllerGains::new(1.0, -1.0, 0.1).is_err());
        assert!(ControllerGains::new(1.0, 1.0, 0.0).is_err());
        assert!(ControllerGains::default().validate().is_ok());
        assert_eq!(ControllerGains::default().k1, 1.0);
    }

    #[test]
    fn xdot_with_zero_input_is_drift() {
        let model = constant_input_model();
        let x = dvector![0.5, -1.0, 0.25];
        assert_eq!(xdot(&model, &x, &dvector![0.0]).unwrap(), -&x);
        assert!(xdot(&model, &x, &dvector![0.0, 1.0]).is_err());
    }

    #[test]
    fn alpha_vanishes_for_constant_g_or_zero_velocity() {
        let model = constant_input_model();
        let x = dvector![0.5, -1.0, 0.25];
        assert_eq!(alpha(&model, &x, &dvector![1.0, 2.0, 3.0]).unwrap().amax(), 0.0);
        assert_eq!(alpha(&model, &x, &DVector::zeros(3)).unwrap().amax(), 0.0);
    }

    #[test]
    fn beta_is_negated_output() {
        let model = constant_input_model();
        let x = dvector![0.5, -1.0, 0.25];
        let w = dvector![0.3, -0.7, 1.1];
        assert_eq!(beta(&model, &x, &w).unwrap(), -output_y(&model, &x, &w).unwrap());
        // y = B^T M w = 1*0.3 + 2*2*(-0.7)
        assert!((output_y(&model, &x, &w).unwrap()[0] - (0.3 - 2.8)).abs() < 1e-15);
        let scaled = output_y(&model, &x, &(&w * 3.0)).unwrap();
        assert!((scaled - output_y(&model, &x, &w).unwrap() * 3.0).amax() < 1e-14);
    }

    #[test]
    fn u_dot_is_additive_in_vdot() {
        let model = constant_input_model();
        let x = dvector![0.5, -1.0, 0.25];
        let u = dvector![0.7];
        let base = u_dot(&model, &x, &u, &dvector![0.0]).unwrap();
        let shifted = u_dot(&model, &x, &u, &dvector![1.25]).unwrap();
        assert!(((shifted - base)[0] - 1.25).abs() < 1e-14);
    }

    #[test]
    fn linear_potential_for_constant_metric_input() {
        let model = constant_input_model();
        let x = dvector![0.5, -1.0, 0.25];
        let x_ref = dvector![-0.2, 0.1, 1.0];
        // M B = (1, 4, 0)
        let expected = (x[0] - x_ref[0]) + 4.0 * (x[1] - x_ref[1]);
        for segments in [1, 2, 17] {
            let p = potential_via_path(&model, &x, &x_ref, segments).unwrap();
            assert!((p[0] - expected).abs() < 1e-14);
        }
        assert_eq!(potential_via_path(&model, &x, &x, 10).unwrap()[0], 0.0);
        assert!(potential_via_path(&model, &x, &x_ref, 0).is_err());

        let gamma = potential_gamma(&model, &x).unwrap();
        let center = model.domain().center();
        let expected_gamma = (x[0] - center[0]) + 4.0 * (x[1] - center[1]);
        assert!((gamma[0] - expected_gamma).abs() < 1e-12);
    }

    #[test]
    fn potential_detects_rotation_field() {
        let model = ClosureModel::new(
            2,
            1,
            |x: &DVector<f64>| -x,
            |x: &DVector<f64>| DMatrix::from_column_slice(2, 1, &[-x[1], x[0]]),
            Metric::identity(2),
            StateBox::uniform(2, -1.0, 1.0).unwrap(),
        )
        .unwrap();
        let err = potential_gamma(&model, &dvector![0.8, 0.6]).unwrap_err();
        assert!(matches!(err, Error::Integrability { .. }));
    }

    #[test]
    fn equilibrium_of_open_loop_is_zero_input() {
        let model = constant_input_model();
        let u = solve_equilibrium_input(&model, &DVector::zeros(3)).unwrap();
        assert_eq!(u, dvector![0.0]);
    }

    #[test]
    fn equilibrium_solve_and_infeasibility() {
        let model = constant_input_model();
        // f(x) = -x must lie in span(B) = span((1, 2, 0)).
        let x_ok = dvector![0.5, 1.0, 0.0];
        let u = solve_equilibrium_input(&model, &x_ok).unwrap();
        assert!((u[0] - 0.5).abs() < 1e-14);
        assert!(xdot(&model, &x_ok, &u).unwrap().norm() < 1e-12);
        let err = solve_equilibrium_input(&model, &dvector![0.5, 1.0, 0.1]).unwrap_err();
        assert!(matches!(err, Error::InfeasibleSetpoint { residual } if (residual - 0.1).abs() < 1e-12));
    }

    #[test]
    fn alpha_refuses_singular_gram() {
        let model = ClosureModel::new(
            2,
            1,
            |x: &DVector<f64>| -x,
            |x: &DVector<f64>| DMatrix::from_column_slice(2, 1, &[x[0], 0.0]),
            Metric::identity(2),
            StateBox::uniform(2, -1.0, 1.0).unwrap(),
        )
        .unwrap();
        let err = alpha(&model, &dvector![0.0, 0.3], &dvector![1.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::Singularity { .. }));
        assert!(alpha(&model, &dvector![0.5, 0.3], &dvector![1.0, 0.0]).is_ok());
    }

    #[test]
    fn stabilizer_rest_and_k1_scaling() {
        let model = constant_input_model();
        let x_star = dvector![0.5, 1.0, 0.0];
        let setpoint = Setpoint::resolve(&model, x_star.clone()).unwrap();
        let u_star = setpoint.u_star.clone();
        let r = ControllerRealization::new(&model, ControllerGains::default(), setpoint.clone(), u_star.clone()).unwrap();
        let xd = xdot(&model, &x_star, &u_star).unwrap();
        let v = stabilizing_vdot(&r, &x_star, &xd, &dvector![0.0]).unwrap();
        assert!(v.amax() < 1e-12);

        let x = dvector![0.1, 0.2, -0.3];
        let w = dvector![0.4, 0.1, 0.2];
        let r1 = ControllerRealization::new(&model, ControllerGains::new(1.0, 0.5, 0.3).unwrap(), setpoint.clone(), u_star.clone()).unwrap();
        let r2 = ControllerRealization::new(&model, ControllerGains::new(2.0, 0.5, 0.3).unwrap(), setpoint, u_star).unwrap();
        let v1 = stabilizing_vdot(&r1, &x, &w, &dvector![0.0]).unwrap();
        let v2 = stabilizing_vdot(&r2, &x, &w, &dvector![0.0]).unwrap();
        assert!((v1 * 0.5 - v2).amax() < 1e-15);
    }
}
