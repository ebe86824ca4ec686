//! Fixed-step closed-loop simulation with passivity monitoring.
//!
//! The plant state `x` and the controller state `u` are integrated together
//! with classical RK4:
//!
//! ```text
//! x' = f(x) + g(x) u
//! u' = alpha(x, x') u + beta(x, x') + v'
//! v' = (vbar'(t) - kd y - ki (Gamma(x) - Gamma(x*))) / k1
//! ```
//!
//! `x'` is always evaluated algebraically as `f + g u`, never by differencing
//! the trace. Every logged record carries the storages `V` and `V_d` together
//! with their exact time derivatives so the audits can separate true
//! violations from finite-difference slack.

mod audit;
mod csv;
mod driven;
mod prolonged;
mod rk4;

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use serde::Serialize;

use crate::assumptions::{check_all, CheckConfig};
use crate::control::{
    alpha, beta, output_y, stabilizing_vdot, xdot, ControllerGains, ControllerRealization, Setpoint,
};
use crate::error::{Error, Result};
use crate::system::{drift_jacobian, eval_input_matrix, g_time_derivative, ControlAffineModel};

pub use audit::{audit_inequality, fd_rates, passivity_audit, AuditReport, EpsilonCalibration, InequalityAudit};
pub use csv::{trace_csv_header, write_trace_csv, write_variational_csv, variational_csv_header};
pub use driven::{simulate_driven, DrivenInput, DrivenRecord, DrivenTrace};
pub use prolonged::{simulate_prolonged, VariationalRecord, VariationalTrace};
pub use rk4::step_rk4;

/// Time-dependent port signal `t -> R^m`.
pub type Signal = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;

/// Whether to verify the structural assumptions before a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AssumptionGate {
    Verify(CheckConfig),
    Waive,
}

#[derive(Clone)]
pub struct SimulationConfig {
    pub t_end: f64,
    pub dt: f64,
    pub x0: DVector<f64>,
    /// Initial controller state; zero when absent.
    pub u0: Option<DVector<f64>>,
    pub gains: ControllerGains,
    pub x_star: DVector<f64>,
    /// Reference port input `vbar'(t)`; zero when absent.
    pub vbar_dot: Option<Signal>,
    pub log_stride: usize,
    /// Convergence band on `|x - x*|_inf`.
    pub band: f64,
    pub assumptions: AssumptionGate,
}

impl fmt::Debug for SimulationConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SimulationConfig")
            .field("t_end", &self.t_end)
            .field("dt", &self.dt)
            .field("x0", &self.x0.as_slice())
            .field("u0", &self.u0.as_ref().map(|u| u.as_slice().to_vec()))
            .field("gains", &self.gains)
            .field("x_star", &self.x_star.as_slice())
            .field("vbar_dot", &self.vbar_dot.as_ref().map(|_| "<signal>"))
            .field("log_stride", &self.log_stride)
            .field("band", &self.band)
            .field("assumptions", &self.assumptions)
            .finish()
    }
}

impl SimulationConfig {
    pub fn new(x0: DVector<f64>, x_star: DVector<f64>, gains: ControllerGains) -> Self {
        SimulationConfig {
            t_end: 10.0,
            dt: 1e-3,
            x0,
            u0: None,
            gains,
            x_star,
            vbar_dot: None,
            log_stride: 1,
            band: 0.01,
            assumptions: AssumptionGate::Verify(CheckConfig::default()),
        }
    }

    pub fn with_horizon(mut self, t_end: f64, dt: f64) -> Self {
        self.t_end = t_end;
        self.dt = dt;
        self
    }

    pub fn with_x0(mut self, x0: DVector<f64>) -> Self {
        self.x0 = x0;
        self
    }

    pub fn with_log_stride(mut self, stride: usize) -> Self {
        self.log_stride = stride;
        self
    }

    pub fn with_u0(mut self, u0: DVector<f64>) -> Self {
        self.u0 = Some(u0);
        self
    }

    pub fn with_vbar_dot(mut self, signal: Signal) -> Self {
        self.vbar_dot = Some(signal);
        self
    }

    pub fn with_band(mut self, band: f64) -> Self {
        self.band = band;
        self
    }

    pub fn with_assumptions(mut self, gate: AssumptionGate) -> Self {
        self.assumptions = gate;
        self
    }

    /// Number of integration steps, `floor(t_end / dt)`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt + 1e-9).floor() as usize
    }

    /// Number of logged records for a complete run.
    pub fn expected_records(&self) -> usize {
        self.steps() / self.log_stride + 1
    }

    pub fn validate(&self, n: usize, m: usize) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= self.dt && self.t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!("t_end must be >= dt, got {}", self.t_end)));
        }
        if self.log_stride == 0 {
            return Err(Error::InvalidParameter("log_stride must be >= 1".into()));
        }
        // kd and ki are deliberately unchecked so audits can be exercised on
        // destabilized loops; k1 divides the port law.
        if !(self.gains.k1 > 0.0 && self.gains.k1.is_finite()) {
            return Err(Error::InvalidParameter(format!("k1 must be > 0, got {}", self.gains.k1)));
        }
        if !(self.band > 0.0) {
            return Err(Error::InvalidParameter("convergence band must be positive".into()));
        }
        for (context, v, len) in [
            ("initial state", &self.x0, n),
            ("setpoint state", &self.x_star, n),
        ] {
            if v.len() != len {
                return Err(Error::Dimension { context, expected: len, got: v.len() });
            }
            if v.iter().any(|e| !e.is_finite()) {
                return Err(Error::InvalidParameter(format!("{context} must be finite")));
            }
        }
        if let Some(u0) = &self.u0 {
            if u0.len() != m {
                return Err(Error::Dimension { context: "initial input", expected: m, got: u0.len() });
            }
        }
        Ok(())
    }

    fn initial_input(&self, m: usize) -> DVector<f64> {
        self.u0.clone().unwrap_or_else(|| DVector::zeros(m))
    }

    fn vbar_at(&self, t: f64, m: usize) -> DVector<f64> {
        match &self.vbar_dot {
            Some(signal) => signal(t),
            None => DVector::zeros(m),
        }
    }
}

/// A run that stopped early, with whatever was logged before the failure.
#[derive(Debug, Clone)]
pub struct Interrupted<T> {
    pub error: Error,
    pub partial: T,
}

impl<T> fmt::Display for Interrupted<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "simulation interrupted: {}", self.error)
    }
}

impl<T: fmt::Debug> std::error::Error for Interrupted<T> {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub xdot: DVector<f64>,
    pub y: DVector<f64>,
    pub vdot: DVector<f64>,
    pub vbar_dot: DVector<f64>,
    /// `Gamma(x) - Gamma(x*)`
    pub gamma_error: DVector<f64>,
    /// Krasovskii storage `x'^T M x' / 2`.
    pub v: f64,
    /// Shaped storage `k1 V + ki |Gamma - Gamma*|^2 / 2`.
    pub vd: f64,
    /// Exact `dV/dt = x'^T M x''`.
    pub v_rate: f64,
    /// Exact `dV_d/dt = k1 dV/dt + ki y^T (Gamma - Gamma*)`.
    pub vd_rate: f64,
    /// Finite-differenced `V' - y^T v'`.
    pub storage_residual: f64,
    /// Finite-differenced `V_d' + kd y^T y - y^T vbar'`.
    pub vd_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceSummary {
    pub final_error: f64,
    pub max_storage_residual: f64,
    pub max_vd_residual: f64,
    /// First logged time after which `|x - x*|_inf < band` for the rest of the trace.
    pub t_converge: Option<f64>,
    /// Band satisfied over the final 5% of the horizon.
    pub converged: bool,
    pub band: f64,
    pub peak_abs_u: Vec<f64>,
    pub complete: bool,
}

#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub records: Vec<TraceRecord>,
    pub summary: TraceSummary,
    pub gains: ControllerGains,
    pub u_star: Option<DVector<f64>>,
    pub dt: f64,
    pub log_stride: usize,
}

impl SimulationTrace {
    pub fn state_dim(&self) -> usize {
        self.records.first().map_or(0, |r| r.x.len())
    }

    pub fn input_dim(&self) -> usize {
        self.records.first().map_or(0, |r| r.u.len())
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }
}

struct LoopRates {
    xdot: DVector<f64>,
    udot: DVector<f64>,
    y: DVector<f64>,
    vdot: DVector<f64>,
    vbar: DVector<f64>,
}

fn loop_rates<M: ControlAffineModel + ?Sized>(
    ctrl: &ControllerRealization<'_, M>,
    x: &DVector<f64>,
    u: &DVector<f64>,
    vbar: DVector<f64>,
) -> Result<LoopRates> {
    let model = ctrl.model();
    let xd = xdot(model, x, u)?;
    let vdot = stabilizing_vdot(ctrl, x, &xd, &vbar)?;
    let udot = alpha(model, x, &xd)? * u + beta(model, x, &xd)? + &vdot;
    let y = output_y(model, x, &xd)?;
    Ok(LoopRates { xdot: xd, udot, y, vdot, vbar })
}

/// `x'' = (df/dx) x' + (dg/dx x') u + g u'`
pub(crate) fn acceleration<M: ControlAffineModel + ?Sized>(
    model: &M,
    x: &DVector<f64>,
    u: &DVector<f64>,
    xd: &DVector<f64>,
    ud: &DVector<f64>,
) -> Result<DVector<f64>> {
    let jac = drift_jacobian(model, x)?;
    let gdot = g_time_derivative(model, x, xd)?;
    let g = eval_input_matrix(model, x)?;
    Ok(jac * xd + gdot * u + g * ud)
}

pub(crate) fn split(z: &DVector<f64>, n: usize, m: usize) -> (DVector<f64>, DVector<f64>) {
    (z.rows(0, n).into_owned(), z.rows(n, m).into_owned())
}

/// Assumption gate, setpoint resolution and controller construction.
pub(crate) fn prepare<'a, M: ControlAffineModel + ?Sized>(
    model: &'a M,
    config: &SimulationConfig,
) -> Result<ControllerRealization<'a, M>> {
    let (n, m) = (model.state_dim(), model.input_dim());
    config.validate(n, m)?;
    if let AssumptionGate::Verify(check) = &config.assumptions {
        let report = check_all(model, check);
        for (name, pass) in [("A1", report.a1.pass), ("A2", report.a2.pass), ("A3", report.a3.pass)] {
            if !pass {
                return Err(Error::AssumptionViolated(name));
            }
        }
    }
    let setpoint = Setpoint::resolve(model, config.x_star.clone())?;
    ControllerRealization::new(model, config.gains, setpoint, config.initial_input(m))
}

fn record<M: ControlAffineModel + ?Sized>(
    ctrl: &ControllerRealization<'_, M>,
    t: f64,
    x: &DVector<f64>,
    u: &DVector<f64>,
    vbar: DVector<f64>,
) -> Result<TraceRecord> {
    let model = ctrl.model();
    let gains = ctrl.gains;
    let rates = loop_rates(ctrl, x, u, vbar)?;
    let xdd = acceleration(model, x, u, &rates.xdot, &rates.udot)?;
    let metric = model.metric().matrix();
    let gamma_error = ctrl.gamma_error(x)?;
    let v = 0.5 * model.metric().quadratic(&rates.xdot);
    let v_rate = rates.xdot.dot(&(metric * &xdd));
    let vd = gains.k1 * v + 0.5 * gains.ki * gamma_error.norm_squared();
    let vd_rate = gains.k1 * v_rate + gains.ki * rates.y.dot(&gamma_error);
    Ok(TraceRecord {
        t,
        x: x.clone(),
        u: u.clone(),
        xdot: rates.xdot,
        y: rates.y,
        vdot: rates.vdot,
        vbar_dot: rates.vbar,
        gamma_error,
        v,
        vd,
        v_rate,
        vd_rate,
        storage_residual: 0.0,
        vd_residual: 0.0,
    })
}

fn finalize(
    mut records: Vec<TraceRecord>,
    config: &SimulationConfig,
    u_star: Option<DVector<f64>>,
    complete: bool,
) -> SimulationTrace {
    let gains = config.gains;
    let mut trace = SimulationTrace {
        records: Vec::new(),
        summary: TraceSummary {
            final_error: f64::NAN,
            max_storage_residual: 0.0,
            max_vd_residual: 0.0,
            t_converge: None,
            converged: false,
            band: config.band,
            peak_abs_u: Vec::new(),
            complete,
        },
        gains,
        u_star,
        dt: config.dt,
        log_stride: config.log_stride,
    };
    if records.is_empty() {
        return trace;
    }
    std::mem::swap(&mut trace.records, &mut records);
    if let Some((storage_res, vd_res, report)) = audit::trace_residuals(&trace, &gains) {
        for (rec, (s, d)) in trace.records.iter_mut().zip(storage_res.into_iter().zip(vd_res)) {
            rec.storage_residual = s;
            rec.vd_residual = d;
        }
        trace.summary.max_storage_residual = report.storage.worst_residual;
        trace.summary.max_vd_residual = report.shaped.worst_residual;
    }

    let err = |r: &TraceRecord| (&r.x - &config.x_star).amax();
    let last = trace.records.last().expect("non-empty");
    trace.summary.final_error = err(last);
    let t_last = last.t;
    let mut t_converge = None;
    for rec in trace.records.iter().rev() {
        if err(rec) < config.band {
            t_converge = Some(rec.t);
        } else {
            break;
        }
    }
    trace.summary.t_converge = t_converge;
    let tail_start = 0.95 * t_last;
    trace.summary.converged = complete
        && trace
            .records
            .iter()
            .filter(|r| r.t >= tail_start)
            .all(|r| err(r) < config.band);
    let m = last.u.len();
    trace.summary.peak_abs_u = (0..m)
        .map(|j| trace.records.iter().map(|r| r.u[j].abs()).fold(0.0, f64::max))
        .collect();
    trace
}

/// Integrates plant and controller from `(x0, u0)` and logs every
/// `log_stride`-th step, starting at `t = 0`.
///
/// The assumption gate and an infeasible setpoint are rejected before any
/// step is taken; failures mid-run return the records logged so far.
pub fn simulate_closed_loop<M: ControlAffineModel + ?Sized>(
    model: &M,
    config: &SimulationConfig,
) -> Result<SimulationTrace, Interrupted<SimulationTrace>> {
    let ctrl = prepare(model, config).map_err(|error| Interrupted {
        error,
        partial: finalize(Vec::new(), config, None, false),
    })?;
    let (n, m) = (model.state_dim(), model.input_dim());
    let u_star = Some(ctrl.setpoint.u_star.clone());
    let steps = config.steps();
    let mut records = Vec::with_capacity(config.expected_records());
    let mut z = DVector::zeros(n + m);
    z.rows_mut(0, n).copy_from(&config.x0);
    z.rows_mut(n, m).copy_from(ctrl.u());

    let rhs = |t: f64, z: &DVector<f64>| -> Result<DVector<f64>> {
        let (x, u) = split(z, n, m);
        let rates = loop_rates(&ctrl, &x, &u, config.vbar_at(t, m))?;
        let mut out = DVector::zeros(n + m);
        out.rows_mut(0, n).copy_from(&rates.xdot);
        out.rows_mut(n, m).copy_from(&rates.udot);
        Ok(out)
    };

    for k in 0..=steps {
        let t = k as f64 * config.dt;
        let outcome = (|| -> Result<DVector<f64>> {
            if k % config.log_stride == 0 {
                let (x, u) = split(&z, n, m);
                records.push(record(&ctrl, t, &x, &u, config.vbar_at(t, m))?);
            }
            if k == steps {
                return Ok(z.clone());
            }
            step_rk4(rhs, t, &z, config.dt)
        })();
        match outcome {
            Ok(next) => z = next,
            Err(error) => {
                return Err(Interrupted {
                    error,
                    partial: finalize(records, config, u_star, false),
                })
            }
        }
    }
    Ok(finalize(records, config, u_star, true))
}
