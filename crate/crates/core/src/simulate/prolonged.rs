//! The prolonged system: the closed loop together with its variational
//! dynamics along the same trajectory.
//!
//! ```text
//! du  = alpha(x, dx) u + beta(x, dx) + dv        (algebraic)
//! dx' = df/dx dx + (dg/dx dx) u + g du
//! dy  = g^T M dx
//! ```

use nalgebra::DVector;

use super::{
    audit_inequality, loop_rates, prepare, split, step_rk4, InequalityAudit, Interrupted, Signal,
    SimulationConfig,
};
use crate::control::{alpha, beta, ControllerRealization};
use crate::error::{Error, Result};
use crate::system::{
    drift_jacobian, eval_input_matrix, g_time_derivative, ControlAffineModel,
};

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalRecord {
    pub t: f64,
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub dx: DVector<f64>,
    pub du: DVector<f64>,
    pub dy: DVector<f64>,
    pub dv: DVector<f64>,
    /// `dx^T M dx / 2`
    pub d_storage: f64,
    /// Exact `dx^T M dx'`.
    pub d_storage_rate: f64,
    /// Finite-differenced `d_storage' - dy^T dv`.
    pub residual: f64,
}

#[derive(Debug, Clone, Default)]
pub struct VariationalTrace {
    pub records: Vec<VariationalRecord>,
    pub audit: Option<InequalityAudit>,
    pub complete: bool,
}

impl VariationalTrace {
    fn finish(mut records: Vec<VariationalRecord>, complete: bool) -> Self {
        let times: Vec<f64> = records.iter().map(|r| r.t).collect();
        let storage: Vec<f64> = records.iter().map(|r| r.d_storage).collect();
        let supply: Vec<f64> = records.iter().map(|r| r.dy.dot(&r.dv)).collect();
        let exact: Vec<f64> = records.iter().map(|r| r.d_storage_rate).collect();
        let audit = audit_inequality(&times, &storage, &supply, &exact).map(|(res, audit)| {
            for (rec, r) in records.iter_mut().zip(res) {
                rec.residual = r;
            }
            audit
        });
        VariationalTrace { records, audit, complete }
    }

    /// Largest increase of the variational storage between consecutive records.
    pub fn max_storage_increase(&self) -> f64 {
        self.records
            .windows(2)
            .map(|w| w[1].d_storage - w[0].d_storage)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

struct VariationalRates {
    du: DVector<f64>,
    dxdot: DVector<f64>,
}

fn variational_rates<M: ControlAffineModel + ?Sized>(
    model: &M,
    x: &DVector<f64>,
    u: &DVector<f64>,
    dx: &DVector<f64>,
    dv: &DVector<f64>,
) -> Result<VariationalRates> {
    let du = alpha(model, x, dx)? * u + beta(model, x, dx)? + dv;
    let dxdot = drift_jacobian(model, x)? * dx
        + g_time_derivative(model, x, dx)? * u
        + eval_input_matrix(model, x)? * &du;
    Ok(VariationalRates { du, dxdot })
}

fn variational_record<M: ControlAffineModel + ?Sized>(
    ctrl: &ControllerRealization<'_, M>,
    t: f64,
    x: &DVector<f64>,
    u: &DVector<f64>,
    dx: &DVector<f64>,
    dv: DVector<f64>,
) -> Result<VariationalRecord> {
    let model = ctrl.model();
    let rates = variational_rates(model, x, u, dx, &dv)?;
    let metric = model.metric().matrix();
    let dy = eval_input_matrix(model, x)?.transpose() * (metric * dx);
    Ok(VariationalRecord {
        t,
        x: x.clone(),
        u: u.clone(),
        dx: dx.clone(),
        du: rates.du,
        dy,
        dv,
        d_storage: 0.5 * model.metric().quadratic(dx),
        d_storage_rate: dx.dot(&(metric * rates.dxdot)),
        residual: 0.0,
    })
}

/// Co-integrates the closed loop `(x, u)` of `config` with the variation `dx`
/// driven by the port signal `dv` (zero when absent).
pub fn simulate_prolonged<M: ControlAffineModel + ?Sized>(
    model: &M,
    config: &SimulationConfig,
    dx0: &DVector<f64>,
    dv: Option<&Signal>,
) -> Result<VariationalTrace, Interrupted<VariationalTrace>> {
    let fail = |error| Interrupted { error, partial: VariationalTrace::default() };
    let ctrl = prepare(model, config).map_err(fail)?;
    let (n, m) = (model.state_dim(), model.input_dim());
    if dx0.len() != n {
        return Err(fail(Error::Dimension { context: "initial variation", expected: n, got: dx0.len() }));
    }
    let dv_at = |t: f64| dv.map_or_else(|| DVector::zeros(m), |s| s(t));

    let mut z = DVector::zeros(2 * n + m);
    z.rows_mut(0, n).copy_from(&config.x0);
    z.rows_mut(n, m).copy_from(ctrl.u());
    z.rows_mut(n + m, n).copy_from(dx0);

    let rhs = |t: f64, z: &DVector<f64>| -> Result<DVector<f64>> {
        let (x, u) = split(z, n, m);
        let dx = z.rows(n + m, n).into_owned();
        let base = loop_rates(&ctrl, &x, &u, config.vbar_at(t, m))?;
        let var = variational_rates(model, &x, &u, &dx, &dv_at(t))?;
        let mut out = DVector::zeros(2 * n + m);
        out.rows_mut(0, n).copy_from(&base.xdot);
        out.rows_mut(n, m).copy_from(&base.udot);
        out.rows_mut(n + m, n).copy_from(&var.dxdot);
        Ok(out)
    };

    let steps = config.steps();
    let mut records = Vec::with_capacity(config.expected_records());
    for k in 0..=steps {
        let t = k as f64 * config.dt;
        let outcome = (|| -> Result<DVector<f64>> {
            if k % config.log_stride == 0 {
                let (x, u) = split(&z, n, m);
                let dx = z.rows(n + m, n).into_owned();
                records.push(variational_record(&ctrl, t, &x, &u, &dx, dv_at(t))?);
            }
            if k == steps {
                return Ok(z.clone());
            }
            step_rk4(rhs, t, &z, config.dt)
        })();
        match outcome {
            Ok(next) => z = next,
            Err(error) => {
                return Err(Interrupted { error, partial: VariationalTrace::finish(records, false) })
            }
        }
    }
    Ok(VariationalTrace::finish(records, true))
}
