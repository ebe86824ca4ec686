use std::sync::Arc;

use nalgebra::DVector;

use super::{acceleration, audit_inequality, step_rk4, InequalityAudit, Interrupted};
use crate::control::{output_y, xdot};
use crate::error::{Error, Result};
use crate::system::ControlAffineModel;

/// Prescribed input `t -> (u(t), u'(t))`.
pub type DrivenInput = Arc<dyn Fn(f64) -> (DVector<f64>, DVector<f64>) + Send + Sync>;

#[derive(Debug, Clone, PartialEq)]
pub struct DrivenRecord {
    pub t: f64,
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub udot: DVector<f64>,
    pub xdot: DVector<f64>,
    /// `y = g^T M x'`
    pub y: DVector<f64>,
    /// `x'^T M x' / 2`
    pub storage: f64,
    /// `y^T u'`
    pub supply: f64,
    /// Exact storage rate.
    pub storage_rate: f64,
    /// Finite-differenced storage rate minus supply.
    pub residual: f64,
}

#[derive(Debug, Clone, Default)]
pub struct DrivenTrace {
    pub records: Vec<DrivenRecord>,
    pub audit: Option<InequalityAudit>,
}

impl DrivenTrace {
    fn finish(mut records: Vec<DrivenRecord>) -> Self {
        let times: Vec<f64> = records.iter().map(|r| r.t).collect();
        let storage: Vec<f64> = records.iter().map(|r| r.storage).collect();
        let supply: Vec<f64> = records.iter().map(|r| r.supply).collect();
        let exact: Vec<f64> = records.iter().map(|r| r.storage_rate).collect();
        let audit = audit_inequality(&times, &storage, &supply, &exact).map(|(residuals, audit)| {
            for (rec, r) in records.iter_mut().zip(residuals) {
                rec.residual = r;
            }
            audit
        });
        DrivenTrace { records, audit }
    }

    /// Largest increase of the storage between consecutive records.
    pub fn max_storage_increase(&self) -> f64 {
        self.records
            .windows(2)
            .map(|w| w[1].storage - w[0].storage)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Open-loop run of `x' = f(x) + g(x) u(t)` with a prescribed input, logging
/// the Krasovskii storage and its supply `y^T u'`.
pub fn simulate_driven<M: ControlAffineModel + ?Sized>(
    model: &M,
    x0: &DVector<f64>,
    input: &DrivenInput,
    dt: f64,
    t_end: f64,
    log_stride: usize,
) -> Result<DrivenTrace, Interrupted<DrivenTrace>> {
    let fail = |error| Interrupted { error, partial: DrivenTrace::default() };
    if !(dt > 0.0) || !(t_end >= dt) || log_stride == 0 {
        return Err(fail(Error::InvalidParameter(format!(
            "need dt > 0, t_end >= dt and log_stride >= 1 (dt = {dt}, t_end = {t_end}, stride = {log_stride})"
        ))));
    }
    if x0.len() != model.state_dim() {
        return Err(fail(Error::Dimension {
            context: "initial state",
            expected: model.state_dim(),
            got: x0.len(),
        }));
    }
    let metric = model.metric().matrix();
    let steps = (t_end / dt + 1e-9).floor() as usize;
    let mut records = Vec::with_capacity(steps / log_stride + 1);
    let mut x = x0.clone();

    let make_record = |t: f64, x: &DVector<f64>| -> Result<DrivenRecord> {
        let (u, udot) = input(t);
        let xd = xdot(model, x, &u)?;
        let xdd = acceleration(model, x, &u, &xd, &udot)?;
        let y = output_y(model, x, &xd)?;
        Ok(DrivenRecord {
            t,
            storage: 0.5 * model.metric().quadratic(&xd),
            supply: y.dot(&udot),
            storage_rate: xd.dot(&(metric * xdd)),
            x: x.clone(),
            u,
            udot,
            xdot: xd,
            y,
            residual: 0.0,
        })
    };

    for k in 0..=steps {
        let t = k as f64 * dt;
        let outcome = (|| -> Result<DVector<f64>> {
            if k % log_stride == 0 {
                records.push(make_record(t, &x)?);
            }
            if k == steps {
                return Ok(x.clone());
            }
            step_rk4(|s, z| xdot(model, z, &input(s).0), t, &x, dt)
        })();
        match outcome {
            Ok(next) => x = next,
            Err(error) => {
                return Err(Interrupted {
                    error,
                    partial: DrivenTrace::finish(records),
                })
            }
        }
    }
    Ok(DrivenTrace::finish(records))
}
