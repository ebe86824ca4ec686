//! Finite-difference audits of dissipation inequalities `S' <= supply`.
//!
//! A logged storage sequence is differentiated with second-order stencils
//! (central inside, one-sided at the ends), so the discretization slack
//! shrinks like `h^2` in the record spacing. Each record also carries the
//! analytic rate, which lets the audit measure that slack directly.

use serde::{Deserialize, Serialize};

use super::SimulationTrace;
use crate::control::ControllerGains;

/// Second-order finite-difference derivative of uniformly spaced samples.
///
/// Returns an empty vector for fewer than three samples.
pub fn fd_rates(values: &[f64], spacing: f64) -> Vec<f64> {
    let n = values.len();
    if n < 3 {
        return Vec::new();
    }
    let inv = 1.0 / (2.0 * spacing);
    (0..n)
        .map(|k| {
            if k == 0 {
                (-3.0 * values[0] + 4.0 * values[1] - values[2]) * inv
            } else if k == n - 1 {
                (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) * inv
            } else {
                (values[k + 1] - values[k - 1]) * inv
            }
        })
        .collect()
}

/// Worst-case findings for one inequality `storage' <= supply`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityAudit {
    /// `max_k (storage'_fd - supply)`; negative when the inequality holds strictly.
    pub worst_residual: f64,
    /// Positive part of `worst_residual`.
    pub worst_violation: f64,
    pub worst_at: f64,
    /// `max_k |storage'_fd - storage'_exact|`, the discretization slack.
    pub slack: f64,
}

impl InequalityAudit {
    pub fn holds_within(&self, epsilon: f64) -> bool {
        self.worst_violation <= epsilon
    }
}

/// Per-record residuals `storage'_fd - supply` and the summary audit.
pub fn audit_inequality(
    times: &[f64],
    storage: &[f64],
    supply: &[f64],
    exact_rate: &[f64],
) -> Option<(Vec<f64>, InequalityAudit)> {
    if times.len() < 3 {
        return None;
    }
    let spacing = times[1] - times[0];
    let rates = fd_rates(storage, spacing);
    let residuals: Vec<f64> = rates.iter().zip(supply).map(|(r, s)| r - s).collect();
    let (mut worst_residual, mut worst_at) = (f64::NEG_INFINITY, times[0]);
    for (r, t) in residuals.iter().zip(times) {
        if *r > worst_residual {
            worst_residual = *r;
            worst_at = *t;
        }
    }
    let slack = rates
        .iter()
        .zip(exact_rate)
        .map(|(fd, ex)| (fd - ex).abs())
        .fold(0.0, f64::max);
    Some((
        residuals,
        InequalityAudit {
            worst_residual,
            worst_violation: worst_residual.max(0.0),
            worst_at,
            slack,
        },
    ))
}

/// Audit of the Krasovskii storage and the shaped closed-loop storage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// `V' <= y^T v'`
    pub storage: InequalityAudit,
    /// `V_d' <= y^T vbar' - kd y^T y`
    pub shaped: InequalityAudit,
    pub records: usize,
}

impl AuditReport {
    pub fn clean(&self, epsilon: f64) -> bool {
        self.storage.holds_within(epsilon) && self.shaped.holds_within(epsilon)
    }

    pub fn slack(&self) -> f64 {
        self.storage.slack.max(self.shaped.slack)
    }

    pub fn worst_violation(&self) -> f64 {
        self.storage.worst_violation.max(self.shaped.worst_violation)
    }
}

/// Residual sequences for both inequalities, using `gains.kd` for the damping term.
pub(crate) fn trace_residuals(trace: &SimulationTrace, gains: &ControllerGains) -> Option<(Vec<f64>, Vec<f64>, AuditReport)> {
    let recs = &trace.records;
    let times: Vec<f64> = recs.iter().map(|r| r.t).collect();
    let v: Vec<f64> = recs.iter().map(|r| r.v).collect();
    let vd: Vec<f64> = recs.iter().map(|r| r.vd).collect();
    let supply: Vec<f64> = recs.iter().map(|r| r.y.dot(&r.vdot)).collect();
    let shaped_supply: Vec<f64> = recs
        .iter()
        .map(|r| r.y.dot(&r.vbar_dot) - gains.kd * r.y.norm_squared())
        .collect();
    let v_rate: Vec<f64> = recs.iter().map(|r| r.v_rate).collect();
    let vd_rate: Vec<f64> = recs.iter().map(|r| r.vd_rate).collect();
    let (storage_res, storage) = audit_inequality(&times, &v, &supply, &v_rate)?;
    let (shaped_res, shaped) = audit_inequality(&times, &vd, &shaped_supply, &vd_rate)?;
    Some((storage_res, shaped_res, AuditReport { storage, shaped, records: recs.len() }))
}

/// Re-derives both passivity residuals from the logged trace with the given
/// gains. Returns `None` when the trace has fewer than three records.
pub fn passivity_audit(trace: &SimulationTrace, gains: &ControllerGains) -> Option<AuditReport> {
    trace_residuals(trace, gains).map(|(_, _, report)| report)
}

/// `epsilon = C dt^2`, with `C` fitted from the slack at `dt` and `dt / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonCalibration {
    pub dt: f64,
    pub slack_coarse: f64,
    pub slack_fine: f64,
    pub constant: f64,
    pub epsilon: f64,
}

impl EpsilonCalibration {
    pub fn fit(dt: f64, slack_coarse: f64, slack_fine: f64) -> Self {
        let half = 0.5 * dt;
        let constant = (slack_coarse / (dt * dt)).max(slack_fine / (half * half));
        EpsilonCalibration {
            dt,
            slack_coarse,
            slack_fine,
            constant,
            epsilon: constant * dt * dt,
        }
    }

    /// How much the slack shrank when `dt` was halved.
    pub fn refinement_ratio(&self) -> f64 {
        if self.slack_fine > 0.0 {
            self.slack_coarse / self.slack_fine
        } else if self.slack_coarse == 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stencils_are_exact_for_quadratics() {
        let h = 0.1;
        let values: Vec<f64> = (0..6).map(|k| {
            let t = k as f64 * h;
            3.0 * t * t - t + 2.0
        }).collect();
        let rates = fd_rates(&values, h);
        for (k, r) in rates.iter().enumerate() {
            let t = k as f64 * h;
            assert!((r - (6.0 * t - 1.0)).abs() < 1e-12);
        }
        assert!(fd_rates(&values[..2], h).is_empty());
    }

    #[test]
    fn audit_of_decaying_storage() {
        let times: Vec<f64> = (0..50).map(|k| k as f64 * 0.01).collect();
        let storage: Vec<f64> = times.iter().map(|t| (-t).exp()).collect();
        let exact: Vec<f64> = times.iter().map(|t| -(-t).exp()).collect();
        let supply = vec![0.0; times.len()];
        let (res, audit) = audit_inequality(&times, &storage, &supply, &exact).unwrap();
        assert_eq!(res.len(), 50);
        assert!(audit.worst_residual < 0.0);
        assert_eq!(audit.worst_violation, 0.0);
        assert!(audit.slack < 1e-4);
        assert!(audit_inequality(&times[..2], &storage[..2], &supply[..2], &exact[..2]).is_none());
    }

    #[test]
    fn calibration_uses_larger_constant() {
        let c = EpsilonCalibration::fit(0.1, 4e-4, 1e-4);
        assert!((c.constant - 0.04).abs() < 1e-12);
        assert!((c.epsilon - 4e-4).abs() < 1e-15);
        assert!((c.refinement_ratio() - 4.0).abs() < 1e-12);
    }
}
