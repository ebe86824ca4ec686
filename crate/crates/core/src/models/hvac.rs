//! Two-zone building thermal model: two air zones coupled through a 3R2C wall,
//! each exchanging heat with ambient and receiving supply air at `T_s` with
//! mass flow `u_j`:
//!
//! ```text
//! C1 T1' = (T3 - T1)/R13 + (Tinf - T1)/R10 + u1 cp (Ts - T1)
//! C2 T2' = (T4 - T2)/R24 + (Tinf - T2)/R20 + u2 cp (Ts - T2)
//! C3 T3' = (T1 - T3)/R13 + (T4 - T3)/R34
//! C4 T4' = (T2 - T4)/R24 + (T3 - T4)/R34
//! ```
//!
//! Temperatures are deviations from ambient. The default parameter set is
//! implementation-chosen (unit capacitances/resistances, heavier walls).

use nalgebra::{dvector, DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::control::ControllerGains;
use crate::error::{Error, Result};
use crate::simulate::SimulationConfig;
use crate::system::{ControlAffineModel, Metric, StateBox};

/// Minimum distance kept between the sampled zone temperatures and `T_s`.
pub const SUPPLY_EXCLUSION: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HvacParams {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    #[serde(alias = "r31")]
    pub r13: f64,
    #[serde(alias = "r42")]
    pub r24: f64,
    pub r34: f64,
    pub r10: f64,
    pub r20: f64,
    pub cp: f64,
    pub t_supply: f64,
    pub t_ambient: f64,
}

impl Default for HvacParams {
    fn default() -> Self {
        HvacParams {
            c1: 1.0,
            c2: 1.0,
            c3: 2.0,
            c4: 2.0,
            r13: 1.0,
            r24: 1.0,
            r34: 1.0,
            r10: 1.0,
            r20: 1.0,
            cp: 1.0,
            t_supply: -10.0,
            t_ambient: 0.0,
        }
    }
}

impl HvacParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("c1", self.c1),
            ("c2", self.c2),
            ("c3", self.c3),
            ("c4", self.c4),
            ("r13", self.r13),
            ("r24", self.r24),
            ("r34", self.r34),
            ("r10", self.r10),
            ("r20", self.r20),
            ("cp", self.cp),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.t_supply.is_finite() || !self.t_ambient.is_finite() {
            return Err(Error::InvalidParameter("temperatures must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct HvacModel {
    params: HvacParams,
    metric: Metric,
    domain: StateBox,
    conductance: DMatrix<f64>,
}

impl HvacModel {
    /// Builds the model with the default box `[T_inf - 5, T_inf + 15]` on every axis.
    pub fn new(params: HvacParams) -> Result<Self> {
        let t = params.t_ambient;
        let domain = StateBox::uniform(4, t - 5.0, t + 15.0)?;
        Self::with_domain(params, domain)
    }

    /// The zone axes of `domain` must stay at least [`SUPPLY_EXCLUSION`] away from `T_s`.
    pub fn with_domain(params: HvacParams, domain: StateBox) -> Result<Self> {
        params.validate()?;
        if domain.dim() != 4 {
            return Err(Error::Dimension { context: "state box", expected: 4, got: domain.dim() });
        }
        for zone in 0..2 {
            let (lo, hi) = (domain.lower[zone], domain.upper[zone]);
            let ts = params.t_supply;
            if ts > lo - SUPPLY_EXCLUSION && ts < hi + SUPPLY_EXCLUSION {
                return Err(Error::InvalidParameter(format!(
                    "supply temperature {ts} lies within {SUPPLY_EXCLUSION} of zone {} range [{lo}, {hi}]",
                    zone + 1
                )));
            }
        }
        let metric = Metric::diagonal(&[params.c1, params.c2, params.c3, params.c4])?;
        let conductance = Self::assemble_conductance(&params);
        Ok(HvacModel { params, metric, domain, conductance })
    }

    fn assemble_conductance(p: &HvacParams) -> DMatrix<f64> {
        let (g13, g24, g34, g10, g20) = (1.0 / p.r13, 1.0 / p.r24, 1.0 / p.r34, 1.0 / p.r10, 1.0 / p.r20);
        DMatrix::from_row_slice(
            4,
            4,
            &[
                g13 + g10, 0.0, -g13, 0.0,
                0.0, g24 + g20, 0.0, -g24,
                -g13, 0.0, g13 + g34, -g34,
                0.0, -g24, -g34, g24 + g34,
            ],
        )
    }

    pub fn params(&self) -> &HvacParams {
        &self.params
    }

    /// Grounded conductance matrix `L` with `C T' = -L T + b + (input terms)`.
    pub fn conductance_matrix(&self) -> &DMatrix<f64> {
        &self.conductance
    }

    fn capacitances(&self) -> [f64; 4] {
        let p = &self.params;
        [p.c1, p.c2, p.c3, p.c4]
    }

    /// Wall temperatures `(T3, T4)` at rest for given zone temperatures.
    pub fn wall_temperatures(&self, t1: f64, t2: f64) -> (f64, f64) {
        let p = &self.params;
        let (g13, g24, g34) = (1.0 / p.r13, 1.0 / p.r24, 1.0 / p.r34);
        let a = Matrix2::new(g13 + g34, -g34, -g34, g24 + g34);
        let rhs = Vector2::new(g13 * t1, g24 * t2);
        let walls = a.lu().solve(&rhs).expect("wall conductance block is positive definite");
        (walls[0], walls[1])
    }

    /// Full equilibrium state for zone setpoints `(t1, t2)`.
    pub fn setpoint_state(&self, t1: f64, t2: f64) -> DVector<f64> {
        let (t3, t4) = self.wall_temperatures(t1, t2);
        dvector![t1, t2, t3, t4]
    }
}

impl ControlAffineModel for HvacModel {
    fn state_dim(&self) -> usize {
        4
    }

    fn input_dim(&self) -> usize {
        2
    }

    fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        let p = &self.params;
        let mut rhs = -(&self.conductance * x);
        rhs[0] += p.t_ambient / p.r10;
        rhs[1] += p.t_ambient / p.r20;
        for (v, c) in rhs.iter_mut().zip(self.capacitances()) {
            *v /= c;
        }
        rhs
    }

    fn input_matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let p = &self.params;
        let mut g = DMatrix::zeros(4, 2);
        g[(0, 0)] = p.cp / p.c1 * (p.t_supply - x[0]);
        g[(1, 1)] = p.cp / p.c2 * (p.t_supply - x[1]);
        g
    }

    fn drift_jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let mut jac = -self.conductance.clone();
        for (i, c) in self.capacitances().into_iter().enumerate() {
            jac.row_mut(i).scale_mut(1.0 / c);
        }
        Some(jac)
    }

    fn input_matrix_derivative(&self, _x: &DVector<f64>, w: &DVector<f64>) -> Option<DMatrix<f64>> {
        let p = &self.params;
        let mut dg = DMatrix::zeros(4, 2);
        dg[(0, 0)] = -p.cp / p.c1 * w[0];
        dg[(1, 1)] = -p.cp / p.c2 * w[1];
        Some(dg)
    }

    fn potential(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let p = &self.params;
        let d1 = x[0] - p.t_supply;
        let d2 = x[1] - p.t_supply;
        Some(dvector![-0.5 * p.cp * d1 * d1, -0.5 * p.cp * d2 * d2])
    }

    fn metric(&self) -> &Metric {
        &self.metric
    }

    fn domain(&self) -> &StateBox {
        &self.domain
    }
}

/// Zone setpoints of the default scenario.
pub const DEFAULT_ZONE_SETPOINTS: (f64, f64) = (2.5, 6.0);

/// Default model and closed-loop configuration: zones start at ambient and are
/// driven to `(2.5, 6)`, so zone 2 has the larger initial gap.
pub fn hvac_default_scenario() -> (HvacModel, SimulationConfig) {
    let model = HvacModel::new(HvacParams::default()).expect("default parameters are valid");
    let (t1, t2) = DEFAULT_ZONE_SETPOINTS;
    let x_star = model.setpoint_state(t1, t2);
    let config = SimulationConfig::new(DVector::zeros(4), x_star, ControllerGains::default())
        .with_horizon(30.0, 1e-3);
    (model, config)
}
