use nalgebra::DVector;

use crate::error::{Error, Result};

/// One classical Runge–Kutta step of `z' = deriv(t, z)`.
pub fn step_rk4<F>(mut deriv: F, t: f64, z: &DVector<f64>, dt: f64) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let finite = |k: DVector<f64>, at: f64| -> Result<DVector<f64>> {
        if k.iter().all(|v| v.is_finite()) {
            Ok(k)
        } else {
            Err(Error::BlowUp { t: at })
        }
    };
    let half = 0.5 * dt;
    let k1 = finite(deriv(t, z)?, t)?;
    let k2 = finite(deriv(t + half, &(z + &k1 * half))?, t + half)?;
    let k3 = finite(deriv(t + half, &(z + &k2 * half))?, t + half)?;
    let k4 = finite(deriv(t + dt, &(z + &k3 * dt))?, t + dt)?;
    let next = z + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0);
    finite(next, t + dt)
}
