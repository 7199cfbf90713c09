//! Fixed-step fourth-order Runge-Kutta.

use crate::error::{Error, Result};

/// Largest state dimension handled by the stack buffers below.
pub const MAX_STATE: usize = 16;

/// One classical RK4 step of `dx/dt = f(x)` over `dt`, written into `out`.
///
/// `f` receives the stage state and writes the derivative into its second
/// argument. Both slices have the length of `x`.
pub fn rk4_step<F>(x: &[f64], dt: f64, out: &mut [f64], mut f: F) -> Result<()>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let m = x.len();
    if m > MAX_STATE {
        return Err(Error::config(format!(
            "state dimension {m} exceeds integrator capacity {MAX_STATE}"
        )));
    }
    let mut k1 = [0.0; MAX_STATE];
    let mut k2 = [0.0; MAX_STATE];
    let mut k3 = [0.0; MAX_STATE];
    let mut k4 = [0.0; MAX_STATE];
    let mut tmp = [0.0; MAX_STATE];

    f(x, &mut k1[..m])?;
    for i in 0..m {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    f(&tmp[..m], &mut k2[..m])?;
    for i in 0..m {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    f(&tmp[..m], &mut k3[..m])?;
    for i in 0..m {
        tmp[i] = x[i] + dt * k3[i];
    }
    f(&tmp[..m], &mut k4[..m])?;
    for i in 0..m {
        out[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(())
}
