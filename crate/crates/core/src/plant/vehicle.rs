//! Dynamic bicycle model with a linear tire.
//!
//! State `[X, Y, vx, vy, yaw_rate, yaw]`, input `[acceleration, steering]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub m: f64,
    pub iz: f64,
    pub lf: f64,
    pub lr: f64,
    pub cf: f64,
    pub cr: f64,
    /// Slip angles are undefined near standstill; below this speed the
    /// derivative is rejected.
    pub vx_min: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            m: 1650.0,
            iz: 2650.0,
            lf: 1.1,
            lr: 1.7,
            cf: 55494.0,
            cr: 55494.0,
            vx_min: 0.5,
        }
    }
}

impl VehicleParams {
    pub const KEYS: [&'static str; 7] = ["m", "Iz", "lf", "lr", "Cf", "Cr", "vx_min"];

    pub(crate) fn slot(&mut self, key: &str) -> Option<&mut f64> {
        Some(match key {
            "m" => &mut self.m,
            "Iz" => &mut self.iz,
            "lf" => &mut self.lf,
            "lr" => &mut self.lr,
            "Cf" => &mut self.cf,
            "Cr" => &mut self.cr,
            "vx_min" => &mut self.vx_min,
            _ => return None,
        })
    }

    /// Steering angle that holds a steady yaw rate at speed `vx` with no
    /// lateral velocity (kinematic approximation).
    pub fn steady_steer(&self, vx: f64, yaw_rate: f64) -> f64 {
        (self.lf + self.lr) * yaw_rate / vx
    }
}

pub fn vehicle_derivatives(x: &[f64], u: &[f64], p: &VehicleParams, dx: &mut [f64]) -> Result<()> {
    let (vx, vy, r, yaw) = (x[2], x[3], x[4], x[5]);
    if vx < p.vx_min {
        return Err(Error::LowSpeed {
            speed: vx,
            min: p.vx_min,
        });
    }
    let (accel, steer) = (u[0], u[1]);
    let alpha_f = ((vy + p.lf * r) / vx).atan() - steer;
    let alpha_r = ((vy - p.lr * r) / vx).atan();
    let fcf = -p.cf * alpha_f;
    let fcr = -p.cr * alpha_r;
    let (s, c) = yaw.sin_cos();

    dx[0] = vx * c - vy * s;
    dx[1] = vx * s + vy * c;
    dx[2] = r * vy + accel;
    dx[3] = -r * vx + 2.0 / p.m * (fcf * steer.cos() + fcr);
    dx[4] = 2.0 / p.iz * (p.lf * fcf - p.lr * fcr);
    dx[5] = r;
    Ok(())
}
