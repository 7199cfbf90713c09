//! Quadrotor rigid-body model with linear drag.
//!
//! State `[X, Y, Z, Xd, Yd, Zd, roll, pitch, yaw, roll_d, pitch_d, yaw_d]`,
//! input: the four rotor speeds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pitch angles whose cosine is below this are rejected (|pitch| within
/// 1e-3 rad of +-pi/2).
pub const GIMBAL_GUARD: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UavParams {
    pub g: f64,
    pub m: f64,
    pub l: f64,
    pub k: f64,
    pub b: f64,
    pub i_m: f64,
    pub ixx: f64,
    pub iyy: f64,
    pub izz: f64,
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
    /// Rotor speed in rad/s per unit of controller input.
    pub rotor_scale: f64,
}

impl Default for UavParams {
    fn default() -> Self {
        Self {
            g: 9.81,
            m: 0.468,
            l: 0.225,
            k: 2.980e-6,
            b: 1.140e-7,
            i_m: 3.357e-5,
            ixx: 4.856e-3,
            iyy: 4.856e-3,
            izz: 8.801e-3,
            ax: 0.25,
            ay: 0.25,
            az: 0.25,
            rotor_scale: 100.0,
        }
    }
}

impl UavParams {
    pub const KEYS: [&'static str; 13] = [
        "g", "m", "l", "k", "b", "I_M", "Ixx", "Iyy", "Izz", "Ax", "Ay", "Az", "rotor_scale",
    ];

    pub(crate) fn slot(&mut self, key: &str) -> Option<&mut f64> {
        Some(match key {
            "g" => &mut self.g,
            "m" => &mut self.m,
            "l" => &mut self.l,
            "k" => &mut self.k,
            "b" => &mut self.b,
            "I_M" => &mut self.i_m,
            "Ixx" => &mut self.ixx,
            "Iyy" => &mut self.iyy,
            "Izz" => &mut self.izz,
            "Ax" => &mut self.ax,
            "Ay" => &mut self.ay,
            "Az" => &mut self.az,
            "rotor_scale" => &mut self.rotor_scale,
            _ => return None,
        })
    }

    /// Rotor speed (rad/s) at which total thrust balances gravity.
    pub fn hover_speed(&self) -> f64 {
        (self.m * self.g / (4.0 * self.k)).sqrt()
    }

    /// Hover rotor speed expressed in controller input units.
    pub fn hover_input(&self) -> f64 {
        self.hover_speed() / self.rotor_scale
    }
}

/// Time derivative of the 12-dimensional state for rotor speeds `omega`
/// given in rad/s.
pub fn uav_derivatives(x: &[f64], omega: &[f64], p: &UavParams, dx: &mut [f64]) -> Result<()> {
    for (rotor, &w) in omega.iter().enumerate() {
        if w < 0.0 {
            return Err(Error::NegativeRotorSpeed { rotor, speed: w });
        }
    }
    let (phi, theta, psi) = (x[6], x[7], x[8]);
    let (phi_d, theta_d, psi_d) = (x[9], x[10], x[11]);
    let (sphi, cphi) = phi.sin_cos();
    let (sth, cth) = theta.sin_cos();
    let (spsi, cpsi) = psi.sin_cos();
    if cth.abs() < GIMBAL_GUARD {
        return Err(Error::GimbalLock { pitch: theta });
    }
    let tth = sth / cth;

    let w2: [f64; 4] = [
        omega[0] * omega[0],
        omega[1] * omega[1],
        omega[2] * omega[2],
        omega[3] * omega[3],
    ];
    let thrust = p.k * (w2[0] + w2[1] + w2[2] + w2[3]);
    let tau_phi = p.l * p.k * (-w2[1] + w2[3]);
    let tau_theta = p.l * p.k * (-w2[0] + w2[2]);
    let tau_psi = p.b * (-w2[0] + w2[1] - w2[2] + w2[3]);
    let omega_gamma = omega[0] - omega[1] + omega[2] - omega[3];

    // Translational dynamics in the inertial frame.
    dx[0] = x[3];
    dx[1] = x[4];
    dx[2] = x[5];
    let tm = thrust / p.m;
    dx[3] = tm * (cpsi * sth * cphi + spsi * sphi) - p.ax * x[3] / p.m;
    dx[4] = tm * (spsi * sth * cphi - cpsi * sphi) - p.ay * x[4] / p.m;
    dx[5] = -p.g + tm * cth * cphi - p.az * x[5] / p.m;

    // Body rates from Euler rates: r = T * e_dot.
    let bp = phi_d - sth * psi_d;
    let bq = cphi * theta_d + cth * sphi * psi_d;
    let br = -sphi * theta_d + cth * cphi * psi_d;

    // Body angular accelerations with gyroscopic coupling.
    let bp_d = (p.iyy - p.izz) * bq * br / p.ixx - p.i_m * bq / p.ixx * omega_gamma
        + tau_phi / p.ixx;
    let bq_d = (p.izz - p.ixx) * bp * br / p.iyy + p.i_m * bp / p.iyy * omega_gamma
        + tau_theta / p.iyy;
    let br_d = (p.ixx - p.iyy) * bp * bq / p.izz + tau_psi / p.izz;

    // e_ddot = d/dt(T^-1) r + T^-1 r_dot.
    let c2 = cth * cth;
    let dinv = [
        [
            0.0,
            phi_d * cphi * tth + theta_d * sphi / c2,
            -phi_d * sphi * tth + theta_d * cphi / c2,
        ],
        [0.0, -phi_d * sphi, -phi_d * cphi],
        [
            0.0,
            phi_d * cphi / cth + theta_d * sphi * tth / cth,
            -phi_d * sphi / cth + theta_d * cphi * tth / cth,
        ],
    ];
    let tinv = [
        [1.0, sphi * tth, cphi * tth],
        [0.0, cphi, -sphi],
        [0.0, sphi / cth, cphi / cth],
    ];
    let r = [bp, bq, br];
    let rd = [bp_d, bq_d, br_d];
    dx[6] = phi_d;
    dx[7] = theta_d;
    dx[8] = psi_d;
    for row in 0..3 {
        let mut acc = 0.0;
        for col in 0..3 {
            acc += dinv[row][col] * r[col] + tinv[row][col] * rd[col];
        }
        dx[9 + row] = acc;
    }
    Ok(())
}
