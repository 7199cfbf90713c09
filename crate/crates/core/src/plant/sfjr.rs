//! Single-link flexible-joint robot driven by a geared DC motor.
//!
//! State `[link angle, link rate, motor angle, motor rate, current]`,
//! input: armature voltage.
//!
//! The armature time constant `L / R_m` is a few microseconds, far below
//! any usable sampling time, so [`SfjrParams::advance`] integrates the four
//! mechanical states with the current held on its quasi-steady manifold
//! `i = (U - N K_e motor_rate) / R_m`. [`sfjr_derivatives`] still returns
//! the full five-state vector field.

use serde::{Deserialize, Serialize};

use super::integrator::rk4_step;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SfjrParams {
    pub j1: f64,
    pub j2: f64,
    pub kf1: f64,
    pub kf2: f64,
    pub k: f64,
    pub k_tau: f64,
    pub r_m: f64,
    pub l: f64,
    pub k_e: f64,
    pub n: f64,
    pub m: f64,
    pub link_length: f64,
    pub g: f64,
}

impl Default for SfjrParams {
    fn default() -> Self {
        Self {
            j1: 0.8,
            j2: 0.1,
            kf1: 2.0,
            kf2: 2.0,
            k: 70.0,
            k_tau: 9.3e-3,
            r_m: 5.3,
            l: 1.4e-5,
            k_e: 0.1,
            n: 200.0,
            m: 0.3,
            link_length: 0.5,
            g: 9.8,
        }
    }
}

impl SfjrParams {
    pub const KEYS: [&'static str; 13] = [
        "J1", "J2", "Kf1", "Kf2", "K", "K_tau", "R_m", "L", "K_e", "N", "m", "l", "g",
    ];

    pub(crate) fn slot(&mut self, key: &str) -> Option<&mut f64> {
        Some(match key {
            "J1" => &mut self.j1,
            "J2" => &mut self.j2,
            "Kf1" => &mut self.kf1,
            "Kf2" => &mut self.kf2,
            "K" => &mut self.k,
            "K_tau" => &mut self.k_tau,
            "R_m" => &mut self.r_m,
            "L" => &mut self.l,
            "K_e" => &mut self.k_e,
            "N" => &mut self.n,
            "m" => &mut self.m,
            "l" => &mut self.link_length,
            "g" => &mut self.g,
            _ => return None,
        })
    }

    fn gravity_torque(&self, link_angle: f64) -> f64 {
        self.m * self.g * self.link_length * link_angle.sin()
    }

    /// Current on the quasi-steady electrical manifold.
    pub fn steady_current(&self, motor_rate: f64, voltage: f64) -> f64 {
        (voltage - self.n * self.k_e * motor_rate) / self.r_m
    }

    /// Static equilibrium `(state, voltage)` holding the link at `angle`.
    pub fn equilibrium(&self, angle: f64) -> ([f64; 5], f64) {
        let torque = self.gravity_torque(angle);
        let motor = angle + torque / self.k;
        let current = torque / (self.n * self.k_tau);
        ([angle, 0.0, motor, 0.0, current], self.r_m * current)
    }

    fn mechanical(&self, x: &[f64], current: f64, dx: &mut [f64]) {
        let spring = self.k * (x[2] - x[0]);
        dx[0] = x[1];
        dx[1] = (spring - self.gravity_torque(x[0]) - self.kf1 * x[1]) / self.j1;
        dx[2] = x[3];
        dx[3] = (self.n * self.k_tau * current - self.kf2 * x[3] - spring) / self.j2;
    }

    /// Advance `x` by `dt` under constant voltage, in `substeps` RK4 steps.
    pub fn advance(&self, x: &[f64], voltage: f64, dt: f64, substeps: usize, out: &mut [f64]) -> Result<()> {
        let mut mech = [x[0], x[1], x[2], x[3]];
        let h = dt / substeps as f64;
        for _ in 0..substeps {
            let mut next = [0.0; 4];
            rk4_step(&mech, h, &mut next, |s, d| {
                self.mechanical(s, self.steady_current(s[3], voltage), d);
                Ok(())
            })?;
            mech = next;
        }
        out[..4].copy_from_slice(&mech);
        out[4] = self.steady_current(mech[3], voltage);
        Ok(())
    }
}

pub fn sfjr_derivatives(x: &[f64], u: &[f64], p: &SfjrParams, dx: &mut [f64]) -> Result<()> {
    let voltage = u[0];
    p.mechanical(x, x[4], dx);
    dx[4] = (voltage - p.r_m * x[4] - p.n * p.k_e * x[3]) / p.l;
    Ok(())
}
