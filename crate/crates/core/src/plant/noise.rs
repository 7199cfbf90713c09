//! Additive Gaussian actuator and sensor noise.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{InputVector, ModelSpec, StateVector};
use crate::error::{check_dim, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Input noise standard deviation as a fraction of each physical margin.
    pub rho: f64,
    /// Measurement noise standard deviation as a fraction of each state range.
    pub theta: f64,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn new(rho: f64, theta: f64, seed: u64) -> Result<Self> {
        let cfg = Self { rho, theta, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn none() -> Self {
        Self {
            rho: 0.0,
            theta: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rho", self.rho), ("theta", self.theta)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::config(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        Ok(())
    }

    /// Same seed with both fractions multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            rho: self.rho * factor,
            theta: self.theta * factor,
            seed: self.seed,
        }
    }

    pub fn input_sigmas(&self, spec: &ModelSpec) -> Vec<f64> {
        spec.physical_margins().iter().map(|b| self.rho * b).collect()
    }

    pub fn measurement_sigmas(&self, spec: &ModelSpec) -> Vec<f64> {
        spec.measurement_ranges().iter().map(|r| self.theta * r).collect()
    }
}

fn add_clipped<R: Rng + ?Sized>(v: &mut [f64], sigmas: &[f64], lo: &[f64], hi: &[f64], rng: &mut R) {
    for (i, x) in v.iter_mut().enumerate() {
        if sigmas[i] > 0.0 {
            let d = Normal::new(0.0, sigmas[i]).expect("positive finite sigma");
            *x = (*x + d.sample(rng)).clamp(lo[i], hi[i]);
        }
    }
}

/// Input as the actuator delivers it: Gaussian noise, clipped to the input box.
pub fn perturb_input<R: Rng + ?Sized>(
    u: &[f64],
    spec: &ModelSpec,
    cfg: &NoiseConfig,
    rng: &mut R,
) -> Result<InputVector> {
    check_dim("input", spec.n, u.len())?;
    let mut out = u.to_vec();
    add_clipped(&mut out, &cfg.input_sigmas(spec), &spec.u_min, &spec.u_max, rng);
    Ok(InputVector(out))
}

/// State as the sensor reports it. Noisy values are clipped to finite state
/// bounds; unbounded coordinates are left unclipped.
pub fn perturb_measurement<R: Rng + ?Sized>(
    x: &[f64],
    spec: &ModelSpec,
    cfg: &NoiseConfig,
    rng: &mut R,
) -> Result<StateVector> {
    check_dim("state", spec.m, x.len())?;
    let mut out = x.to_vec();
    add_clipped(&mut out, &cfg.measurement_sigmas(spec), &spec.x_min, &spec.x_max, rng);
    Ok(StateVector(out))
}
