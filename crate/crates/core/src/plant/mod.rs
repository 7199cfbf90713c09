//! Plant models: continuous dynamics, discretization, and noise injection.

mod integrator;
mod noise;
mod sfjr;
mod spec;
mod uav;
mod vehicle;

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

pub use integrator::{rk4_step, MAX_STATE};
pub use noise::{perturb_input, perturb_measurement, NoiseConfig};
pub use sfjr::{sfjr_derivatives, SfjrParams};
pub use spec::{ModelKind, ModelSpec, PlantParams};
pub use uav::{uav_derivatives, UavParams, GIMBAL_GUARD};
pub use vehicle::{vehicle_derivatives, VehicleParams};

use crate::error::{check_dim, check_finite, Result};

macro_rules! real_vector {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub Vec<f64>);

        impl $name {
            pub fn zeros(len: usize) -> Self {
                Self(vec![0.0; len])
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }
        }

        impl Deref for $name {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut [f64] {
                &mut self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                Self(v)
            }
        }

        impl From<&[f64]> for $name {
            fn from(v: &[f64]) -> Self {
                Self(v.to_vec())
            }
        }
    };
}

real_vector!(
    /// Plant state; length is the owning model's state count.
    StateVector
);
real_vector!(
    /// Plant input; length is the owning model's input count.
    InputVector
);

/// Continuous-time derivative of `x` under `u` for the model in `spec`.
pub fn derivatives(spec: &ModelSpec, x: &[f64], u: &[f64]) -> Result<StateVector> {
    check_dim("state", spec.m, x.len())?;
    check_dim("input", spec.n, u.len())?;
    let mut dx = vec![0.0; spec.m];
    spec.params.derivatives(x, u, &mut dx)?;
    Ok(StateVector(dx))
}

/// Discrete-time map: advance `x` by one sampling period under constant `u`.
pub fn step(spec: &ModelSpec, x: &[f64], u: &[f64]) -> Result<StateVector> {
    check_dim("state", spec.m, x.len())?;
    check_dim("input", spec.n, u.len())?;
    check_finite("state", x)?;
    check_finite("input", u)?;
    let mut out = vec![0.0; spec.m];
    spec.step_into(x, u, &mut out)?;
    Ok(StateVector(out))
}
