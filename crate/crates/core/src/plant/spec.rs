use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::integrator::rk4_step;
use super::sfjr::{sfjr_derivatives, SfjrParams};
use super::uav::{uav_derivatives, UavParams};
use super::vehicle::{vehicle_derivatives, VehicleParams};
use super::StateVector;
use crate::error::{check_dim, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Uav,
    Vehicle,
    Sfjr,
    /// `dx/dt = u` with one input per state; small enough for analytic checks.
    Integrator,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Uav,
        ModelKind::Vehicle,
        ModelKind::Sfjr,
        ModelKind::Integrator,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Uav => "uav",
            ModelKind::Vehicle => "vehicle",
            ModelKind::Sfjr => "sfjr",
            ModelKind::Integrator => "integrator",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(format!("unknown model '{s}'")))
    }
}

/// Physical parameters of one of the shipped plants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum PlantParams {
    Uav(UavParams),
    Vehicle(VehicleParams),
    Sfjr(SfjrParams),
    Integrator,
}

impl PlantParams {
    pub fn defaults(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Uav => PlantParams::Uav(UavParams::default()),
            ModelKind::Vehicle => PlantParams::Vehicle(VehicleParams::default()),
            ModelKind::Sfjr => PlantParams::Sfjr(SfjrParams::default()),
            ModelKind::Integrator => PlantParams::Integrator,
        }
    }

    pub fn keys(&self) -> &'static [&'static str] {
        match self {
            PlantParams::Uav(_) => &UavParams::KEYS,
            PlantParams::Vehicle(_) => &VehicleParams::KEYS,
            PlantParams::Sfjr(_) => &SfjrParams::KEYS,
            PlantParams::Integrator => &[],
        }
    }

    /// Override one named parameter; unknown names are rejected.
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::config(format!("parameter '{key}' must be finite")));
        }
        let slot = match self {
            PlantParams::Uav(p) => p.slot(key),
            PlantParams::Vehicle(p) => p.slot(key),
            PlantParams::Sfjr(p) => p.slot(key),
            PlantParams::Integrator => None,
        };
        match slot {
            Some(s) => {
                *s = value;
                Ok(())
            }
            None => Err(Error::config(format!("unknown plant parameter '{key}'"))),
        }
    }

    pub fn apply(&mut self, overrides: &BTreeMap<String, f64>) -> Result<()> {
        for (k, v) in overrides {
            self.set(k, *v)?;
        }
        Ok(())
    }

    /// Continuous-time derivative with `u` in controller units.
    pub fn derivatives(&self, x: &[f64], u: &[f64], dx: &mut [f64]) -> Result<()> {
        match self {
            PlantParams::Uav(p) => {
                let w = [
                    u[0] * p.rotor_scale,
                    u[1] * p.rotor_scale,
                    u[2] * p.rotor_scale,
                    u[3] * p.rotor_scale,
                ];
                uav_derivatives(x, &w, p, dx)
            }
            PlantParams::Vehicle(p) => vehicle_derivatives(x, u, p, dx),
            PlantParams::Sfjr(p) => sfjr_derivatives(x, u, p, dx),
            PlantParams::Integrator => {
                dx.copy_from_slice(u);
                Ok(())
            }
        }
    }
}

/// Everything the controller and the simulator need to know about a plant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub params: PlantParams,
    pub m: usize,
    pub n: usize,
    pub ts: f64,
    pub horizon: usize,
    pub x_min: Vec<f64>,
    pub x_max: Vec<f64>,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
    pub du_min: Vec<f64>,
    pub du_max: Vec<f64>,
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub q_terminal: Vec<f64>,
    /// RK4 sub-steps per sampling period.
    pub substeps: usize,
    /// Any state magnitude above this after a step is reported as divergence.
    pub blowup: f64,
    /// Range used for noise scaling of states whose bounds are infinite.
    pub unbounded_range: Vec<f64>,
}

impl ModelSpec {
    pub fn for_kind(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Uav => Self::uav(),
            ModelKind::Vehicle => Self::vehicle(),
            ModelKind::Sfjr => Self::sfjr(),
            ModelKind::Integrator => Self::integrator(1),
        }
    }

    pub fn uav() -> Self {
        let inf = f64::INFINITY;
        let a = PI / 3.0;
        let w = PI / 24.0;
        Self {
            kind: ModelKind::Uav,
            params: PlantParams::Uav(UavParams::default()),
            m: 12,
            n: 4,
            ts: 0.02,
            horizon: 10,
            x_min: vec![-inf, -inf, -inf, -inf, -inf, -inf, -a, -a, -a, -w, -w, -w],
            x_max: vec![inf, inf, inf, inf, inf, inf, a, a, a, w, w, w],
            u_min: vec![0.0; 4],
            u_max: vec![12.0; 4],
            du_min: vec![-0.2; 4],
            du_max: vec![0.2; 4],
            q: vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0],
            r: vec![0.1; 4],
            q_terminal: vec![0.0; 12],
            substeps: 1,
            blowup: 1e6,
            unbounded_range: vec![1.0; 12],
        }
    }

    pub fn vehicle() -> Self {
        let inf = f64::INFINITY;
        Self {
            kind: ModelKind::Vehicle,
            params: PlantParams::Vehicle(VehicleParams::default()),
            m: 6,
            n: 2,
            ts: 0.02,
            horizon: 10,
            x_min: vec![-inf, -inf, 0.5, -3.0, -1.0, -2.0 * PI],
            x_max: vec![inf, inf, 30.0, 3.0, 1.0, 2.0 * PI],
            u_min: vec![-3.0, -0.4],
            u_max: vec![3.0, 0.4],
            du_min: vec![-0.2, -0.2],
            du_max: vec![0.2, 0.2],
            q: vec![1.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            r: vec![0.1, 0.1],
            q_terminal: vec![0.0; 6],
            substeps: 2,
            blowup: 1e7,
            unbounded_range: vec![1.0; 6],
        }
    }

    pub fn sfjr() -> Self {
        let v = PI / 18.0;
        Self {
            kind: ModelKind::Sfjr,
            params: PlantParams::Sfjr(SfjrParams::default()),
            m: 5,
            n: 1,
            ts: 0.04,
            horizon: 10,
            x_min: vec![-PI, -v, -PI, -v, 0.0],
            x_max: vec![PI, v, PI, v, 5.0],
            u_min: vec![0.0],
            u_max: vec![24.0],
            du_min: vec![-0.1],
            du_max: vec![0.1],
            q: vec![1.0, 0.0, 0.0, 0.0, 0.0],
            r: vec![0.5],
            q_terminal: vec![0.0; 5],
            substeps: 4,
            blowup: 1e6,
            unbounded_range: vec![1.0; 5],
        }
    }

    /// `dim` decoupled integrators, sampled at 0.1 s with a one-step horizon.
    pub fn integrator(dim: usize) -> Self {
        Self {
            kind: ModelKind::Integrator,
            params: PlantParams::Integrator,
            m: dim,
            n: dim,
            ts: 0.1,
            horizon: 1,
            x_min: vec![-100.0; dim],
            x_max: vec![100.0; dim],
            u_min: vec![-10.0; dim],
            u_max: vec![10.0; dim],
            du_min: vec![f64::NEG_INFINITY; dim],
            du_max: vec![f64::INFINITY; dim],
            q: vec![1.0; dim],
            r: vec![0.0; dim],
            q_terminal: vec![0.0; dim],
            substeps: 1,
            blowup: 1e9,
            unbounded_range: vec![1.0; dim],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n) = (self.m, self.n);
        check_dim("x_min", m, self.x_min.len())?;
        check_dim("x_max", m, self.x_max.len())?;
        check_dim("q", m, self.q.len())?;
        check_dim("q_terminal", m, self.q_terminal.len())?;
        check_dim("unbounded_range", m, self.unbounded_range.len())?;
        check_dim("u_min", n, self.u_min.len())?;
        check_dim("u_max", n, self.u_max.len())?;
        check_dim("du_min", n, self.du_min.len())?;
        check_dim("du_max", n, self.du_max.len())?;
        check_dim("r", n, self.r.len())?;
        if !(self.ts > 0.0) {
            return Err(Error::config("sampling time must be positive"));
        }
        if self.horizon < 1 {
            return Err(Error::config("horizon must be at least one step"));
        }
        if self.substeps < 1 {
            return Err(Error::config("substeps must be at least one"));
        }
        let ordered = |lo: &[f64], hi: &[f64]| lo.iter().zip(hi).all(|(a, b)| a <= b);
        if !ordered(&self.x_min, &self.x_max) {
            return Err(Error::config("state bounds not ordered"));
        }
        if !ordered(&self.u_min, &self.u_max) || self.u_min.iter().chain(&self.u_max).any(|v| !v.is_finite()) {
            return Err(Error::config("input bounds must be finite and ordered"));
        }
        if !ordered(&self.du_min, &self.du_max) {
            return Err(Error::config("input-rate bounds not ordered"));
        }
        if self.q.iter().chain(&self.r).chain(&self.q_terminal).any(|w| *w < 0.0) {
            return Err(Error::config("weights must be non-negative"));
        }
        Ok(())
    }

    /// Physical margin of each input, `u_max - u_min`.
    pub fn physical_margins(&self) -> Vec<f64> {
        self.u_max.iter().zip(&self.u_min).map(|(hi, lo)| hi - lo).collect()
    }

    /// Per-state range for measurement-noise scaling.
    pub fn measurement_ranges(&self) -> Vec<f64> {
        (0..self.m)
            .map(|j| {
                let span = self.x_max[j] - self.x_min[j];
                if span.is_finite() {
                    span
                } else {
                    self.unbounded_range[j]
                }
            })
            .collect()
    }

    /// Set the synthetic range of every unbounded state to `factor` times the
    /// span of that state over `states` (kept if the span is zero).
    pub fn fit_unbounded_ranges(&mut self, states: &[StateVector], factor: f64) {
        for j in 0..self.m {
            if (self.x_max[j] - self.x_min[j]).is_finite() {
                continue;
            }
            let (lo, hi) = states.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
                (lo.min(s[j]), hi.max(s[j]))
            });
            let span = hi - lo;
            if span.is_finite() && span > 0.0 {
                self.unbounded_range[j] = factor * span;
            }
        }
    }

    pub fn set_param(&mut self, key: &str, value: f64) -> Result<()> {
        self.params.set(key, value)
    }

    /// Discrete step without dimension checks; `out` has length `m`.
    pub(crate) fn step_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) -> Result<()> {
        let dt = self.ts / self.substeps as f64;
        match &self.params {
            PlantParams::Sfjr(p) => p.advance(x, u[0], self.ts, self.substeps, out)?,
            PlantParams::Integrator => {
                for i in 0..self.m {
                    out[i] = x[i] + self.ts * u[i];
                }
            }
            params => {
                let mut cur = [0.0; super::MAX_STATE];
                cur[..self.m].copy_from_slice(x);
                for _ in 0..self.substeps {
                    let mut next = [0.0; super::MAX_STATE];
                    rk4_step(&cur[..self.m], dt, &mut next[..self.m], |s, d| params.derivatives(s, u, d))?;
                    cur = next;
                }
                out.copy_from_slice(&cur[..self.m]);
            }
        }
        for (index, &value) in out.iter().enumerate() {
            if !value.is_finite() || value.abs() > self.blowup {
                return Err(Error::Divergence {
                    index,
                    value,
                    bound: self.blowup,
                });
            }
        }
        Ok(())
    }
}
