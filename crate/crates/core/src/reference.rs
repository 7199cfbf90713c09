//! Reference trajectories: smooth mixes of slow and fast sinusoids with
//! occasional held steps, shaped by a rate- and acceleration-limited
//! tracker, then lifted to full model states and matching inputs.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nmpc::ReferenceTrack;
use crate::plant::{InputVector, ModelSpec, PlantParams, StateVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceGenConfig {
    /// Control cycles the track must serve.
    pub cycles: usize,
    /// Scales every channel's excursion; 0 gives a constant reference.
    pub amplitude: f64,
    /// Sinusoids per channel, half slow and half fast.
    pub sinusoids: usize,
    /// Slow and fast frequency ranges in Hz.
    pub slow_hz: (f64, f64),
    pub fast_hz: (f64, f64),
    /// Probability per cycle of jumping to a new held offset.
    pub step_probability: f64,
    pub seed: u64,
}

impl Default for ReferenceGenConfig {
    fn default() -> Self {
        Self {
            cycles: 500,
            amplitude: 1.0,
            sinusoids: 3,
            slow_hz: (0.005, 0.02),
            fast_hz: (0.05, 0.15),
            step_probability: 0.005,
            seed: 0,
        }
    }
}

impl ReferenceGenConfig {
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        if self.cycles < spec.horizon + 2 {
            return Err(Error::config(format!("need at least {} cycles, got {}", spec.horizon + 2, self.cycles)));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::config("reference amplitude must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.step_probability) {
            return Err(Error::config("step probability must lie in [0, 1]"));
        }
        let ok = |(a, b): (f64, f64)| a >= 0.0 && a <= b && b.is_finite();
        if !ok(self.slow_hz) || !ok(self.fast_hz) {
            return Err(Error::config("frequency ranges must be ordered and non-negative"));
        }
        Ok(())
    }
}

/// Shape of one scalar reference channel.
#[derive(Clone, Copy, Debug)]
pub struct ChannelShape {
    pub center: f64,
    /// Largest excursion from the center at unit amplitude.
    pub excursion: f64,
    pub max_rate: f64,
    pub max_accel: f64,
}

/// Samples of one channel with its first two derivatives.
#[derive(Clone, Debug, Default)]
pub struct Channel {
    pub value: Vec<f64>,
    pub rate: Vec<f64>,
    pub accel: Vec<f64>,
}

/// Generate `len` samples at spacing `dt`. The value stays within
/// `center +- amplitude * excursion`; rate and acceleration stay within the
/// shape's limits.
pub fn channel<R: Rng + ?Sized>(shape: &ChannelShape, len: usize, dt: f64, cfg: &ReferenceGenConfig, rng: &mut R) -> Channel {
    let half = shape.amplitude_half(cfg.amplitude);
    let mut comps = Vec::new();
    for k in 0..cfg.sinusoids {
        let (lo, hi) = if k % 2 == 0 { cfg.slow_hz } else { cfg.fast_hz };
        let f = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let phase = rng.random_range(0.0..2.0 * PI);
        let weight = if k % 2 == 0 { 1.0 } else { 0.3 };
        comps.push((f, phase, weight));
    }
    let total: f64 = comps.iter().map(|c| c.2).sum::<f64>() + 1.0;
    let mut held = 0.0;
    let mut target = Vec::with_capacity(len);
    for s in 0..len {
        if half > 0.0 && rng.random_bool(cfg.step_probability) {
            held = rng.random_range(-1.0..=1.0);
        }
        let t = s as f64 * dt;
        let wave: f64 = comps.iter().map(|(f, p, w)| w * (2.0 * PI * f * t + p).sin()).sum();
        target.push(shape.center + half * (wave + held) / total);
    }

    // Track the raw target with bounded rate and acceleration.
    let mut out = Channel::default();
    let mut v = target.first().copied().unwrap_or(shape.center);
    let mut r: f64 = 0.0;
    for &goal in &target {
        // Rate that would arrive at the goal while still able to stop.
        let err = goal - v;
        let stop = (2.0 * shape.max_accel * err.abs()).sqrt();
        let desired = err.signum() * stop.min(err.abs() / dt).min(shape.max_rate);
        let a = ((desired - r) / dt).clamp(-shape.max_accel, shape.max_accel);
        out.value.push(v);
        out.rate.push(r);
        out.accel.push(a);
        r = (r + a * dt).clamp(-shape.max_rate, shape.max_rate);
        v = (v + r * dt).clamp(shape.center - half, shape.center + half);
    }
    out
}

impl ChannelShape {
    fn amplitude_half(&self, amplitude: f64) -> f64 {
        amplitude * self.excursion
    }
}

/// Build a reference track serving `cfg.cycles` cycles of `spec`.
pub fn generate_references<R: Rng + ?Sized>(spec: &ModelSpec, cfg: &ReferenceGenConfig, rng: &mut R) -> Result<ReferenceTrack> {
    cfg.validate(spec)?;
    let len = cfg.cycles + spec.horizon + 1;
    let dt = spec.ts;
    let (states, inputs) = match &spec.params {
        PlantParams::Sfjr(p) => {
            let link = channel(
                &ChannelShape {
                    center: PI / 2.0,
                    excursion: 1.0,
                    max_rate: 0.06,
                    max_accel: 0.03,
                },
                len,
                dt,
                cfg,
                rng,
            );
            let mut states = Vec::with_capacity(len);
            let mut inputs = Vec::with_capacity(len);
            for k in 0..len {
                let (a, w) = (link.value[k], link.rate[k]);
                let gravity = p.m * p.g * p.link_length * a.sin();
                let motor = a + (gravity + p.kf1 * w) / p.k;
                let current = (gravity + (p.kf1 + p.kf2) * w) / (p.n * p.k_tau);
                let voltage = (p.r_m * current + p.n * p.k_e * w).clamp(spec.u_min[0], spec.u_max[0]);
                states.push(StateVector(vec![a, w, motor, w, current]));
                inputs.push(InputVector(vec![voltage]));
            }
            (states, inputs)
        }
        PlantParams::Uav(p) => {
            let pos = ChannelShape {
                center: 0.0,
                excursion: 2.0,
                max_rate: 0.5,
                max_accel: 0.3,
            };
            let yaw = ChannelShape {
                center: 0.0,
                excursion: 0.3,
                max_rate: 0.05,
                max_accel: 0.05,
            };
            let mut height = pos;
            height.center = 2.0;
            let chans = [
                channel(&pos, len, dt, cfg, rng),
                channel(&pos, len, dt, cfg, rng),
                channel(&height, len, dt, cfg, rng),
                channel(&yaw, len, dt, cfg, rng),
            ];
            let hover = p.hover_input();
            let mut states = Vec::with_capacity(len);
            for k in 0..len {
                let mut x = vec![0.0; 12];
                for a in 0..3 {
                    x[a] = chans[a].value[k];
                    x[3 + a] = chans[a].rate[k];
                }
                x[8] = chans[3].value[k];
                x[11] = chans[3].rate[k];
                states.push(StateVector(x));
            }
            (states, vec![InputVector(vec![hover; 4]); len])
        }
        PlantParams::Vehicle(p) => {
            let speed = channel(
                &ChannelShape {
                    center: 10.0,
                    excursion: 3.0,
                    max_rate: 1.0,
                    max_accel: 0.5,
                },
                len,
                dt,
                cfg,
                rng,
            );
            let yaw_rate = channel(
                &ChannelShape {
                    center: 0.0,
                    excursion: 0.15,
                    max_rate: 0.05,
                    max_accel: 0.05,
                },
                len,
                dt,
                cfg,
                rng,
            );
            let (mut x, mut y, mut psi) = (0.0f64, 0.0f64, 0.0f64);
            let mut states = Vec::with_capacity(len);
            let mut inputs = Vec::with_capacity(len);
            for k in 0..len {
                let (vx, r) = (speed.value[k], yaw_rate.value[k]);
                states.push(StateVector(vec![x, y, vx, 0.0, r, psi]));
                let steer = p.steady_steer(vx, r).clamp(spec.u_min[1], spec.u_max[1]);
                let accel = speed.rate[k].clamp(spec.u_min[0], spec.u_max[0]);
                inputs.push(InputVector(vec![accel, steer]));
                let (s, c) = psi.sin_cos();
                x += vx * c * dt;
                y += vx * s * dt;
                psi = (psi + r * dt).clamp(spec.x_min[5], spec.x_max[5]);
            }
            (states, inputs)
        }
        PlantParams::Integrator => {
            let chans: Vec<Channel> = (0..spec.m)
                .map(|_| {
                    channel(
                        &ChannelShape {
                            center: 0.0,
                            excursion: 5.0,
                            max_rate: 2.0,
                            max_accel: 2.0,
                        },
                        len,
                        dt,
                        cfg,
                        rng,
                    )
                })
                .collect();
            let states = (0..len).map(|k| StateVector(chans.iter().map(|c| c.value[k]).collect())).collect();
            let inputs = (0..len)
                .map(|k| InputVector(chans.iter().map(|c| c.rate[k]).collect()))
                .collect();
            (states, inputs)
        }
    };
    let states = states
        .into_iter()
        .map(|mut s| {
            for j in 0..spec.m {
                s[j] = s[j].clamp(spec.x_min[j], spec.x_max[j]);
            }
            s
        })
        .collect();
    Ok(ReferenceTrack { states, inputs })
}
