//! Learned search margins: per-input SVR predictors, confidence gating,
//! margin selection, and population sizing.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::nmpc::{HorizonSolution, MarginVector};
use crate::plant::ModelKind;
use crate::svr::{train_svr, SvrModel, SvrParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BsmConfig {
    /// Confidence threshold.
    pub eta: f64,
    /// Cost threshold, shared with the GA.
    pub epsilon: f64,
    /// Physical margin per input.
    pub beta: Vec<f64>,
    pub nu: usize,
    pub xi: usize,
}

impl BsmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            return Err(Error::config("physical margins must be positive and finite"));
        }
        if !(self.eta >= 0.0) {
            return Err(Error::config("eta must be non-negative"));
        }
        if self.xi == 0 || self.xi > self.nu {
            return Err(Error::config("need 0 < xi <= nu"));
        }
        Ok(())
    }
}

/// Default confidence threshold per model.
pub fn default_eta(kind: ModelKind) -> f64 {
    match kind {
        ModelKind::Uav => 0.7,
        ModelKind::Vehicle => 0.65,
        ModelKind::Sfjr => 0.8,
        ModelKind::Integrator => 0.5,
    }
}

/// Default SVR settings per input of each model.
pub fn default_svr_params(kind: ModelKind) -> Vec<SvrParams> {
    let mk = |c: f64, lambda: f64, gamma: f64| SvrParams::new(c, lambda, gamma);
    match kind {
        ModelKind::Uav => vec![mk(10.0, 0.2, 0.1), mk(5.0, 0.2, 0.2), mk(5.0, 0.2, 0.2), mk(10.0, 0.2, 0.05)],
        ModelKind::Vehicle => vec![mk(1.0, 0.1, 0.05), mk(2.0, 0.35, 0.01)],
        ModelKind::Sfjr => vec![mk(5.0, 0.5, 0.2)],
        ModelKind::Integrator => vec![mk(1.0, 0.05, 1.0)],
    }
}

/// Predicted margins (clamped to `[0, beta]`) when recent costs and the
/// confidence allow it, otherwise the physical margins.
///
/// `cost_prev1` and `cost_prev2` are the best costs of the previous two
/// cycles; `None` (too early in the run) always yields the physical margins.
pub fn select_margin(
    predicted: &MarginVector,
    overall_confidence: f64,
    cost_prev1: Option<f64>,
    cost_prev2: Option<f64>,
    cfg: &BsmConfig,
) -> MarginVector {
    let physical = MarginVector(cfg.beta.clone());
    let (Some(j1), Some(j2)) = (cost_prev1, cost_prev2) else {
        return physical;
    };
    if (j1 <= j2 || j1 < cfg.epsilon) && overall_confidence > cfg.eta {
        predicted.clamped(&cfg.beta)
    } else {
        physical
    }
}

/// `max(floor(nu * max_i psi_i / beta_i), xi)`, never above `nu`.
pub fn population_size(psi: &MarginVector, cfg: &BsmConfig) -> usize {
    let alpha = psi
        .0
        .iter()
        .zip(&cfg.beta)
        .map(|(p, b)| (p / b).clamp(0.0, 1.0))
        .fold(0.0, f64::max);
    ((cfg.nu as f64 * alpha).floor() as usize).clamp(cfg.xi, cfg.nu)
}

pub fn overall_confidence(per_input: &[f64]) -> f64 {
    per_input.iter().sum::<f64>() / per_input.len() as f64
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    /// Compare the inputs both solutions assign to the same instant.
    #[default]
    AbsoluteTime,
    /// Compare equal horizon positions.
    SamePosition,
}

/// Largest per-input change between consecutive cycles' solutions.
pub fn bsm_from_solutions(current: &HorizonSolution, previous: &HorizonSolution, n: usize, alignment: Alignment) -> MarginVector {
    let h = current.steps(n);
    let mut out = vec![0.0f64; n];
    let pairs: Box<dyn Iterator<Item = (usize, usize)>> = match alignment {
        Alignment::AbsoluteTime => Box::new((0..h.saturating_sub(1)).map(|k| (k, k + 1))),
        Alignment::SamePosition => Box::new((0..h).map(|k| (k, k))),
    };
    for (kc, kp) in pairs {
        for i in 0..n {
            let d = (current.genes[kc * n + i] - previous.genes[kp * n + i]).abs();
            out[i] = out[i].max(d);
        }
    }
    MarginVector(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceMode {
    #[default]
    Raw,
    /// Each per-input confidence is divided by its median over a
    /// validation set, so 1.0 means "as familiar as a typical record".
    Calibrated,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarginPrediction {
    pub margins: MarginVector,
    pub confidences: Vec<f64>,
    pub overall: f64,
    pub kernel_evaluations: usize,
}

/// One SVR per input, mapping an error vector to that input's margin.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginPredictor {
    pub models: Vec<SvrModel>,
    pub mode: ConfidenceMode,
    /// Per-input confidence divisors used in calibrated mode.
    pub scales: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PredictorMeta {
    inputs: usize,
    mode: ConfidenceMode,
    scales: Vec<f64>,
}

impl MarginPredictor {
    /// Train one model per target column; models train in parallel.
    pub fn train(errors: &[Vec<f64>], deltas: &[Vec<f64>], params: &[SvrParams]) -> Result<Self> {
        check_dim("margin targets", errors.len(), deltas.len())?;
        let n = params.len();
        for d in deltas {
            check_dim("margin target row", n, d.len())?;
        }
        let models = (0..n)
            .into_par_iter()
            .map(|i| {
                let t: Vec<f64> = deltas.iter().map(|d| d[i]).collect();
                train_svr(errors, &t, &params[i])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            models,
            mode: ConfidenceMode::Raw,
            scales: vec![1.0; n],
        })
    }

    pub fn inputs(&self) -> usize {
        self.models.len()
    }

    /// Switch to calibrated confidence using `validation` error vectors.
    pub fn calibrate(&mut self, validation: &[Vec<f64>]) -> Result<()> {
        if validation.is_empty() {
            return Err(Error::config("calibration needs at least one validation record"));
        }
        self.scales = self
            .models
            .iter()
            .map(|m| {
                let mut c: Vec<f64> = validation.iter().map(|e| m.confidence(e)).collect();
                c.sort_by(f64::total_cmp);
                let mid = c.len() / 2;
                let med = if c.len() % 2 == 1 { c[mid] } else { 0.5 * (c[mid - 1] + c[mid]) };
                if med > 0.0 {
                    med
                } else {
                    1.0
                }
            })
            .collect();
        self.mode = ConfidenceMode::Calibrated;
        Ok(())
    }

    pub fn predict(&self, error: &[f64]) -> MarginPrediction {
        let mut margins = Vec::with_capacity(self.models.len());
        let mut confidences = Vec::with_capacity(self.models.len());
        let mut kernel_evaluations = 0;
        for (i, m) in self.models.iter().enumerate() {
            let (v, k) = m.predict_counted(error);
            margins.push(v);
            kernel_evaluations += k;
            let c = m.confidence(error);
            confidences.push(match self.mode {
                ConfidenceMode::Raw => c,
                ConfidenceMode::Calibrated => c / self.scales[i],
            });
        }
        let overall = overall_confidence(&confidences);
        MarginPrediction {
            margins: MarginVector(margins),
            confidences,
            overall,
            kernel_evaluations,
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (i, m) in self.models.iter().enumerate() {
            m.save(&dir.join(format!("input{i}.svr")))?;
        }
        let meta = PredictorMeta {
            inputs: self.models.len(),
            mode: self.mode,
            scales: self.scales.clone(),
        };
        let path = dir.join("predictor.json");
        let text = serde_json::to_string_pretty(&meta).expect("plain data serializes");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("predictor.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: PredictorMeta = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.clone(),
            line: e.line(),
            message: e.to_string(),
        })?;
        let models = (0..meta.inputs)
            .map(|i| SvrModel::load(&dir.join(format!("input{i}.svr"))))
            .collect::<Result<Vec<_>>>()?;
        check_dim("calibration scales", models.len(), meta.scales.len())?;
        Ok(Self {
            models,
            mode: meta.mode,
            scales: meta.scales,
        })
    }
}

/// Mean absolute validation error of `params` over `folds` contiguous folds.
pub fn cross_validate(inputs: &[Vec<f64>], targets: &[f64], params: &SvrParams, folds: usize) -> Result<f64> {
    let l = inputs.len();
    if folds < 2 || l < folds {
        return Err(Error::config(format!("cannot split {l} records into {folds} folds")));
    }
    let scores = (0..folds)
        .into_par_iter()
        .map(|f| {
            let (lo, hi) = (f * l / folds, (f + 1) * l / folds);
            let (mut xs, mut ts) = (Vec::new(), Vec::new());
            for i in (0..lo).chain(hi..l) {
                xs.push(inputs[i].clone());
                ts.push(targets[i]);
            }
            let m = train_svr(&xs, &ts, params)?;
            Ok((lo..hi).map(|i| (m.predict(&inputs[i]) - targets[i]).abs()).sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(scores.iter().sum::<f64>() / l as f64)
}

/// Grid point with the lowest cross-validated error.
pub fn grid_search(inputs: &[Vec<f64>], targets: &[f64], grid: &[SvrParams], folds: usize) -> Result<(SvrParams, f64)> {
    let mut best: Option<(SvrParams, f64)> = None;
    for p in grid {
        let s = cross_validate(inputs, targets, p, folds)?;
        if best.as_ref().is_none_or(|(_, b)| s < *b) {
            best = Some((p.clone(), s));
        }
    }
    best.ok_or_else(|| Error::config("empty hyper-parameter grid"))
}

/// Hyper-parameter grid sized to the data: `C` relative to the largest
/// target, the tube relative to the target spread, and the kernel width
/// relative to the median squared distance between neighbouring records.
pub fn scaled_grid(inputs: &[Vec<f64>], targets: &[f64]) -> Vec<SvrParams> {
    let mut t: Vec<f64> = targets.to_vec();
    t.sort_by(f64::total_cmp);
    let q = |f: f64| t.get(((t.len() as f64 - 1.0) * f).round() as usize).copied().unwrap_or(0.0);
    let top = q(1.0).abs().max(1e-9);
    let spread = (q(0.9) - q(0.1)).max(top * 1e-3);
    let mut d: Vec<f64> = inputs
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (a - b) * (a - b)).sum())
        .collect();
    d.sort_by(f64::total_cmp);
    let width = d.get(d.len() / 2).copied().unwrap_or(1.0).max(1e-12);
    let mut grid = Vec::new();
    for c in [0.1, 1.0, 10.0] {
        for lambda in [0.05, 0.2] {
            for gamma in [1.0, 10.0, 100.0] {
                grid.push(SvrParams::new(c * top, lambda * spread, gamma * width));
            }
        }
    }
    grid
}
