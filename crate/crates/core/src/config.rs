//! Experiment configuration with per-model defaults and TOML overrides.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{DeConfig, PsoConfig, SolverKind};
use crate::bsm::{default_eta, default_svr_params, BsmConfig, ConfidenceMode};
use crate::dataset::DatasetConfig;
use crate::error::{Error, Result};
use crate::ga::GaConfig;
use crate::plant::{ModelKind, ModelSpec, NoiseConfig};
use crate::reference::ReferenceGenConfig;
use crate::svr::SvrParams;

/// How the per-cycle search budget is timed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClockMode {
    Wall,
    /// Every cost evaluation advances time by a fixed amount.
    Virtual { seconds_per_evaluation: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerConfig {
    /// Confidence threshold.
    pub eta: f64,
    pub confidence: ConfidenceMode,
    /// Share of the dataset held out for confidence calibration.
    pub validation_fraction: f64,
    /// One entry per input.
    pub svr: Vec<SvrParams>,
    /// Replace `svr` by a cross-validated search over a data-scaled grid.
    pub tune: bool,
    pub folds: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self::for_model(ModelKind::Sfjr)
    }
}

impl LearnerConfig {
    pub fn for_model(kind: ModelKind) -> Self {
        Self {
            eta: default_eta(kind),
            confidence: ConfidenceMode::Raw,
            validation_fraction: 0.1,
            svr: default_svr_params(kind),
            tune: false,
            folds: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub solver: SolverKind,
    /// Control cycles per run.
    pub cycles: usize,
    pub seeds: Vec<u64>,
    /// Noise injected by the plant during closed-loop runs.
    pub noise: NoiseConfig,
    /// Noise used when generating training data.
    pub training_noise: NoiseConfig,
    pub ga: GaConfig,
    /// Settings of the offline search that produces margin targets.
    pub exhaustive: GaConfig,
    pub learner: LearnerConfig,
    pub pso: PsoConfig,
    pub de: DeConfig,
    pub clock: ClockMode,
    pub reference: ReferenceGenConfig,
    pub dataset: DatasetConfig,
    /// Seed of the training-data generator.
    pub dataset_seed: u64,
    /// Unbounded states use this multiple of their reference span as range.
    pub unbounded_range_factor: f64,
    /// Plant parameter overrides by name.
    pub params: BTreeMap<String, f64>,
    pub dataset_path: Option<PathBuf>,
    /// Directory of a trained margin predictor.
    pub predictor_path: Option<PathBuf>,
    pub out: PathBuf,
}

/// Run length in seconds used for the default cycle count.
fn run_seconds(kind: ModelKind) -> f64 {
    match kind {
        ModelKind::Sfjr => 160.0,
        ModelKind::Integrator => 10.0,
        _ => 100.0,
    }
}

/// Default plant noise in percent of each margin / range.
fn noise_percent(kind: ModelKind) -> (f64, f64) {
    match kind {
        ModelKind::Uav => (0.1, 0.05),
        ModelKind::Vehicle => (0.1, 0.15),
        ModelKind::Sfjr => (0.2, 0.15),
        ModelKind::Integrator => (1.0, 0.5),
    }
}

impl ExperimentConfig {
    pub fn for_model(kind: ModelKind) -> Self {
        let spec = ModelSpec::for_kind(kind);
        let (rho, theta) = noise_percent(kind);
        let noise = NoiseConfig {
            rho: rho / 100.0,
            theta: theta / 100.0,
            seed: 0,
        };
        let ga = GaConfig::for_model(kind);
        let cycles = (run_seconds(kind) / spec.ts).round() as usize;
        Self {
            model: kind,
            solver: SolverKind::Proposed,
            cycles,
            seeds: vec![1],
            noise,
            training_noise: noise,
            exhaustive: ga.exhaustive(),
            ga,
            learner: LearnerConfig::for_model(kind),
            pso: PsoConfig::default(),
            de: DeConfig::default(),
            clock: ClockMode::Wall,
            reference: ReferenceGenConfig {
                cycles,
                ..Default::default()
            },
            dataset: DatasetConfig::default(),
            dataset_seed: 0,
            unbounded_range_factor: 2.0,
            params: BTreeMap::new(),
            dataset_path: None,
            predictor_path: None,
            out: PathBuf::from("out"),
        }
    }

    /// Parse TOML text; keys not given keep the defaults of the named model.
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let parse_err = |e: toml::de::Error| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::Parse {
                path: origin.to_path_buf(),
                line,
                message: e.message().to_string(),
            }
        };
        let overrides: toml::Table = text.parse().map_err(parse_err)?;
        let kind = match overrides.get("model") {
            Some(toml::Value::String(s)) => s.parse()?,
            Some(_) => return Err(Error::config("model must be a string")),
            None => return Err(Error::config(format!("{}: missing 'model'", origin.display()))),
        };
        let mut merged = toml::Table::try_from(Self::for_model(kind)).expect("defaults serialize");
        merge(&mut merged, overrides);
        let cfg: Self = merged.try_into().map_err(|e: toml::de::Error| Error::Parse {
            path: origin.to_path_buf(),
            line: 0,
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.cycles == 0 {
            return Err(Error::config("cycles must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        self.noise.validate()?;
        self.training_noise.validate()?;
        self.ga.validate()?;
        self.exhaustive.validate()?;
        if let ClockMode::Virtual { seconds_per_evaluation } = self.clock {
            if !(seconds_per_evaluation >= 0.0 && seconds_per_evaluation.is_finite()) {
                return Err(Error::config("seconds_per_evaluation must be non-negative"));
            }
        }
        let n = ModelSpec::for_kind(self.model).n;
        if self.learner.svr.len() != n {
            return Err(Error::config(format!(
                "learner.svr needs one entry per input ({n}), got {}",
                self.learner.svr.len()
            )));
        }
        if self.learner.tune && self.learner.folds < 2 {
            return Err(Error::config("learner.folds must be at least 2"));
        }
        if !(0.0..1.0).contains(&self.learner.validation_fraction) {
            return Err(Error::config("validation_fraction must lie in [0, 1)"));
        }
        self.bsm_config(&self.spec()?).validate()
    }

    /// Model description with parameter overrides applied.
    pub fn spec(&self) -> Result<ModelSpec> {
        let mut spec = ModelSpec::for_kind(self.model);
        spec.params.apply(&self.params)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn bsm_config(&self, spec: &ModelSpec) -> BsmConfig {
        BsmConfig {
            eta: self.learner.eta,
            epsilon: self.ga.epsilon,
            beta: spec.physical_margins(),
            nu: self.ga.nu,
            xi: self.ga.xi,
        }
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
