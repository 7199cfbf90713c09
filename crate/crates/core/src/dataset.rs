//! Training data for the margin predictor: noisy closed-loop episodes
//! driven by an exhaustive genetic search, one record per cycle.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bsm::{bsm_from_solutions, Alignment};
use crate::error::{Error, Result};
use crate::ga::{refined_solve, GaConfig, VirtualClock};
use crate::nmpc::{error_vector, CycleProblem, HorizonSolution, MarginVector, ReferenceTrack, TerminalSet};
use crate::plant::{perturb_input, perturb_measurement, step, ModelSpec, NoiseConfig};
use crate::reference::{generate_references, ReferenceGenConfig};
use crate::rng::{derive_seed, stream, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub error: Vec<f64>,
    pub deltas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub episodes: usize,
    /// Cycles per episode; an episode also ends when the plant leaves its
    /// state bounds or the model fails.
    pub episode_cycles: usize,
    pub alignment: Alignment,
    /// An episode ends once any state leaves its bounds by more than this
    /// fraction of the bound span.
    pub bound_slack: f64,
    /// Extra searches around the incumbent at successively smaller margins.
    pub refine_stages: usize,
    /// Margin factor between consecutive refinement searches.
    pub refine_shrink: f64,
    /// Unbounded states use this multiple of each episode's reference span
    /// as range.
    pub range_factor: f64,
    pub reference: ReferenceGenConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            episodes: 250,
            episode_cycles: 200,
            alignment: Alignment::AbsoluteTime,
            bound_slack: 0.25,
            refine_stages: 2,
            refine_shrink: 0.1,
            range_factor: 2.0,
            reference: ReferenceGenConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub cycles: usize,
    pub records: usize,
    /// Cycles whose search found no admissible candidate.
    pub skipped: usize,
    /// Set when the plant left its bounds or the model failed.
    pub ended_early: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub records: Vec<CycleRecord>,
    pub episodes: Vec<EpisodeSummary>,
}

impl Dataset {
    pub fn skipped(&self) -> usize {
        self.episodes.iter().map(|e| e.skipped).sum()
    }
}

/// One episode along `refs`, starting on the reference with its inputs as
/// the previous solution.
pub fn build_dataset(
    spec: &ModelSpec,
    refs: &ReferenceTrack,
    noise: &NoiseConfig,
    exhaustive: &GaConfig,
    opts: &DatasetConfig,
    seed: u64,
    cycles: usize,
) -> Result<(Vec<CycleRecord>, EpisodeSummary)> {
    noise.validate()?;
    refs.validate(spec, cycles)?;
    let (m, n, h) = (spec.m, spec.n, spec.horizon);
    let beta = MarginVector::physical(spec);
    let mut summary = EpisodeSummary {
        cycles: 0,
        ..Default::default()
    };
    let mut records = Vec::new();

    let mut x_true = refs.states[0].clone();
    let mut measured = x_true.clone();
    let mut prev = HorizonSolution::from_steps(&refs.inputs[..h]);
    let mut prev_applied = refs.inputs[0].0.clone();
    let mut error = vec![0.0; m];
    let mut clock = VirtualClock::new(0.0);

    for c in 0..cycles {
        let problem = CycleProblem::new(spec, &measured, refs, c, Some(&prev_applied), TerminalSet::unbounded(m))?;
        let warm = if c == 0 { prev.clone() } else { prev.shifted(n) };
        let mut rng = stream(seed, Stream::Controller, c as u64);
        let out = match refined_solve(
            &problem,
            &beta,
            exhaustive.nu,
            &warm,
            exhaustive,
            opts.refine_stages,
            opts.refine_shrink,
            &mut clock,
            &mut rng,
        ) {
            Ok(o) => o,
            Err(e) => {
                summary.ended_early = Some(e.to_string());
                break;
            }
        };
        summary.cycles += 1;
        if out.used_fallback {
            summary.skipped += 1;
        } else if c > 0 {
            let d = bsm_from_solutions(&out.best, &prev, n, opts.alignment);
            records.push(CycleRecord {
                error: error.clone(),
                deltas: d.0,
            });
            summary.records += 1;
        }

        let u = out.applied_input.clone();
        let mut prng = stream(seed, Stream::Plant, c as u64);
        let next = perturb_input(&u, spec, noise, &mut prng).and_then(|un| step(spec, &x_true, &un));
        let expected = step(spec, &measured, &u);
        let (next, expected) = match (next, expected) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => {
                summary.ended_early = Some(e.to_string());
                break;
            }
        };
        let outside = (0..m).any(|j| {
            let slack = opts.bound_slack * (spec.x_max[j] - spec.x_min[j]);
            next[j] < spec.x_min[j] - slack || next[j] > spec.x_max[j] + slack
        });
        if outside {
            summary.ended_early = Some(format!("plant left its state bounds after cycle {c}"));
            break;
        }
        x_true = next;
        measured = perturb_measurement(&x_true, spec, noise, &mut prng)?;
        error = error_vector(&measured, &expected, &spec.q)?;
        prev = out.best;
        prev_applied = u.0;
    }
    Ok((records, summary))
}

/// Independent episodes, each on its own reference track, merged in
/// episode order.
pub fn generate_dataset(spec: &ModelSpec, noise: &NoiseConfig, exhaustive: &GaConfig, cfg: &DatasetConfig, seed: u64) -> Result<Dataset> {
    let parts = (0..cfg.episodes)
        .into_par_iter()
        .map(|e| {
            let mut ref_cfg = cfg.reference.clone();
            ref_cfg.cycles = cfg.episode_cycles;
            let mut rng = stream(seed, Stream::Reference, e as u64);
            let refs = generate_references(spec, &ref_cfg, &mut rng)?;
            let mut spec = spec.clone();
            spec.fit_unbounded_ranges(&refs.states, cfg.range_factor);
            let episode_seed = derive_seed(seed, Stream::Episode, e as u64);
            let (records, mut summary) = build_dataset(&spec, &refs, noise, exhaustive, cfg, episode_seed, cfg.episode_cycles)?;
            summary.episode = e;
            Ok((records, summary))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Dataset::default();
    for (r, s) in parts {
        out.records.extend(r);
        out.episodes.push(s);
    }
    Ok(out)
}

pub fn write_dataset(records: &[CycleRecord], m: usize, n: usize, path: &Path) -> Result<()> {
    let io = |e: std::io::Error| Error::io(path, e);
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let header: Vec<String> = (1..=m).map(|j| format!("e{j}")).chain((1..=n).map(|i| format!("d{i}"))).collect();
    w.write_record(&header).map_err(|e| io(e.into()))?;
    for r in records {
        if r.error.len() != m || r.deltas.len() != n {
            return Err(Error::Dimension {
                what: "dataset record",
                expected: m + n,
                got: r.error.len() + r.deltas.len(),
            });
        }
        w.write_record(r.error.iter().chain(&r.deltas).map(|v| format!("{v:.16e}")))
            .map_err(|e| io(e.into()))?;
    }
    w.flush().map_err(io)
}

/// Read a dataset, inferring `m` and `n` from the `e*` / `d*` header.
pub fn read_dataset(path: &Path) -> Result<(Vec<CycleRecord>, usize, usize)> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::io(path, e.into()))?;
    let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let m = header.iter().take_while(|h| h.starts_with('e')).count();
    let n = header.len() - m;
    let expected: Vec<String> = (1..=m).map(|j| format!("e{j}")).chain((1..=n).map(|i| format!("d{i}"))).collect();
    if m == 0 || n == 0 || header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(parse_err(1, "header must be e1..em followed by d1..dn".into()));
    }
    let mut records = Vec::new();
    for (k, row) in rdr.records().enumerate() {
        let line = k + 2;
        let row = row.map_err(|e| parse_err(line, e.to_string()))?;
        if row.len() != m + n {
            return Err(parse_err(line, format!("expected {} columns (m + n), found {}", m + n, row.len())));
        }
        let vals: Vec<f64> = row
            .iter()
            .map(|t| t.trim().parse::<f64>().map_err(|e| parse_err(line, format!("bad number '{t}': {e}"))))
            .collect::<Result<_>>()?;
        records.push(CycleRecord {
            error: vals[..m].to_vec(),
            deltas: vals[m..].to_vec(),
        });
    }
    Ok((records, m, n))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub model: String,
    pub seed: u64,
    pub noise: NoiseConfig,
    pub ga: GaConfig,
    pub dataset: DatasetConfig,
    pub cycles_run: usize,
    pub records_before_skips: usize,
    pub records: usize,
    pub skipped: usize,
    pub episodes_ended_early: usize,
}

impl DatasetManifest {
    pub fn new(spec: &ModelSpec, seed: u64, noise: &NoiseConfig, ga: &GaConfig, cfg: &DatasetConfig, data: &Dataset) -> Self {
        let skipped = data.skipped();
        Self {
            model: spec.kind.to_string(),
            seed,
            noise: *noise,
            ga: ga.clone(),
            dataset: cfg.clone(),
            cycles_run: data.episodes.iter().map(|e| e.cycles).sum(),
            records_before_skips: data.records.len() + skipped,
            records: data.records.len(),
            skipped,
            episodes_ended_early: data.episodes.iter().filter(|e| e.ended_early.is_some()).count(),
        }
    }
}

pub fn write_manifest<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("manifest serializes");
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).and_then(|_| f.write_all(b"\n")).map_err(|e| Error::io(path, e))
}
