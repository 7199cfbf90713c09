//! CSV and JSON outputs of closed-loop runs and sweeps. Floats are written
//! with 17 significant digits so repeated runs produce identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::SolverKind;
use crate::config::ExperimentConfig;
use crate::dataset::write_manifest;
use crate::error::{Error, Result};
use crate::experiment::{CycleLog, RunMetrics, SweepParam, SweepPoint};
use crate::nmpc::ReferenceTrack;

fn f(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(f).unwrap_or_default()
}

struct Table {
    path: PathBuf,
    w: csv::Writer<fs::File>,
}

impl Table {
    fn create(path: PathBuf, header: &[&str]) -> Result<Self> {
        let w = csv::Writer::from_path(&path).map_err(|e| Error::io(&path, e.into()))?;
        let mut t = Self { path, w };
        t.row(header.iter().map(|s| s.to_string()))?;
        Ok(t)
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) -> Result<()> {
        let fields: Vec<String> = fields.into_iter().collect();
        self.w.write_record(&fields).map_err(|e| Error::io(&self.path, e.into()))
    }

    fn finish(mut self) -> Result<()> {
        self.w.flush().map_err(|e| Error::io(&self.path, e))
    }
}

const SUMMARY_HEADER: [&str; 15] = [
    "model",
    "solver",
    "seed",
    "cycles",
    "avg_cost",
    "convergence_rate",
    "avg_time",
    "avg_evaluations",
    "total_evaluations",
    "fallback_rate",
    "predicted_rate",
    "min_population",
    "max_population",
    "true_state_reads",
    "aborted",
];

fn summary_fields(m: &RunMetrics) -> Vec<String> {
    vec![
        m.model.clone(),
        m.solver.to_string(),
        m.seed.to_string(),
        m.log.len().to_string(),
        f(m.avg_cost),
        f(m.convergence_rate),
        f(m.avg_time),
        f(m.avg_evaluations),
        m.total_evaluations.to_string(),
        f(m.fallback_rate),
        f(m.predicted_rate),
        m.min_population.to_string(),
        m.max_population.to_string(),
        m.true_state_reads.to_string(),
        m.aborted.clone().unwrap_or_default(),
    ]
}

#[derive(Serialize)]
struct RunManifest<'a> {
    generator: &'static str,
    version: &'static str,
    config: &'a ExperimentConfig,
    seeds: Vec<u64>,
    runs: &'a [RunMetrics],
}

/// Write `summary.csv`, `cycles.csv`, `pc_histogram.csv`, and
/// `manifest.json` into `dir`.
pub fn emit_reports(runs: &[RunMetrics], cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut summary = Table::create(dir.join("summary.csv"), &SUMMARY_HEADER)?;
    for m in runs {
        summary.row(summary_fields(m))?;
    }
    summary.finish()?;

    let mut cycles = Table::create(
        dir.join("cycles.csv"),
        &[
            "solver",
            "seed",
            "cycle",
            "cost",
            "converged",
            "used_fallback",
            "population",
            "generations",
            "evaluations",
            "kernel_evaluations",
            "time",
            "margin_ratio",
            "confidence",
            "predicted_margin",
            "tracking_error",
        ],
    )?;
    for m in runs {
        for l in &m.log {
            cycles.row([
                m.solver.to_string(),
                m.seed.to_string(),
                l.cycle.to_string(),
                f(l.cost),
                l.converged.to_string(),
                l.used_fallback.to_string(),
                l.population.to_string(),
                l.generations.to_string(),
                l.evaluations.to_string(),
                l.kernel_evaluations.to_string(),
                f(l.time),
                f(l.margin_ratio),
                opt(l.confidence),
                l.predicted_margin.to_string(),
                f(l.tracking_error),
            ])?;
        }
    }
    cycles.finish()?;

    let mut hist = Table::create(dir.join("pc_histogram.csv"), &["solver", "seed", "bin", "lower", "upper", "count"])?;
    for m in runs {
        let h = &m.population_histogram;
        for (i, count) in h.counts.iter().enumerate() {
            hist.row([
                m.solver.to_string(),
                m.seed.to_string(),
                i.to_string(),
                f(h.edges[i]),
                f(h.edges[i + 1]),
                count.to_string(),
            ])?;
        }
    }
    hist.finish()?;

    write_manifest(
        &RunManifest {
            generator: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            config: cfg,
            seeds: runs.iter().map(|m| m.seed).collect(),
            runs,
        },
        &dir.join("manifest.json"),
    )
}

/// Write `sweep.csv` (one row per grid value and seed) and `manifest.json`.
pub fn emit_sweep(param: SweepParam, points: &[SweepPoint], cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut header = vec!["parameter", "value"];
    header.extend(SUMMARY_HEADER);
    header.push("error");
    let mut t = Table::create(dir.join("sweep.csv"), &header)?;
    let mut all = Vec::new();
    for p in points {
        match &p.runs {
            Ok(runs) => {
                for m in runs {
                    let mut row = vec![param.to_string(), f(p.value)];
                    row.extend(summary_fields(m));
                    row.push(String::new());
                    t.row(row)?;
                    all.push(m.clone());
                }
            }
            Err(e) => {
                let mut row = vec![param.to_string(), f(p.value)];
                row.extend(std::iter::repeat_n(String::new(), SUMMARY_HEADER.len()));
                row.push(e.clone());
                t.row(row)?;
            }
        }
    }
    t.finish()?;
    #[derive(Serialize)]
    struct SweepManifest<'a> {
        parameter: SweepParam,
        grid: Vec<f64>,
        config: &'a ExperimentConfig,
        runs: &'a [RunMetrics],
    }
    write_manifest(
        &SweepManifest {
            parameter: param,
            grid: points.iter().map(|p| p.value).collect(),
            config: cfg,
            runs: &all,
        },
        &dir.join("manifest.json"),
    )
}

#[derive(Deserialize)]
struct CycleRow {
    solver: SolverKind,
    seed: u64,
    cycle: usize,
    cost: f64,
    converged: bool,
    used_fallback: bool,
    population: usize,
    generations: usize,
    evaluations: usize,
    kernel_evaluations: usize,
    time: f64,
    margin_ratio: f64,
    confidence: Option<f64>,
    predicted_margin: bool,
    tracking_error: f64,
}

/// Per-cycle log of one (solver, seed) run as read back from `cycles.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct LoggedRun {
    pub solver: SolverKind,
    pub seed: u64,
    pub log: Vec<CycleLog>,
}

/// Read a `cycles.csv` written by [`emit_reports`], grouping rows by run in
/// file order.
pub fn read_cycles(path: &Path) -> Result<Vec<LoggedRun>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let mut runs: Vec<LoggedRun> = Vec::new();
    for (i, row) in r.deserialize::<CycleRow>().enumerate() {
        let row = row.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            message: e.to_string(),
        })?;
        let entry = CycleLog {
            cycle: row.cycle,
            cost: row.cost,
            converged: row.converged,
            used_fallback: row.used_fallback,
            population: row.population,
            generations: row.generations,
            evaluations: row.evaluations,
            kernel_evaluations: row.kernel_evaluations,
            time: row.time,
            margin_ratio: row.margin_ratio,
            confidence: row.confidence,
            predicted_margin: row.predicted_margin,
            tracking_error: row.tracking_error,
        };
        match runs.last_mut() {
            Some(last) if last.solver == row.solver && last.seed == row.seed => last.log.push(entry),
            _ => runs.push(LoggedRun {
                solver: row.solver,
                seed: row.seed,
                log: vec![entry],
            }),
        }
    }
    Ok(runs)
}

/// Write a reference track as `cycle,r1..rm,v1..vn`; the input columns of
/// the final row are empty.
pub fn write_references(refs: &ReferenceTrack, path: &Path) -> Result<()> {
    let m = refs.states.first().map_or(0, |s| s.0.len());
    let n = refs.inputs.first().map_or(0, |u| u.0.len());
    let mut header = vec!["cycle".to_string()];
    header.extend((1..=m).map(|i| format!("r{i}")));
    header.extend((1..=n).map(|i| format!("v{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::create(path.to_path_buf(), &header)?;
    for (k, s) in refs.states.iter().enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(s.0.iter().map(|v| f(*v)));
        match refs.inputs.get(k) {
            Some(u) => row.extend(u.0.iter().map(|v| f(*v))),
            None => row.extend(std::iter::repeat_n(String::new(), n)),
        }
        t.row(row)?;
    }
    t.finish()
}
