//! Closed-loop runs: a noisy plant and a controller that only exchange
//! messages, per-cycle logs, aggregate metrics, and parameter sweeps.

use std::cell::Cell;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{de_solve, mg_solve, og_solve, pso_solve, SolverKind};
use crate::bsm::{grid_search, population_size, scaled_grid, select_margin, BsmConfig, ConfidenceMode, MarginPredictor};
use crate::config::{ClockMode, ExperimentConfig, LearnerConfig};
use crate::dataset::CycleRecord;
use crate::error::{Error, Result};
use crate::ga::{solve_cycle, Clock, CycleOutcome, VirtualClock, WallClock};
use crate::nmpc::{error_vector, CycleProblem, HorizonSolution, MarginVector, ReferenceTrack, TerminalSet};
use crate::plant::{perturb_input, perturb_measurement, step, InputVector, ModelSpec, NoiseConfig, StateVector};
use crate::reference::generate_references;
use crate::rng::{stream, Stream};

/// Simulated plant. Holds the true state; anything outside the harness sees
/// only noisy measurements.
pub struct Plant {
    spec: ModelSpec,
    noise: NoiseConfig,
    seed: u64,
    state: StateVector,
    true_reads: Cell<usize>,
}

impl Plant {
    pub fn new(spec: ModelSpec, noise: NoiseConfig, seed: u64, initial: StateVector) -> Self {
        Self {
            spec,
            noise,
            seed,
            state: initial,
            true_reads: Cell::new(0),
        }
    }

    /// Noisy measurement for cycle `c`.
    pub fn measure(&self, c: usize) -> Result<StateVector> {
        let mut rng = stream(self.seed, Stream::Plant, 2 * c as u64 + 1);
        perturb_measurement(&self.state, &self.spec, &self.noise, &mut rng)
    }

    /// Apply `u` (with actuator noise) over cycle `c`.
    pub fn actuate(&mut self, c: usize, u: &InputVector) -> Result<()> {
        let mut rng = stream(self.seed, Stream::Plant, 2 * c as u64);
        let delivered = perturb_input(u, &self.spec, &self.noise, &mut rng)?;
        self.state = step(&self.spec, &self.state, &delivered)?;
        Ok(())
    }

    /// True state, for harness bookkeeping only; every call is counted.
    pub fn true_state(&self) -> &StateVector {
        self.true_reads.set(self.true_reads.get() + 1);
        &self.state
    }

    pub fn true_state_reads(&self) -> usize {
        self.true_reads.get()
    }
}

/// What the plant side sends each cycle.
#[derive(Clone, Debug)]
pub struct ControlRequest {
    pub cycle: usize,
    pub measured: StateVector,
    /// `r_c .. r_{c+h}` and `v_c .. v_{c+h-1}`.
    pub window: ReferenceTrack,
}

/// What the controller returns, with its bookkeeping for the log.
#[derive(Clone, Debug)]
pub struct ControlReply {
    pub input: InputVector,
    pub outcome: CycleOutcome,
    /// Largest margin used, relative to the physical margin.
    pub margin_ratio: f64,
    pub confidence: Option<f64>,
    pub predicted: bool,
    pub kernel_evaluations: usize,
}

/// One of the five solvers wrapped with the state it carries between cycles.
pub struct Controller<'a> {
    spec: ModelSpec,
    cfg: &'a ExperimentConfig,
    bsm: BsmConfig,
    predictor: Option<&'a MarginPredictor>,
    seed: u64,
    clock: Box<dyn Clock + Send + 'a>,
    prev: Option<HorizonSolution>,
    prev_applied: Option<Vec<f64>>,
    prev_ranked: Vec<HorizonSolution>,
    /// Model prediction of the current state from the previous measurement.
    expected: Option<StateVector>,
    costs: [Option<f64>; 2],
}

impl<'a> Controller<'a> {
    pub fn new(spec: ModelSpec, cfg: &'a ExperimentConfig, predictor: Option<&'a MarginPredictor>, seed: u64) -> Result<Self> {
        if cfg.solver == SolverKind::Proposed {
            match predictor {
                None => return Err(Error::Setup("the proposed solver needs a trained margin predictor".into())),
                Some(p) if p.inputs() != spec.n => {
                    return Err(Error::Setup(format!(
                        "margin predictor has {} inputs, model has {}",
                        p.inputs(),
                        spec.n
                    )))
                }
                Some(_) => {}
            }
        }
        let clock: Box<dyn Clock + Send> = match cfg.clock {
            ClockMode::Wall => Box::new(WallClock::default()),
            ClockMode::Virtual { seconds_per_evaluation } => Box::new(VirtualClock::new(seconds_per_evaluation)),
        };
        Ok(Self {
            bsm: cfg.bsm_config(&spec),
            spec,
            cfg,
            predictor,
            seed,
            clock,
            prev: None,
            prev_applied: None,
            prev_ranked: Vec::new(),
            expected: None,
            costs: [None, None],
        })
    }

    pub fn control(&mut self, req: &ControlRequest) -> Result<ControlReply> {
        let spec = &self.spec;
        let (n, h) = (spec.n, spec.horizon);
        let c = req.cycle;
        let prev_applied = self.prev_applied.clone().unwrap_or_else(|| req.window.inputs[0].0.clone());
        let problem = CycleProblem::windowed(spec, &req.measured, &req.window, c, Some(&prev_applied), TerminalSet::unbounded(spec.m))?;
        let warm = match &self.prev {
            Some(p) => p.shifted(n),
            None => HorizonSolution::from_steps(&req.window.inputs[..h]),
        };
        let mut rng = stream(self.seed, Stream::Controller, c as u64);
        let beta = MarginVector::physical(spec);
        let mut reply_extra = (1.0, None, false, 0);
        let clock = self.clock.as_mut();
        let outcome = match self.cfg.solver {
            SolverKind::Og => og_solve(&problem, &warm, &self.cfg.ga, clock, &mut rng)?,
            SolverKind::Mg => mg_solve(&problem, &warm, &self.prev_ranked, &self.cfg.ga, clock, &mut rng)?,
            SolverKind::Pso => pso_solve(&problem, &warm, &self.cfg.ga, &self.cfg.pso, clock, &mut rng)?,
            SolverKind::De => de_solve(&problem, &warm, &self.cfg.ga, &self.cfg.de, clock, &mut rng)?,
            SolverKind::Proposed => {
                let predictor = self.predictor.expect("checked at construction");
                let psi = match &self.expected {
                    Some(expected) => {
                        let e = error_vector(&req.measured, expected, &spec.q)?;
                        let pred = predictor.predict(&e);
                        let psi = select_margin(&pred.margins, pred.overall, self.costs[0], self.costs[1], &self.bsm);
                        let used = psi != beta;
                        reply_extra = (0.0, Some(pred.overall), used, pred.kernel_evaluations);
                        psi
                    }
                    None => beta.clone(),
                };
                reply_extra.0 = psi.0.iter().zip(&beta.0).map(|(p, b)| p / b).fold(0.0, f64::max);
                let p = population_size(&psi, &self.bsm);
                solve_cycle(&problem, &psi, p, &warm, &self.cfg.ga, clock, &mut rng)?
            }
        };
        let input = outcome.applied_input.clone();
        // A model failure here only costs the next cycle its prediction.
        self.expected = step(spec, &req.measured, &input).ok();
        self.costs = [outcome.best.cost, self.costs[0]];
        self.prev_applied = Some(input.0.clone());
        self.prev = Some(outcome.best.clone());
        self.prev_ranked = outcome.ranked.clone();
        let (margin_ratio, confidence, predicted, kernel_evaluations) = reply_extra;
        Ok(ControlReply {
            input,
            outcome,
            margin_ratio,
            confidence,
            predicted,
            kernel_evaluations,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleLog {
    pub cycle: usize,
    /// Best cost of the cycle (the fallback's cost when it was used).
    pub cost: f64,
    pub converged: bool,
    pub used_fallback: bool,
    pub population: usize,
    pub generations: usize,
    pub evaluations: usize,
    pub kernel_evaluations: usize,
    /// Search time in seconds as measured by the run's clock.
    pub time: f64,
    pub margin_ratio: f64,
    pub confidence: Option<f64>,
    pub predicted_margin: bool,
    /// Weighted squared distance between the true state and the reference
    /// after the input was applied.
    pub tracking_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` ascending edges; the last bin is closed.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let bins = bins.max(1);
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            let i = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
            counts[i] += 1;
        }
        Self { edges, counts }
    }

    pub fn occupied(&self) -> usize {
        self.counts.iter().filter(|c| **c > 0).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub model: String,
    pub solver: SolverKind,
    pub seed: u64,
    /// Mean best cost over cycles.
    pub avg_cost: f64,
    pub convergence_rate: f64,
    /// Mean search time per cycle, seconds.
    pub avg_time: f64,
    pub avg_evaluations: f64,
    pub total_evaluations: usize,
    pub fallback_rate: f64,
    pub predicted_rate: f64,
    pub min_population: usize,
    pub max_population: usize,
    pub population_histogram: Histogram,
    /// Set when the plant failed before all cycles ran.
    pub aborted: Option<String>,
    pub true_state_reads: usize,
    #[serde(skip)]
    pub log: Vec<CycleLog>,
}

/// Aggregate a per-cycle log. Population sizes are binned into ten equal
/// bins over `[xi, nu]`.
pub fn compute_metrics(log: &[CycleLog], xi: usize, nu: usize) -> Result<RunMetrics> {
    if log.is_empty() {
        return Err(Error::config("cannot summarize an empty cycle log"));
    }
    let len = log.len() as f64;
    let mean = |f: &dyn Fn(&CycleLog) -> f64| log.iter().map(f).sum::<f64>() / len;
    let pops: Vec<f64> = log.iter().map(|l| l.population as f64).collect();
    Ok(RunMetrics {
        model: String::new(),
        solver: SolverKind::Og,
        seed: 0,
        avg_cost: mean(&|l| l.cost),
        convergence_rate: mean(&|l| f64::from(u8::from(l.converged))),
        avg_time: mean(&|l| l.time),
        avg_evaluations: mean(&|l| l.evaluations as f64),
        total_evaluations: log.iter().map(|l| l.evaluations).sum(),
        fallback_rate: mean(&|l| f64::from(u8::from(l.used_fallback))),
        predicted_rate: mean(&|l| f64::from(u8::from(l.predicted_margin))),
        min_population: log.iter().map(|l| l.population).min().unwrap_or(0),
        max_population: log.iter().map(|l| l.population).max().unwrap_or(0),
        population_histogram: Histogram::new(&pops, xi as f64, nu as f64, 10),
        aborted: None,
        true_state_reads: 0,
        log: log.to_vec(),
    })
}

fn window(refs: &ReferenceTrack, c: usize, h: usize) -> ReferenceTrack {
    ReferenceTrack {
        states: refs.states[c..=c + h].to_vec(),
        inputs: refs.inputs[c..c + h].to_vec(),
    }
}

/// Reference track and measurement ranges shared by every run with `seed`.
pub fn prepare_run(cfg: &ExperimentConfig, seed: u64) -> Result<(ModelSpec, ReferenceTrack)> {
    let mut spec = cfg.spec()?;
    let mut ref_cfg = cfg.reference.clone();
    ref_cfg.cycles = cfg.cycles.max(spec.horizon + 2);
    let mut rng = stream(seed, Stream::Reference, 0);
    let refs = generate_references(&spec, &ref_cfg, &mut rng)?;
    spec.fit_unbounded_ranges(&refs.states, cfg.unbounded_range_factor);
    Ok((spec, refs))
}

/// One closed-loop run of `cfg.solver` with `seed`.
pub fn run_closed_loop(cfg: &ExperimentConfig, seed: u64, predictor: Option<&MarginPredictor>) -> Result<RunMetrics> {
    cfg.validate()?;
    let (spec, refs) = prepare_run(cfg, seed)?;
    let h = spec.horizon;
    let mut plant = Plant::new(spec.clone(), cfg.noise, seed, refs.states[0].clone());
    let mut controller = Controller::new(spec.clone(), cfg, predictor, seed)?;
    let mut log = Vec::with_capacity(cfg.cycles);
    let mut aborted = None;
    for c in 0..cfg.cycles {
        let measured = if c == 0 { refs.states[0].clone() } else { plant.measure(c)? };
        let req = ControlRequest {
            cycle: c,
            measured,
            window: window(&refs, c, h),
        };
        let reply = match controller.control(&req) {
            Ok(r) => r,
            Err(e @ Error::Setup(_)) => return Err(e),
            Err(e) => {
                aborted = Some(format!("cycle {c}: {e}"));
                break;
            }
        };
        if let Err(e) = plant.actuate(c, &reply.input) {
            aborted = Some(format!("cycle {c}: {e}"));
            break;
        }
        let truth = plant.true_state();
        let tracking_error = error_vector(truth, &refs.states[c + 1], &spec.q)?.iter().sum();
        let o = &reply.outcome;
        log.push(CycleLog {
            cycle: c,
            cost: o.best.cost_or_inf(),
            converged: o.converged,
            used_fallback: o.used_fallback,
            population: o.population_size_used,
            generations: o.generations_run,
            evaluations: o.evaluations,
            kernel_evaluations: reply.kernel_evaluations,
            time: o.wall_time,
            margin_ratio: reply.margin_ratio,
            confidence: reply.confidence,
            predicted_margin: reply.predicted,
            tracking_error,
        });
    }
    if log.is_empty() {
        return Err(Error::Setup(aborted.unwrap_or_else(|| "no cycle completed".into())));
    }
    let mut m = compute_metrics(&log, cfg.ga.xi, cfg.ga.nu)?;
    m.model = cfg.model.to_string();
    m.solver = cfg.solver;
    m.seed = seed;
    m.aborted = aborted;
    m.true_state_reads = plant.true_state_reads();
    Ok(m)
}

/// Every seed of `cfg`, in parallel, in seed order.
pub fn run_seeds(cfg: &ExperimentConfig, predictor: Option<&MarginPredictor>) -> Result<Vec<RunMetrics>> {
    cfg.seeds.par_iter().map(|&s| run_closed_loop(cfg, s, predictor)).collect()
}

/// Load the predictor named in `cfg` when the solver needs one.
pub fn load_predictor(cfg: &ExperimentConfig) -> Result<Option<MarginPredictor>> {
    if cfg.solver != SolverKind::Proposed {
        return Ok(None);
    }
    let dir = cfg
        .predictor_path
        .as_ref()
        .ok_or_else(|| Error::Setup("the proposed solver needs predictor_path".into()))?;
    if !dir.join("predictor.json").is_file() {
        return Err(Error::Setup(format!("no trained predictor in {}", dir.display())));
    }
    MarginPredictor::load(dir).map(Some)
}

/// Train a predictor on `records`. In calibrated mode a shuffled share of
/// the records is held out for confidence calibration.
pub fn train_predictor(records: &[CycleRecord], learner: &LearnerConfig, seed: u64) -> Result<MarginPredictor> {
    let mut order: Vec<usize> = (0..records.len()).collect();
    let held = match learner.confidence {
        ConfidenceMode::Raw => 0,
        ConfidenceMode::Calibrated => {
            order.shuffle(&mut stream(seed, Stream::Split, 0));
            ((records.len() as f64 * learner.validation_fraction).round() as usize).max(1)
        }
    };
    if records.len() < held + 2 {
        return Err(Error::config(format!("{} records are too few to train on", records.len())));
    }
    let (val, train) = order.split_at(held);
    let errors: Vec<Vec<f64>> = train.iter().map(|&i| records[i].error.clone()).collect();
    let deltas: Vec<Vec<f64>> = train.iter().map(|&i| records[i].deltas.clone()).collect();
    let mut predictor = MarginPredictor::train(&errors, &deltas, &learner.svr)?;
    if !val.is_empty() {
        let validation: Vec<Vec<f64>> = val.iter().map(|&i| records[i].error.clone()).collect();
        predictor.calibrate(&validation)?;
    }
    Ok(predictor)
}

/// Copy of `learner` whose per-input SVR settings are the cross-validated
/// best of [`scaled_grid`] on `records`.
pub fn tune_learner(records: &[CycleRecord], learner: &LearnerConfig) -> Result<LearnerConfig> {
    let inputs: Vec<Vec<f64>> = records.iter().map(|r| r.error.clone()).collect();
    let mut out = learner.clone();
    for (i, slot) in out.svr.iter_mut().enumerate() {
        let targets: Vec<f64> = records.iter().map(|r| r.deltas[i]).collect();
        let (best, _) = grid_search(&inputs, &targets, &scaled_grid(&inputs, &targets), learner.folds)?;
        *slot = best;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Epsilon,
    Eta,
    Rho,
    Theta,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::Epsilon => "epsilon",
            SweepParam::Eta => "eta",
            SweepParam::Rho => "rho",
            SweepParam::Theta => "theta",
        }
    }

    pub fn apply(self, cfg: &mut ExperimentConfig, value: f64) {
        match self {
            SweepParam::Epsilon => cfg.ga.epsilon = value,
            SweepParam::Eta => cfg.learner.eta = value,
            SweepParam::Rho => cfg.noise.rho = value,
            SweepParam::Theta => cfg.noise.theta = value,
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SweepParam::Epsilon, SweepParam::Eta, SweepParam::Rho, SweepParam::Theta]
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(format!("unknown sweep parameter '{s}'")))
    }
}

#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub value: f64,
    /// One entry per seed, or the error that stopped this grid point.
    pub runs: std::result::Result<Vec<RunMetrics>, String>,
}

/// Run every seed of `base` at each grid value of `param`.
pub fn sweep(param: SweepParam, grid: &[f64], base: &ExperimentConfig, predictor: Option<&MarginPredictor>) -> Result<Vec<SweepPoint>> {
    if grid.is_empty() {
        return Err(Error::config("sweep grid is empty"));
    }
    Ok(grid
        .iter()
        .map(|&value| {
            let mut cfg = base.clone();
            param.apply(&mut cfg, value);
            SweepPoint {
                value,
                runs: run_seeds(&cfg, predictor).map_err(|e| e.to_string()),
            }
        })
        .collect())
}

/// Median of a non-empty slice.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}
