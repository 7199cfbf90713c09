//! Per-cycle genetic search over horizon control sequences.

use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nmpc::{CycleProblem, Evaluation, Feasibility, HorizonSolution, MarginVector};
use crate::plant::{InputVector, ModelKind, ModelSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaConfig {
    /// Largest population.
    pub nu: usize,
    /// Smallest population.
    pub xi: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    /// Cost below which a cycle counts as converged and stops early.
    pub epsilon: f64,
    /// Fraction of the sampling time available to the search.
    pub upsilon: f64,
    pub tournament_size: usize,
    /// When false the search always runs every generation.
    pub time_limited: bool,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self::for_model(ModelKind::Sfjr)
    }
}

impl GaConfig {
    pub fn for_model(kind: ModelKind) -> Self {
        let base = Self {
            nu: 100,
            xi: 10,
            generations: 3,
            crossover_rate: 0.4,
            mutation_rate: 0.05,
            epsilon: 0.4,
            upsilon: 0.95,
            tournament_size: 3,
            time_limited: true,
        };
        match kind {
            ModelKind::Uav => base,
            ModelKind::Vehicle => Self {
                nu: 200,
                xi: 20,
                generations: 5,
                crossover_rate: 0.5,
                mutation_rate: 0.1,
                epsilon: 2.0,
                ..base
            },
            ModelKind::Sfjr => Self {
                nu: 200,
                xi: 20,
                generations: 4,
                crossover_rate: 0.4,
                mutation_rate: 0.1,
                epsilon: 0.5,
                ..base
            },
            ModelKind::Integrator => Self {
                nu: 50,
                xi: 5,
                generations: 5,
                epsilon: 0.0,
                ..base
            },
        }
    }

    /// Large population, many generations, no early exit, no time limit.
    pub fn exhaustive(&self) -> Self {
        Self {
            nu: self.nu * 4,
            generations: 20,
            epsilon: f64::NEG_INFINITY,
            time_limited: false,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.xi == 0 || self.xi > self.nu {
            return Err(Error::config(format!("need 0 < xi <= nu, got xi={} nu={}", self.xi, self.nu)));
        }
        if self.generations == 0 {
            return Err(Error::config("generations must be at least 1"));
        }
        if !(self.upsilon > 0.0 && self.upsilon <= 1.0) {
            return Err(Error::config("upsilon must lie in (0, 1]"));
        }
        for (name, r) in [("crossover_rate", self.crossover_rate), ("mutation_rate", self.mutation_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::config(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.tournament_size == 0 {
            return Err(Error::config("tournament_size must be at least 1"));
        }
        if self.epsilon.is_nan() {
            return Err(Error::config("epsilon must not be NaN"));
        }
        Ok(())
    }

    pub fn budget(&self, ts: f64) -> f64 {
        if self.time_limited {
            self.upsilon * ts
        } else {
            f64::INFINITY
        }
    }
}

/// Time source for the per-cycle search budget.
pub trait Clock {
    /// Restart timing for a new cycle.
    fn reset(&mut self);
    /// Seconds since the last reset.
    fn elapsed(&self) -> f64;
    /// Record that `evaluations` cost evaluations were just performed.
    fn charge(&mut self, _evaluations: usize) {}
}

#[derive(Clone, Debug)]
pub struct WallClock {
    start: Instant,
}

impl Default for WallClock {
    fn default() -> Self {
        Self { start: Instant::now() }
    }
}

impl Clock for WallClock {
    fn reset(&mut self) {
        self.start = Instant::now();
    }

    fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}

/// Deterministic clock advancing a fixed amount per cost evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct VirtualClock {
    pub seconds_per_evaluation: f64,
    elapsed: f64,
}

impl VirtualClock {
    pub fn new(seconds_per_evaluation: f64) -> Self {
        Self {
            seconds_per_evaluation,
            elapsed: 0.0,
        }
    }
}

impl Clock for VirtualClock {
    fn reset(&mut self) {
        self.elapsed = 0.0;
    }

    fn elapsed(&self) -> f64 {
        self.elapsed
    }

    fn charge(&mut self, evaluations: usize) {
        self.elapsed += evaluations as f64 * self.seconds_per_evaluation;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleOutcome {
    pub best: HorizonSolution,
    pub applied_input: InputVector,
    pub converged: bool,
    pub used_fallback: bool,
    pub generations_run: usize,
    /// Clock time spent in the search, seconds.
    pub wall_time: f64,
    pub population_size_used: usize,
    pub evaluations: usize,
    /// Admissible members of the last evaluated population, best first.
    #[serde(skip)]
    pub ranked: Vec<HorizonSolution>,
}

/// Bookkeeping shared by every population-based solver: evaluation,
/// incumbent tracking, the cost threshold, the time budget, and fallback.
pub(crate) struct Search<'p, 'a, C: Clock + ?Sized> {
    pub problem: &'p CycleProblem<'a>,
    clock: &'p mut C,
    budget: f64,
    epsilon: f64,
    best: Option<(Vec<f64>, f64)>,
    pub evaluations: usize,
    pub generations_run: usize,
    pub converged: bool,
}

impl<'p, 'a, C: Clock + ?Sized> Search<'p, 'a, C> {
    pub fn new(problem: &'p CycleProblem<'a>, cfg: &GaConfig, clock: &'p mut C) -> Self {
        clock.reset();
        Self {
            problem,
            budget: cfg.budget(problem.spec.ts),
            epsilon: cfg.epsilon,
            clock,
            best: None,
            evaluations: 0,
            generations_run: 0,
            converged: false,
        }
    }

    /// Whether another generation may start.
    pub fn may_continue(&self) -> bool {
        !self.converged && (self.generations_run == 0 || self.clock.elapsed() <= self.budget)
    }

    pub fn evaluate(&mut self, population: &[Vec<f64>]) -> Vec<Evaluation> {
        let problem = self.problem;
        let evals: Vec<Evaluation> = population.par_iter().map(|g| problem.evaluate(g)).collect();
        self.evaluations += population.len();
        self.clock.charge(population.len());
        for (genes, ev) in population.iter().zip(&evals) {
            self.offer(genes, ev);
        }
        evals
    }

    fn offer(&mut self, genes: &[f64], ev: &Evaluation) {
        if ev.admissible() && self.best.as_ref().is_none_or(|(_, c)| ev.cost < *c) {
            self.best = Some((genes.to_vec(), ev.cost));
        }
    }

    /// Close a generation; returns true if the incumbent meets the threshold.
    pub fn end_generation(&mut self) -> bool {
        self.generations_run += 1;
        if let Some((_, c)) = &self.best {
            if *c < self.epsilon {
                self.converged = true;
            }
        }
        self.converged
    }

    pub fn best(&self) -> Option<(&[f64], f64)> {
        self.best.as_ref().map(|(g, c)| (g.as_slice(), *c))
    }

    pub fn finish(
        self,
        warm_start: &HorizonSolution,
        population_size: usize,
        ranked: Vec<HorizonSolution>,
    ) -> Result<CycleOutcome> {
        let n = self.problem.spec.n;
        let wall_time = self.clock.elapsed();
        let (best, used_fallback) = match self.best {
            Some((genes, cost)) => (
                HorizonSolution {
                    genes,
                    cost: Some(cost),
                    feasible: Feasibility::Yes,
                },
                false,
            ),
            None => {
                let mut genes = warm_start.genes.clone();
                self.problem.repair(&mut genes);
                let ev = self.problem.evaluate(&genes);
                if self.problem.cycle == 0 && !ev.admissible() {
                    return Err(Error::Setup(
                        "no admissible candidate at cycle 0 and the warm start is not admissible either".into(),
                    ));
                }
                let feasible = if ev.admissible() { Feasibility::Yes } else { Feasibility::No };
                (
                    HorizonSolution {
                        genes,
                        cost: Some(ev.cost),
                        feasible,
                    },
                    true,
                )
            }
        };
        let applied_input = InputVector(best.genes[..n].to_vec());
        Ok(CycleOutcome {
            applied_input,
            converged: self.converged,
            used_fallback,
            generations_run: self.generations_run,
            wall_time,
            population_size_used: population_size,
            evaluations: self.evaluations,
            ranked,
            best,
        })
    }
}

/// Admissible members of `population`, best first (stable on ties).
pub(crate) fn rank(population: &[Vec<f64>], evals: &[Evaluation]) -> Vec<HorizonSolution> {
    let mut idx: Vec<usize> = (0..population.len()).filter(|&i| evals[i].admissible()).collect();
    idx.sort_by(|&a, &b| evals[a].cost.total_cmp(&evals[b].cost));
    idx.into_iter()
        .map(|i| HorizonSolution {
            genes: population[i].clone(),
            cost: Some(evals[i].cost),
            feasible: Feasibility::Yes,
        })
        .collect()
}

/// Draw `count` candidates uniformly from `[c - psi, c + psi]` intersected
/// with the input box, per gene, where `c` is the clipped center gene.
pub fn sample_population<R: Rng + ?Sized>(
    center: &[f64],
    psi: &MarginVector,
    count: usize,
    spec: &ModelSpec,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let n = spec.n;
    let intervals: Vec<(f64, f64)> = center
        .iter()
        .enumerate()
        .map(|(j, &c)| {
            let i = j % n;
            let (lo, hi) = (spec.u_min[i], spec.u_max[i]);
            let c = c.clamp(lo, hi);
            let w = psi.0[i].max(0.0);
            ((c - w).max(lo), (c + w).min(hi))
        })
        .collect();
    (0..count)
        .map(|_| {
            intervals
                .iter()
                .map(|&(a, b)| if b > a { rng.random_range(a..=b) } else { a })
                .collect()
        })
        .collect()
}

/// `count` rate-repaired candidates sampled within `psi` of `center`.
pub fn repaired_population<R: Rng + ?Sized>(
    problem: &CycleProblem<'_>,
    center: &[f64],
    psi: &MarginVector,
    count: usize,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let mut pop = sample_population(center, psi, count, problem.spec, rng);
    for g in &mut pop {
        problem.repair(g);
    }
    pop
}

/// Index of the fittest of `k` uniform draws (with replacement); ties go to
/// the lowest index.
pub fn tournament_select<R: Rng + ?Sized>(fitness: &[f64], k: usize, rng: &mut R) -> usize {
    assert!(!fitness.is_empty(), "tournament over an empty population");
    let mut best = rng.random_range(0..fitness.len());
    for _ in 1..k {
        let i = rng.random_range(0..fitness.len());
        if fitness[i] > fitness[best] || (fitness[i] == fitness[best] && i < best) {
            best = i;
        }
    }
    best
}

/// Single-point crossover with probability `rate`; otherwise copies.
pub fn crossover<R: Rng + ?Sized>(a: &[f64], b: &[f64], rate: f64, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(a.len(), b.len(), "crossover parents differ in length");
    let mut c1 = a.to_vec();
    let mut c2 = b.to_vec();
    if a.len() >= 2 && rng.random_bool(rate) {
        let cut = rng.random_range(1..a.len());
        c1[cut..].copy_from_slice(&b[cut..]);
        c2[cut..].copy_from_slice(&a[cut..]);
    }
    (c1, c2)
}

/// Gaussian mutation with per-input scale `psi / 6`, clipped to the input box.
pub fn mutate<R: Rng + ?Sized>(genes: &mut [f64], rate: f64, psi: &MarginVector, spec: &ModelSpec, rng: &mut R) {
    let n = spec.n;
    for (j, g) in genes.iter_mut().enumerate() {
        if !rng.random_bool(rate) {
            continue;
        }
        let i = j % n;
        let sigma = psi.0[i] / 6.0;
        if sigma > 0.0 {
            let d = Normal::new(0.0, sigma).expect("finite sigma");
            *g = (*g + d.sample(rng)).clamp(spec.u_min[i], spec.u_max[i]);
        }
    }
}

/// Breed the next generation: the incumbent first, then children of
/// tournament-selected parents.
pub(crate) fn next_generation<R: Rng + ?Sized>(
    population: &[Vec<f64>],
    evals: &[Evaluation],
    elite: Option<&[f64]>,
    psi: &MarginVector,
    cfg: &GaConfig,
    problem: &CycleProblem<'_>,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let p = population.len();
    let fit: Vec<f64> = evals
        .iter()
        .map(|e| if e.admissible() { crate::nmpc::fitness(e.cost) } else { 0.0 })
        .collect();
    let mut next = Vec::with_capacity(p);
    if let Some(e) = elite {
        next.push(e.to_vec());
    }
    while next.len() < p {
        let a = tournament_select(&fit, cfg.tournament_size, rng);
        let b = tournament_select(&fit, cfg.tournament_size, rng);
        let (mut c1, mut c2) = crossover(&population[a], &population[b], cfg.crossover_rate, rng);
        for c in [&mut c1, &mut c2] {
            mutate(c, cfg.mutation_rate, psi, problem.spec, rng);
            problem.repair(c);
        }
        next.push(c1);
        if next.len() < p {
            next.push(c2);
        }
    }
    next
}

/// One control cycle of the genetic search: `population` candidates sampled
/// within `psi` of `warm_start` (the previous best shifted one step).
pub fn solve_cycle<R: Rng + ?Sized, C: Clock + ?Sized>(
    problem: &CycleProblem<'_>,
    psi: &MarginVector,
    population: usize,
    warm_start: &HorizonSolution,
    cfg: &GaConfig,
    clock: &mut C,
    rng: &mut R,
) -> Result<CycleOutcome> {
    let pop = repaired_population(problem, &warm_start.genes, psi, population.max(1), rng);
    evolve(problem, psi, pop, warm_start, cfg, clock, rng)
}

/// Offline search for margin targets: a genetic search at `psi` whose
/// population also contains the warm start, then `stages` further searches
/// centred on (and containing) the incumbent with the margin shrunk by
/// `shrink` each time. Counters accumulate over all stages.
pub fn refined_solve<R: Rng + ?Sized, C: Clock + ?Sized>(
    problem: &CycleProblem<'_>,
    psi: &MarginVector,
    population: usize,
    warm_start: &HorizonSolution,
    cfg: &GaConfig,
    stages: usize,
    shrink: f64,
    clock: &mut C,
    rng: &mut R,
) -> Result<CycleOutcome> {
    let seeded = |center: &HorizonSolution, margin: &MarginVector, clock: &mut C, rng: &mut R| {
        let mut pop = vec![center.genes.clone()];
        problem.repair(&mut pop[0]);
        pop.extend(repaired_population(problem, &center.genes, margin, population.max(2) - 1, rng));
        evolve(problem, margin, pop, warm_start, cfg, clock, rng)
    };
    let mut out = seeded(warm_start, psi, clock, rng)?;
    let mut margin = psi.clone();
    for _ in 0..stages {
        if out.used_fallback {
            break;
        }
        margin = MarginVector(margin.0.iter().map(|m| m * shrink).collect());
        let stage = seeded(&out.best.clone(), &margin, clock, rng)?;
        out.evaluations += stage.evaluations;
        out.generations_run += stage.generations_run;
        out.wall_time += stage.wall_time;
        out.converged |= stage.converged;
        if !stage.used_fallback && stage.best.cost_or_inf() < out.best.cost_or_inf() {
            out.best = stage.best;
            out.applied_input = stage.applied_input;
            out.ranked = stage.ranked;
        }
    }
    Ok(out)
}

/// Generation loop from an initial population.
pub(crate) fn evolve<R: Rng + ?Sized, C: Clock + ?Sized>(
    problem: &CycleProblem<'_>,
    psi: &MarginVector,
    mut pop: Vec<Vec<f64>>,
    warm_start: &HorizonSolution,
    cfg: &GaConfig,
    clock: &mut C,
    rng: &mut R,
) -> Result<CycleOutcome> {
    let size = pop.len();
    let mut search = Search::new(problem, cfg, clock);
    let mut cached: Option<Evaluation> = None;
    let mut ranked = Vec::new();
    while search.generations_run < cfg.generations && search.may_continue() {
        // The carried-over incumbent keeps its known evaluation.
        let evals = match cached.take() {
            Some(ev) => {
                let mut rest = search.evaluate(&pop[1..]);
                rest.insert(0, ev);
                rest
            }
            None => search.evaluate(&pop),
        };
        ranked = rank(&pop, &evals);
        if search.end_generation() || search.generations_run >= cfg.generations {
            break;
        }
        let elite = search.best().map(|(g, c)| (g.to_vec(), c));
        pop = next_generation(&pop, &evals, elite.as_ref().map(|(g, _)| g.as_slice()), psi, cfg, problem, rng);
        cached = elite.map(|(_, cost)| Evaluation {
            cost,
            screening: crate::nmpc::Screening::Feasible,
        });
    }
    search.finish(warm_start, size, ranked)
}
