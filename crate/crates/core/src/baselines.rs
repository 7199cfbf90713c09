//! Comparison solvers: plain GA on the full input box, GA seeded with
//! shifted elites, global-best PSO, and DE/rand/1/bin.
//!
//! All share the screening, cost threshold, time budget, and fallback rules
//! of [`crate::ga::solve_cycle`].

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ga::{evolve, rank, repaired_population, Clock, CycleOutcome, GaConfig, Search};
use crate::nmpc::{CycleProblem, Evaluation, HorizonSolution, MarginVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Og,
    Mg,
    Pso,
    De,
    Proposed,
}

impl SolverKind {
    pub const ALL: [SolverKind; 5] = [
        SolverKind::Og,
        SolverKind::Mg,
        SolverKind::Pso,
        SolverKind::De,
        SolverKind::Proposed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::Og => "og",
            SolverKind::Mg => "mg",
            SolverKind::Pso => "pso",
            SolverKind::De => "de",
            SolverKind::Proposed => "proposed",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SolverKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(format!("unknown solver '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsoConfig {
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            inertia: 0.7,
            cognitive: 1.5,
            social: 1.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeConfig {
    pub differential_weight: f64,
    pub crossover_probability: f64,
}

impl Default for DeConfig {
    fn default() -> Self {
        Self {
            differential_weight: 0.6,
            crossover_probability: 0.8,
        }
    }
}

fn full_box_population<R: Rng + ?Sized>(problem: &CycleProblem<'_>, warm: &HorizonSolution, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
    repaired_population(problem, &warm.genes, &MarginVector::physical(problem.spec), count, rng)
}

/// GA with the physical margin and the largest population every cycle.
pub fn og_solve<R: Rng + ?Sized, C: Clock + ?Sized>(
    problem: &CycleProblem<'_>,
    warm_start: &HorizonSolution,
    cfg: &GaConfig,
    clock: &mut C,
    rng: &mut R,
) -> Result<CycleOutcome> {
    let beta = MarginVector::physical(problem.spec);
    let pop = full_box_population(problem, warm_start, cfg.nu, rng);
    evolve(problem, &beta, pop, warm_start, cfg, clock, rng)
}

/// How many of `p` MG members come from the previous cycle.
pub fn mg_shifted_count(p: usize) -> usize {
    p / 5
}

/// GA whose initial population is 80% uniform over the input box and 20%
/// the previous cycle's best solutions shifted one step.
pub fn mg_solve<R: Rng + ?Sized, C: Clock + ?Sized>(
    problem: &CycleProblem<'_>,
    warm_start: &HorizonSolution,
    previous_ranked: &[HorizonSolution],
    cfg: &GaConfig,
    clock: &mut C,
    rng: &mut R,
) -> Result<CycleOutcome> {
    let n = problem.spec.n;
    let p = cfg.nu;
    let shifted = mg_shifted_count(p).min(previous_ranked.len());
    let mut pop = full_box_population(problem, warm_start, p - shifted, rng);
    for sol in &previous_ranked[..shifted] {
        let mut g = sol.shifted(n).genes;
        problem.repair(&mut g);
        pop.push(g);
    }
    let beta = MarginVector::physical(problem.spec);
    evolve(problem, &beta, pop, warm_start, cfg, clock, rng)
}

fn clip_and_repair(problem: &CycleProblem<'_>, genes: &mut [f64]) {
    let spec = problem.spec;
    for (j, g) in genes.iter_mut().enumerate() {
        let i = j % spec.n;
        *g = g.clamp(spec.u_min[i], spec.u_max[i]);
    }
    problem.repair(genes);
}

/// Global-best particle swarm over the horizon input box; velocities start
/// at zero and each iteration counts as one generation.
pub fn pso_solve<R: Rng + ?Sized, C: Clock + ?Sized>(
    problem: &CycleProblem<'_>,
    warm_start: &HorizonSolution,
    cfg: &GaConfig,
    pso: &PsoConfig,
    clock: &mut C,
    rng: &mut R,
) -> Result<CycleOutcome> {
    let p = cfg.nu;
    let dim = problem.gene_count();
    let mut pos = full_box_population(problem, warm_start, p, rng);
    let mut vel = vec![vec![0.0; dim]; p];
    let mut pbest: Vec<Option<(Vec<f64>, f64)>> = vec![None; p];
    let mut search = Search::new(problem, cfg, clock);
    let mut ranked = Vec::new();
    while search.generations_run < cfg.generations && search.may_continue() {
        let evals = search.evaluate(&pos);
        ranked = rank(&pos, &evals);
        for (i, ev) in evals.iter().enumerate() {
            if ev.admissible() && pbest[i].as_ref().is_none_or(|(_, c)| ev.cost < *c) {
                pbest[i] = Some((pos[i].clone(), ev.cost));
            }
        }
        if search.end_generation() || search.generations_run >= cfg.generations {
            break;
        }
        let gbest = search.best().map(|(g, _)| g.to_vec());
        for i in 0..p {
            for d in 0..dim {
                let x = pos[i][d];
                let mut v = pso.inertia * vel[i][d];
                if let Some((pb, _)) = &pbest[i] {
                    v += pso.cognitive * rng.random::<f64>() * (pb[d] - x);
                }
                if let Some(gb) = &gbest {
                    v += pso.social * rng.random::<f64>() * (gb[d] - x);
                }
                vel[i][d] = v;
                pos[i][d] = x + v;
            }
            clip_and_repair(problem, &mut pos[i]);
        }
    }
    search.finish(warm_start, p, ranked)
}

fn better(a: &Evaluation, b: &Evaluation) -> bool {
    match (a.admissible(), b.admissible()) {
        (true, false) => true,
        (false, true) => false,
        _ => a.cost <= b.cost,
    }
}

/// DE/rand/1/bin with greedy replacement; every trial gene is taken from
/// the mutant with the crossover probability.
pub fn de_solve<R: Rng + ?Sized, C: Clock + ?Sized>(
    problem: &CycleProblem<'_>,
    warm_start: &HorizonSolution,
    cfg: &GaConfig,
    de: &DeConfig,
    clock: &mut C,
    rng: &mut R,
) -> Result<CycleOutcome> {
    let p = cfg.nu;
    if p < 4 {
        return Err(Error::config(format!("differential evolution needs at least 4 members, got {p}")));
    }
    let dim = problem.gene_count();
    let mut pop = full_box_population(problem, warm_start, p, rng);
    let mut search = Search::new(problem, cfg, clock);
    let mut evals = search.evaluate(&pop);
    let mut ranked = rank(&pop, &evals);
    search.end_generation();
    while search.generations_run < cfg.generations && search.may_continue() {
        let trials: Vec<Vec<f64>> = (0..p)
            .map(|i| {
                let picks = loop {
                    let s = sample(rng, p, 3);
                    if !s.iter().any(|j| j == i) {
                        break s;
                    }
                };
                let (r1, r2, r3) = (picks.index(0), picks.index(1), picks.index(2));
                let mut t = pop[i].clone();
                for d in 0..dim {
                    if rng.random_bool(de.crossover_probability) {
                        t[d] = pop[r1][d] + de.differential_weight * (pop[r2][d] - pop[r3][d]);
                    }
                }
                clip_and_repair(problem, &mut t);
                t
            })
            .collect();
        let trial_evals = search.evaluate(&trials);
        for (i, (t, ev)) in trials.into_iter().zip(trial_evals).enumerate() {
            if better(&ev, &evals[i]) {
                pop[i] = t;
                evals[i] = ev;
            }
        }
        ranked = rank(&pop, &evals);
        if search.end_generation() {
            break;
        }
    }
    search.finish(warm_start, p, ranked)
}
