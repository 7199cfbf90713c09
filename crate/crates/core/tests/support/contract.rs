//! Shared NMPC contract checks run against every solver.

use bsm_nmpc::baselines::{de_solve, mg_solve, og_solve, pso_solve, DeConfig, PsoConfig, SolverKind};
use bsm_nmpc::error::{Error, Result};
use bsm_nmpc::ga::{solve_cycle, CycleOutcome, GaConfig, VirtualClock};
use bsm_nmpc::nmpc::{rollout, check_feasibility, CycleProblem, Feasibility, HorizonSolution, MarginVector, ReferenceTrack, TerminalSet};
use bsm_nmpc::plant::{InputVector, ModelKind, ModelSpec, StateVector};
use bsm_nmpc::rng::{stream, Stream};

/// Solve one cycle with `kind`; the proposed solver runs at half the
/// physical margin with half the largest population.
pub fn solve(
    kind: SolverKind,
    problem: &CycleProblem<'_>,
    warm: &HorizonSolution,
    prev_ranked: &[HorizonSolution],
    cfg: &GaConfig,
    clock: &mut VirtualClock,
    seed: u64,
) -> Result<CycleOutcome> {
    let mut rng = stream(seed, Stream::Controller, problem.cycle as u64);
    match kind {
        SolverKind::Og => og_solve(problem, warm, cfg, clock, &mut rng),
        SolverKind::Mg => mg_solve(problem, warm, prev_ranked, cfg, clock, &mut rng),
        SolverKind::Pso => pso_solve(problem, warm, cfg, &PsoConfig::default(), clock, &mut rng),
        SolverKind::De => de_solve(problem, warm, cfg, &DeConfig::default(), clock, &mut rng),
        SolverKind::Proposed => {
            let psi = MarginVector(MarginVector::physical(problem.spec).0.iter().map(|b| b / 2.0).collect());
            solve_cycle(problem, &psi, (cfg.nu / 2).max(cfg.xi), warm, cfg, clock, &mut rng)
        }
    }
}

/// Two-input integrator with finite rate limits, tracking a ramp.
pub fn integrator_setup() -> (ModelSpec, ReferenceTrack) {
    let mut spec = ModelSpec::integrator(2);
    spec.horizon = 4;
    spec.du_min = vec![-0.5; 2];
    spec.du_max = vec![0.5; 2];
    let len = 40;
    let refs = ReferenceTrack {
        states: (0..len).map(|k| StateVector(vec![0.05 * k as f64, -0.02 * k as f64])).collect(),
        inputs: (0..len).map(|_| InputVector(vec![0.5, -0.2])).collect(),
    };
    (spec, refs)
}

pub fn sfjr_setup() -> (ModelSpec, ReferenceTrack) {
    let spec = ModelSpec::for_kind(ModelKind::Sfjr);
    let bsm_nmpc::plant::PlantParams::Sfjr(p) = &spec.params else { unreachable!() };
    let len = 40;
    let mut states = Vec::new();
    let mut inputs = Vec::new();
    for k in 0..len {
        let (x, v) = p.equilibrium(1.2 + 0.002 * k as f64);
        states.push(StateVector(x.to_vec()));
        inputs.push(InputVector(vec![v]));
    }
    (spec, ReferenceTrack { states, inputs })
}

fn ga_for(spec: &ModelSpec) -> GaConfig {
    let mut cfg = GaConfig::for_model(spec.kind);
    cfg.nu = 40;
    cfg.xi = 8;
    cfg.generations = 4;
    cfg
}

fn problem<'a>(spec: &'a ModelSpec, refs: &ReferenceTrack, x0: &[f64], cycle: usize, prev: &[f64]) -> CycleProblem<'a> {
    CycleProblem::new(spec, x0, refs, cycle, Some(prev), TerminalSet::unbounded(spec.m)).unwrap()
}

fn in_bounds(spec: &ModelSpec, prev: &[f64], genes: &[f64]) -> std::result::Result<(), String> {
    let traj = rollout(spec, &vec![0.0; spec.m], genes).map_err(|e| e.to_string())?;
    let report = check_feasibility(spec, Some(prev), genes, &traj);
    let inputs_ok = report.violations.iter().all(|v| matches!(v, bsm_nmpc::nmpc::Violation::StateBound { .. }));
    if inputs_ok {
        Ok(())
    } else {
        Err(format!("{:?}", report.violations))
    }
}

/// Several cycles of closed loop on the model; every returned horizon must
/// respect the input box and, from the previously applied input on, the
/// rate limits.
pub fn bounds_and_rates(kind: SolverKind) -> std::result::Result<(), String> {
    for (spec, refs) in [integrator_setup(), sfjr_setup()] {
        let cfg = ga_for(&spec);
        let mut x = refs.states[0].0.clone();
        let mut prev_applied = refs.inputs[0].0.clone();
        let mut warm = HorizonSolution::from_steps(&refs.inputs[..spec.horizon]);
        let mut ranked = Vec::new();
        let mut clock = VirtualClock::new(0.0);
        for c in 0..8 {
            let p = problem(&spec, &refs, &x, c, &prev_applied);
            let out = solve(kind, &p, &warm, &ranked, &cfg, &mut clock, 11).map_err(|e| e.to_string())?;
            in_bounds(&spec, &prev_applied, &out.best.genes).map_err(|e| format!("{} cycle {c}: {e}", spec.kind))?;
            if out.applied_input.0 != out.best.genes[..spec.n] {
                return Err(format!("{} cycle {c}: applied input is not the first step", spec.kind));
            }
            x = bsm_nmpc::plant::step(&spec, &x, &out.applied_input).map_err(|e| e.to_string())?.0;
            prev_applied = out.applied_input.0.clone();
            warm = out.best.shifted(spec.n);
            ranked = out.ranked;
        }
    }
    Ok(())
}

/// With a clock charging `spe` seconds per evaluation, no generation may
/// start once the budget is spent.
pub fn budget(kind: SolverKind) -> std::result::Result<(), String> {
    let (spec, refs) = integrator_setup();
    let mut cfg = ga_for(&spec);
    cfg.generations = 50;
    cfg.epsilon = f64::NEG_INFINITY;
    let p = problem(&spec, &refs, &refs.states[0], 1, &refs.inputs[0]);
    let warm = HorizonSolution::from_steps(&refs.inputs[1..1 + spec.horizon]);
    let budget = cfg.budget(spec.ts);
    for per_generation in [1.0, 2.5, 6.0] {
        let spe = budget / (per_generation * cfg.nu as f64);
        let mut clock = VirtualClock::new(spe);
        let out = solve(kind, &p, &warm, &[], &cfg, &mut clock, 5).map_err(|e| e.to_string())?;
        let limit = (budget / spe).floor() as usize + cfg.nu;
        if out.evaluations > limit {
            return Err(format!("{} evaluations exceed the budget bound {limit}", out.evaluations));
        }
        if out.generations_run >= cfg.generations {
            return Err("budget never stopped the search".into());
        }
        if (out.wall_time - out.evaluations as f64 * spe).abs() > 1e-12 {
            return Err("reported time disagrees with the clock".into());
        }
    }
    // A zero-cost clock never interrupts: every generation runs.
    let out = solve(kind, &p, &warm, &[], &cfg, &mut VirtualClock::new(0.0), 5).map_err(|e| e.to_string())?;
    if out.generations_run != cfg.generations {
        return Err(format!("ran {} of {} generations with a free clock", out.generations_run, cfg.generations));
    }
    // An infinite threshold is met by the first admissible generation.
    cfg.epsilon = f64::INFINITY;
    let out = solve(kind, &p, &warm, &[], &cfg, &mut VirtualClock::new(0.0), 5).map_err(|e| e.to_string())?;
    if !(out.converged && out.generations_run == 1) {
        return Err("infinite threshold did not stop after one generation".into());
    }
    Ok(())
}

/// A state box no trajectory can satisfy forces the fallback: the repaired
/// shifted warm start at later cycles, a setup error at cycle 0.
pub fn fallback(kind: SolverKind) -> std::result::Result<(), String> {
    let (mut spec, refs) = integrator_setup();
    spec.x_max = vec![-50.0; 2];
    spec.x_min = vec![-100.0; 2];
    let cfg = ga_for(&spec);
    let warm = HorizonSolution::new(vec![0.9, -0.3, 1.2, -0.1, 2.0, 0.0, 2.0, 0.0]);
    let prev = [0.6, -0.2];
    let p = problem(&spec, &refs, &[0.0, 0.0], 3, &prev);
    let out = solve(kind, &p, &warm, &[], &cfg, &mut VirtualClock::new(0.0), 9).map_err(|e| e.to_string())?;
    if !out.used_fallback || out.converged {
        return Err("infeasible cycle did not report the fallback".into());
    }
    let mut expected = warm.genes.clone();
    p.repair(&mut expected);
    if out.best.genes != expected || out.applied_input.0 != expected[..2] {
        return Err(format!("fallback {:?} is not the repaired warm start {:?}", out.best.genes, expected));
    }
    if out.best.feasible != Feasibility::No {
        return Err("fallback should be marked infeasible".into());
    }
    let p0 = problem(&spec, &refs, &[0.0, 0.0], 0, &prev);
    match solve(kind, &p0, &warm, &[], &cfg, &mut VirtualClock::new(0.0), 9) {
        Err(Error::Setup(_)) => Ok(()),
        other => Err(format!("cycle 0 without an admissible candidate gave {other:?}")),
    }
}

/// Same seed and clock give identical outcomes; another seed differs.
pub fn determinism(kind: SolverKind) -> std::result::Result<(), String> {
    let (spec, refs) = sfjr_setup();
    let mut cfg = ga_for(&spec);
    cfg.epsilon = f64::NEG_INFINITY;
    let p = problem(&spec, &refs, &refs.states[2], 2, &refs.inputs[1]);
    let warm = HorizonSolution::from_steps(&refs.inputs[2..2 + spec.horizon]);
    let ranked = vec![warm.clone(); 10];
    let run = |seed| solve(kind, &p, &warm, &ranked, &cfg, &mut VirtualClock::new(1e-4), seed).map_err(|e| e.to_string());
    let (a, b, c) = (run(21)?, run(21)?, run(22)?);
    if a != b || a.ranked != b.ranked {
        return Err("repeated run differs".into());
    }
    if a.ranked == c.ranked {
        return Err("different seeds gave the same population".into());
    }
    Ok(())
}

pub type Check = fn(SolverKind) -> std::result::Result<(), String>;

pub const CHECKS: [(&str, Check); 4] = [
    ("bounds and rates", bounds_and_rates),
    ("budget", budget),
    ("fallback", fallback),
    ("determinism", determinism),
];
