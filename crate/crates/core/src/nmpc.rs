//! Horizon rollout, tracking cost, fitness, and constraint screening.
//!
//! A candidate control sequence is stored flat, step-major:
//! `[u_0[0..n], u_1[0..n], ..., u_{h-1}[0..n]]`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::plant::{InputVector, ModelSpec, StateVector, MAX_STATE};

/// Slack allowed on input and rate bounds, absorbing rounding in repaired genes.
pub const BOUND_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feasibility {
    #[default]
    Unchecked,
    Yes,
    No,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonSolution {
    pub genes: Vec<f64>,
    pub cost: Option<f64>,
    pub feasible: Feasibility,
}

impl HorizonSolution {
    pub fn new(genes: Vec<f64>) -> Self {
        Self {
            genes,
            cost: None,
            feasible: Feasibility::Unchecked,
        }
    }

    /// Hold `u` constant over `h` steps.
    pub fn constant(u: &[f64], h: usize) -> Self {
        Self::new(u.repeat(h))
    }

    pub fn from_steps(steps: &[InputVector]) -> Self {
        Self::new(steps.iter().flat_map(|u| u.iter().copied()).collect())
    }

    pub fn steps(&self, n: usize) -> usize {
        self.genes.len() / n
    }

    pub fn input(&self, step: usize, n: usize) -> &[f64] {
        &self.genes[step * n..(step + 1) * n]
    }

    /// One step forward in time: drop the first input and repeat the last.
    pub fn shifted(&self, n: usize) -> Self {
        Self::new(shift_genes(&self.genes, n))
    }

    pub fn cost_or_inf(&self) -> f64 {
        self.cost.unwrap_or(f64::INFINITY)
    }

    pub fn check_dims(&self, spec: &ModelSpec) -> Result<()> {
        check_dim("horizon genes", spec.horizon * spec.n, self.genes.len())
    }
}

pub fn shift_genes(genes: &[f64], n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(genes.len());
    out.extend_from_slice(&genes[n.min(genes.len())..]);
    let tail_start = genes.len().saturating_sub(n);
    out.extend_from_slice(&genes[tail_start..]);
    out
}

/// Per-input search half-widths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MarginVector(pub Vec<f64>);

impl MarginVector {
    pub fn physical(spec: &ModelSpec) -> Self {
        Self(spec.physical_margins())
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    /// Clamp every width into `[0, beta_i]`; NaN becomes `beta_i`.
    pub fn clamped(&self, beta: &[f64]) -> Self {
        Self(
            self.0
                .iter()
                .zip(beta)
                .map(|(w, b)| if w.is_nan() { *b } else { w.clamp(0.0, *b) })
                .collect(),
        )
    }

    pub fn widths(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTrack {
    pub states: Vec<StateVector>,
    pub inputs: Vec<InputVector>,
}

impl ReferenceTrack {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Number of control cycles the track can serve with horizon `h`.
    pub fn cycles(&self, h: usize) -> usize {
        self.states.len().min(self.inputs.len() + 1).saturating_sub(h)
    }

    pub fn validate(&self, spec: &ModelSpec, cycles: usize) -> Result<()> {
        if self.states.len() < cycles + spec.horizon || self.inputs.len() < cycles + spec.horizon - 1 {
            return Err(Error::config(format!(
                "reference track of {} states / {} inputs cannot serve {} cycles with horizon {}",
                self.states.len(),
                self.inputs.len(),
                cycles,
                spec.horizon
            )));
        }
        for s in &self.states {
            check_dim("reference state", spec.m, s.len())?;
        }
        for u in &self.inputs {
            check_dim("reference input", spec.n, u.len())?;
        }
        Ok(())
    }
}

/// Axis-aligned box the final predicted state must enter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerminalSet {
    pub center: Vec<f64>,
    pub half_widths: Vec<f64>,
}

impl TerminalSet {
    pub fn unbounded(m: usize) -> Self {
        Self {
            center: vec![0.0; m],
            half_widths: vec![f64::INFINITY; m],
        }
    }

    pub fn new(center: Vec<f64>, half_widths: Vec<f64>) -> Result<Self> {
        check_dim("terminal half-widths", center.len(), half_widths.len())?;
        if half_widths.iter().any(|w| w.is_nan() || *w < 0.0) {
            return Err(Error::config("terminal half-widths must be non-negative"));
        }
        Ok(Self { center, half_widths })
    }

    pub fn is_unbounded(&self) -> bool {
        self.half_widths.iter().all(|w| w.is_infinite())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.center)
            .zip(&self.half_widths)
            .all(|((x, c), w)| w.is_infinite() || (x - c).abs() <= *w)
    }
}

/// Predicted states `x_{c+1..c+h}` under the decoded inputs of `genes`.
pub fn rollout(spec: &ModelSpec, x0: &[f64], genes: &[f64]) -> Result<Vec<StateVector>> {
    check_dim("state", spec.m, x0.len())?;
    check_dim("horizon genes", spec.horizon * spec.n, genes.len())?;
    let mut out = Vec::with_capacity(spec.horizon);
    let mut x = x0.to_vec();
    for u in genes.chunks(spec.n) {
        let mut next = vec![0.0; spec.m];
        spec.step_into(&x, u, &mut next)?;
        x.clone_from(&next);
        out.push(StateVector(next));
    }
    Ok(out)
}

fn weighted_sq(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * (a - b) * (a - b)).sum()
}

/// Tracking cost of `genes` from `x0` at cycle `c`; `+inf` if the rollout
/// diverges or fails.
pub fn evaluate_cost(spec: &ModelSpec, x0: &[f64], genes: &[f64], refs: &ReferenceTrack, c: usize) -> f64 {
    match rollout(spec, x0, genes) {
        Ok(traj) => trajectory_cost(spec, &traj, genes, refs, c),
        Err(_) => f64::INFINITY,
    }
}

/// Cost of an already rolled-out trajectory.
pub fn trajectory_cost(spec: &ModelSpec, traj: &[StateVector], genes: &[f64], refs: &ReferenceTrack, c: usize) -> f64 {
    let mut j = 0.0;
    for (k, x) in traj.iter().enumerate() {
        j += weighted_sq(&spec.q, &refs.states[c + k + 1], x);
        j += weighted_sq(&spec.r, &refs.inputs[c + k], &genes[k * spec.n..(k + 1) * spec.n]);
    }
    if let Some(last) = traj.last() {
        j += spec.q_terminal.iter().zip(last.iter()).map(|(w, x)| w * x * x).sum::<f64>();
    }
    j
}

/// Maps a cost onto `(0, 1]`, with `+inf` mapped to zero.
pub fn fitness(cost: f64) -> f64 {
    if cost.is_infinite() {
        0.0
    } else {
        1.0 / (1.0 + cost)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    InputBound { step: usize, input: usize, value: f64, min: f64, max: f64 },
    InputRate { step: usize, input: usize, delta: f64, min: f64, max: f64 },
    StateBound { step: usize, state: usize, value: f64, min: f64, max: f64 },
    Rollout { message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub status: Feasibility,
    pub violations: Vec<Violation>,
}

/// Check input, input-rate, and state bounds of `genes` and its rollout.
/// `prev_applied` is the input applied in the previous cycle, if any; the
/// first step's rate is measured against it.
pub fn check_feasibility(
    spec: &ModelSpec,
    prev_applied: Option<&[f64]>,
    genes: &[f64],
    traj: &[StateVector],
) -> FeasibilityReport {
    let n = spec.n;
    let mut violations = Vec::new();
    for (k, u) in genes.chunks(n).enumerate() {
        for i in 0..n {
            let (lo, hi) = (spec.u_min[i], spec.u_max[i]);
            if !(u[i] >= lo - BOUND_TOL && u[i] <= hi + BOUND_TOL) {
                violations.push(Violation::InputBound { step: k, input: i, value: u[i], min: lo, max: hi });
            }
            let prev = if k == 0 { prev_applied.map(|p| p[i]) } else { Some(genes[(k - 1) * n + i]) };
            if let Some(p) = prev {
                let delta = u[i] - p;
                let (lo, hi) = (spec.du_min[i], spec.du_max[i]);
                if !(delta >= lo - BOUND_TOL && delta <= hi + BOUND_TOL) {
                    violations.push(Violation::InputRate { step: k, input: i, delta, min: lo, max: hi });
                }
            }
        }
    }
    for (k, x) in traj.iter().enumerate() {
        for j in 0..spec.m {
            let (lo, hi) = (spec.x_min[j], spec.x_max[j]);
            if !(x[j] >= lo && x[j] <= hi) {
                violations.push(Violation::StateBound { step: k + 1, state: j, value: x[j], min: lo, max: hi });
            }
        }
    }
    if traj.len() != spec.horizon {
        violations.push(Violation::Rollout {
            message: format!("trajectory has {} of {} states", traj.len(), spec.horizon),
        });
    }
    let status = if violations.is_empty() { Feasibility::Yes } else { Feasibility::No };
    FeasibilityReport { status, violations }
}

pub fn check_terminal(traj: &[StateVector], terminal: &TerminalSet) -> bool {
    traj.last().is_some_and(|x| terminal.contains(x))
}

/// `E_j = q_j (measured_j - expected_j)^2`.
pub fn error_vector(measured: &[f64], expected: &[f64], q: &[f64]) -> Result<Vec<f64>> {
    check_dim("expected state", measured.len(), expected.len())?;
    check_dim("error weights", measured.len(), q.len())?;
    Ok(measured
        .iter()
        .zip(expected)
        .zip(q)
        .map(|((a, b), w)| w * (a - b) * (a - b))
        .collect())
}

/// Clamp each gene into the input box and then into the rate band around the
/// previous step, walking forward from `prev_applied`. The result always
/// satisfies both input and rate bounds.
pub fn repair_rates(spec: &ModelSpec, prev_applied: Option<&[f64]>, genes: &mut [f64]) {
    let n = spec.n;
    let mut prev: Option<Vec<f64>> = prev_applied.map(<[f64]>::to_vec);
    for u in genes.chunks_mut(n) {
        for i in 0..n {
            let (mut lo, mut hi) = (spec.u_min[i], spec.u_max[i]);
            if let Some(p) = &prev {
                lo = lo.max(p[i] + spec.du_min[i]);
                hi = hi.min(p[i] + spec.du_max[i]);
                if lo > hi {
                    // Previous input outside the box; move toward it as far as allowed.
                    let mid = p[i].clamp(spec.u_min[i], spec.u_max[i]);
                    lo = mid;
                    hi = mid;
                }
            }
            u[i] = if u[i].is_nan() { lo } else { u[i].clamp(lo, hi) };
        }
        prev = Some(u.to_vec());
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Screening {
    Feasible,
    Infeasible,
    OutsideTerminal,
    Divergent,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub cost: f64,
    pub screening: Screening,
}

impl Evaluation {
    pub fn admissible(&self) -> bool {
        self.screening == Screening::Feasible
    }
}

/// One cycle's optimization problem, with the reference window copied out so
/// candidate evaluation is allocation-free.
#[derive(Clone, Debug)]
pub struct CycleProblem<'a> {
    pub spec: &'a ModelSpec,
    pub cycle: usize,
    pub x0: Vec<f64>,
    /// `r_{c+1} .. r_{c+h}`, flattened.
    ref_states: Vec<f64>,
    /// `v_c .. v_{c+h-1}`, flattened.
    ref_inputs: Vec<f64>,
    pub prev_applied: Option<Vec<f64>>,
    pub terminal: TerminalSet,
}

impl<'a> CycleProblem<'a> {
    pub fn new(
        spec: &'a ModelSpec,
        x0: &[f64],
        refs: &ReferenceTrack,
        cycle: usize,
        prev_applied: Option<&[f64]>,
        terminal: TerminalSet,
    ) -> Result<Self> {
        check_dim("state", spec.m, x0.len())?;
        if spec.m > MAX_STATE {
            return Err(Error::config(format!("state dimension {} exceeds {MAX_STATE}", spec.m)));
        }
        let h = spec.horizon;
        if refs.states.len() < cycle + h + 1 || refs.inputs.len() < cycle + h {
            return Err(Error::config(format!("reference track too short for cycle {cycle}")));
        }
        if let Some(p) = prev_applied {
            check_dim("previous input", spec.n, p.len())?;
        }
        check_dim("terminal set", spec.m, terminal.center.len())?;
        let ref_states = refs.states[cycle + 1..=cycle + h].iter().flat_map(|s| s.iter().copied()).collect();
        let ref_inputs = refs.inputs[cycle..cycle + h].iter().flat_map(|u| u.iter().copied()).collect();
        Ok(Self {
            spec,
            cycle,
            x0: x0.to_vec(),
            ref_states,
            ref_inputs,
            prev_applied: prev_applied.map(<[f64]>::to_vec),
            terminal,
        })
    }

    /// Problem for cycle `cycle` given only the reference window starting
    /// at that cycle (`r_c ..= r_{c+h}`, `v_c .. v_{c+h-1}`).
    pub fn windowed(
        spec: &'a ModelSpec,
        x0: &[f64],
        window: &ReferenceTrack,
        cycle: usize,
        prev_applied: Option<&[f64]>,
        terminal: TerminalSet,
    ) -> Result<Self> {
        let mut p = Self::new(spec, x0, window, 0, prev_applied, terminal)?;
        p.cycle = cycle;
        Ok(p)
    }

    pub fn gene_count(&self) -> usize {
        self.spec.horizon * self.spec.n
    }

    pub fn reference_inputs(&self) -> &[f64] {
        &self.ref_inputs
    }

    pub fn reference_state(&self, k: usize) -> &[f64] {
        let m = self.spec.m;
        &self.ref_states[k * m..(k + 1) * m]
    }

    pub fn repair(&self, genes: &mut [f64]) {
        repair_rates(self.spec, self.prev_applied.as_deref(), genes);
    }

    fn inputs_admissible(&self, genes: &[f64]) -> bool {
        let spec = self.spec;
        let n = spec.n;
        let mut prev = self.prev_applied.as_deref();
        for u in genes.chunks(n) {
            for i in 0..n {
                if !(u[i] >= spec.u_min[i] - BOUND_TOL && u[i] <= spec.u_max[i] + BOUND_TOL) {
                    return false;
                }
                if let Some(p) = prev {
                    let d = u[i] - p[i];
                    if !(d >= spec.du_min[i] - BOUND_TOL && d <= spec.du_max[i] + BOUND_TOL) {
                        return false;
                    }
                }
            }
            prev = Some(u);
        }
        true
    }

    /// Cost and screening verdict of one candidate.
    pub fn evaluate(&self, genes: &[f64]) -> Evaluation {
        let spec = self.spec;
        let (m, n) = (spec.m, spec.n);
        debug_assert_eq!(genes.len(), self.gene_count());
        let mut feasible = self.inputs_admissible(genes);
        let mut x = [0.0; MAX_STATE];
        x[..m].copy_from_slice(&self.x0);
        let mut cost = 0.0;
        for (k, u) in genes.chunks(n).enumerate() {
            let mut next = [0.0; MAX_STATE];
            if spec.step_into(&x[..m], u, &mut next[..m]).is_err() {
                return Evaluation {
                    cost: f64::INFINITY,
                    screening: Screening::Divergent,
                };
            }
            x = next;
            let r = &self.ref_states[k * m..(k + 1) * m];
            cost += weighted_sq(&spec.q, r, &x[..m]);
            cost += weighted_sq(&spec.r, &self.ref_inputs[k * n..(k + 1) * n], u);
            if feasible {
                feasible = (0..m).all(|j| x[j] >= spec.x_min[j] && x[j] <= spec.x_max[j]);
            }
        }
        cost += spec.q_terminal.iter().zip(&x[..m]).map(|(w, v)| w * v * v).sum::<f64>();
        let screening = if !feasible {
            Screening::Infeasible
        } else if !self.terminal.contains(&x[..m]) {
            Screening::OutsideTerminal
        } else {
            Screening::Feasible
        };
        Evaluation { cost, screening }
    }
}
