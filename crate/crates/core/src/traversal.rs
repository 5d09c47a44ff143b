//! The randomization method: plan a discretization of the eigenpath and a
//! per-step time distribution, then run it either on density matrices or as
//! sampled pure-state trajectories.

use std::f64::consts::{PI, SQRT_2};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{projective_measurement_op, randomized_evolution_eigen, QuantumChannel};
use crate::error::{Error, Result};
use crate::paths::{subuniform_schedule, ArcLengthTable, OperatorPath, PathKind, Tracking};
use crate::qcore::{DensityOperator, EigenSystem, StateVector};
use crate::timedist::{build_compact_optimal, discretize_to_integers, repeat, DistSpec, TimeDistribution};

/// Distribution family requested from the planner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    CompactOptimal,
    Sinc4,
    Gaussian,
    UniformInt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ExecutionMode {
    Exact,
    Trajectories { count: usize },
}

pub const DEFAULT_TRAJECTORIES: usize = 2000;

/// How the `q` schedule points are placed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum ScheduleRule {
    /// Arc-length (uniform) parametrization from the numeric table.
    Uniform,
    /// `s(l) = Δ l / ‖Ḣ‖` from a declared derivative bound.
    Subuniform { hdot_bound: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOptions {
    /// Declared upper bound `L'` on the path length; the numeric length is
    /// used when absent.
    pub length_bound: Option<f64>,
    pub schedule: ScheduleRule,
    pub mode: ExecutionMode,
    pub seed: u64,
    /// Equally spaced points used to verify the gap floor.
    pub gap_samples: usize,
    pub arc_tolerance: f64,
    /// Use more steps than the planned `q`.
    pub steps_override: Option<usize>,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            length_bound: None,
            schedule: ScheduleRule::Uniform,
            mode: ExecutionMode::Exact,
            seed: 0,
            gap_samples: 200,
            arc_tolerance: 1e-10,
            steps_override: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraversalPlan {
    pub schedule: Vec<f64>,
    pub distribution: DistSpec,
    pub repetitions: u64,
    pub mode: ExecutionMode,
    pub seed: u64,
    pub target_fidelity: f64,
    pub gap_floor: f64,
    pub negative_ok: bool,
    pub family: Family,
    pub path_kind: PathKind,
    pub schedule_rule: ScheduleRule,
    /// `L'` used for `q`.
    pub length_bound: f64,
    pub numeric_length: Option<f64>,
    /// `(1 − p) / (2q)`.
    pub step_error_target: f64,
    /// Error bound achieved by one step (all repetitions).
    pub step_error: f64,
    /// `n ⟨|T|⟩`.
    pub step_cost: f64,
    /// `q n ⟨|T|⟩`.
    pub predicted_cost: f64,
}

impl TraversalPlan {
    pub fn q(&self) -> usize {
        self.schedule.len()
    }

    pub fn distribution(&self) -> Result<TimeDistribution> {
        self.distribution.build()
    }

    pub fn with_mode(mut self, mode: ExecutionMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.schedule.is_empty() {
            return Err(Error::param("empty schedule"));
        }
        let mut prev = 0.0;
        for (j, s) in self.schedule.iter().enumerate() {
            if !(*s > prev) && !(j == 0 && *s > 0.0) || *s > 1.0 {
                return Err(Error::param(format!("schedule not strictly increasing in (0, 1] at step {j}")));
            }
            prev = *s;
        }
        if *self.schedule.last().unwrap() != 1.0 {
            return Err(Error::param("schedule must end at s = 1"));
        }
        if self.repetitions == 0 {
            return Err(Error::param("repetitions must be at least 1"));
        }
        if self.step_error > self.step_error_target * (1.0 + 1e-9) + 1e-15 {
            return Err(Error::param(format!(
                "per-step error {} exceeds the target {}",
                self.step_error, self.step_error_target
            )));
        }
        if let ExecutionMode::Trajectories { count: 0 } = self.mode {
            return Err(Error::param("trajectory count must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraversalReport {
    pub mode: ExecutionMode,
    pub schedule: Vec<f64>,
    pub repetitions: u64,
    /// Fidelity with the tracked eigenstate after each step.
    pub step_fidelities: Vec<f64>,
    pub final_fidelity: f64,
    /// Standard error of the mean final fidelity (trajectory mode).
    pub final_fidelity_se: f64,
    /// Exact mode: `q n ⟨|T|⟩`. Trajectory mode: mean of the sampled `Σ|t|`.
    pub total_cost: f64,
    pub predicted_cost: f64,
    pub cost_samples: Vec<f64>,
    pub trajectory_fidelities: Vec<f64>,
    /// Final measurement distribution in the computational basis.
    pub final_populations: Vec<f64>,
    pub wall_clock_seconds: f64,
}

impl TraversalReport {
    pub fn q(&self) -> usize {
        self.schedule.len()
    }
}

fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Tracked eigenstates at `schedule` (continued from `s = 0`), plus the one at 0.
fn track_schedule<T: Tracking + ?Sized>(path: &OperatorPath, tracker: &T, schedule: &[f64]) -> Result<Vec<StateVector>> {
    let mut prev = tracker.eigenstate_at(path, 0.0, None)?;
    let mut out = Vec::with_capacity(schedule.len() + 1);
    out.push(prev.state.clone());
    for &s in schedule {
        let next = tracker.track_from(path, prev.s, &prev.state, s)?;
        out.push(next.state.clone());
        prev = next;
    }
    Ok(out)
}

fn spectra(path: &OperatorPath, schedule: &[f64]) -> Result<Vec<EigenSystem>> {
    schedule.par_iter().map(|s| path.spectrum_at(*s)).collect()
}

/// What the proof's measurement operation does on the complement of the target.
#[derive(Debug, Clone, Copy)]
pub enum Complement<'a> {
    Identity,
    /// The randomized channel itself (the witness used in the error analysis).
    Randomized(&'a TimeDistribution),
}

/// Ideal projective-measurement operations at the given schedule points.
pub fn zeno_on_schedule<T: Tracking + ?Sized>(
    path: &OperatorPath,
    tracker: &T,
    schedule: &[f64],
    initial: &StateVector,
    complement: Complement<'_>,
) -> Result<TraversalReport> {
    let start = Instant::now();
    let targets = track_schedule(path, tracker, schedule)?;
    let eigs = match complement {
        Complement::Identity => Vec::new(),
        Complement::Randomized(_) => spectra(path, schedule)?,
    };
    let n = path.dim();
    let mut rho = initial.density();
    let mut fids = Vec::with_capacity(schedule.len());
    for (j, target) in targets[1..].iter().enumerate() {
        let e = match complement {
            Complement::Identity => QuantumChannel::identity(n),
            Complement::Randomized(d) => randomized_evolution_eigen(&eigs[j], d),
        };
        let m = projective_measurement_op(&target.projector(), &e)?;
        rho = m.apply(&rho)?;
        fids.push(clamp01(crate::qcore::fidelity(target, &rho)?));
    }
    Ok(TraversalReport {
        mode: ExecutionMode::Exact,
        schedule: schedule.to_vec(),
        repetitions: 1,
        final_fidelity: *fids.last().unwrap_or(&clamp01(crate::qcore::fidelity(&targets[0], &rho)?)),
        step_fidelities: fids,
        final_fidelity_se: 0.0,
        total_cost: 0.0,
        predicted_cost: 0.0,
        cost_samples: Vec::new(),
        trajectory_fidelities: Vec::new(),
        final_populations: (0..n).map(|k| rho.matrix()[(k, k)].re).collect(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Zeno baseline: exact measurements at `q` points of the uniform parametrization.
pub fn zeno_baseline<T: Tracking + ?Sized>(path: &OperatorPath, tracker: &T, q: usize, initial: &StateVector) -> Result<TraversalReport> {
    let table = ArcLengthTable::build(path, tracker, 1e-10)?;
    let schedule = table.uniform_parametrization(path, tracker, q)?;
    zeno_on_schedule(path, tracker, &schedule, initial, Complement::Identity)
}

/// Plans with default options (uniform schedule, numeric length, exact mode).
pub fn plan_randomization<T: Tracking + ?Sized>(
    path: &OperatorPath,
    tracker: &T,
    p: f64,
    gap_floor: f64,
    family: Family,
    negative_ok: bool,
) -> Result<TraversalPlan> {
    plan_randomization_with(path, tracker, p, gap_floor, family, negative_ok, &PlanOptions::default())
}

pub fn plan_randomization_with<T: Tracking + ?Sized>(
    path: &OperatorPath,
    tracker: &T,
    p: f64,
    gap_floor: f64,
    family: Family,
    negative_ok: bool,
    opts: &PlanOptions,
) -> Result<TraversalPlan> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::param(format!("target fidelity {p} outside (0, 1)")));
    }
    if !(gap_floor > 0.0 && gap_floor.is_finite()) {
        return Err(Error::param(format!("gap floor {gap_floor} must be positive")));
    }
    if path.kind() == PathKind::Unitary && gap_floor > PI {
        return Err(Error::param("phase gap floor cannot exceed π"));
    }

    // verify the floor along the path and record the spectral spread
    let samples = opts.gap_samples.max(2);
    let mut prev = tracker.eigenstate_at(path, 0.0, None)?;
    let mut spread = 0.0f64;
    for k in 0..=samples {
        let s = k as f64 / samples as f64;
        let t = if k == 0 { prev.clone() } else { tracker.track_from(path, prev.s, &prev.state, s)? };
        if t.gap < gap_floor - 1e-12 {
            return Err(Error::GapFloorViolated { s, gap: t.gap, floor: gap_floor });
        }
        if path.kind() == PathKind::Hamiltonian {
            let spec = path.spectrum_at(s)?;
            let e = &spec.eigenvalues;
            spread = spread.max(e[e.len() - 1] - e[0]);
        }
        prev = t;
    }

    let (numeric_length, table) = match opts.schedule {
        ScheduleRule::Uniform => {
            let table = ArcLengthTable::build(path, tracker, opts.arc_tolerance)?;
            if !table.converged {
                return Err(Error::Unconverged { increment: table.last_increment });
            }
            (Some(table.total()), Some(table))
        }
        ScheduleRule::Subuniform { .. } => (None, None),
    };
    let length_bound = match (opts.length_bound, opts.schedule, numeric_length) {
        (Some(l), _, Some(num)) if l < num * (1.0 - 1e-9) => {
            return Err(Error::PlanRejected(format!("declared length bound {l} is below the numeric length {num}")));
        }
        (Some(l), _, _) => l,
        (None, ScheduleRule::Subuniform { hdot_bound }, _) => hdot_bound / gap_floor,
        (None, _, Some(num)) => num,
        (None, _, None) => unreachable!("uniform schedules always have a numeric length"),
    };
    let planned_q = ((2.0 * length_bound * length_bound / (1.0 - p)).ceil() as usize).max(1);
    let q = match opts.steps_override {
        Some(q) if q < planned_q => {
            return Err(Error::PlanRejected(format!("{q} steps is below the required {planned_q}")));
        }
        Some(q) => q,
        None => planned_q,
    };
    let schedule = match (opts.schedule, &table) {
        (ScheduleRule::Uniform, Some(t)) => t.uniform_parametrization(path, tracker, q)?,
        (ScheduleRule::Subuniform { hdot_bound }, _) => {
            let mut pts = subuniform_schedule(gap_floor, hdot_bound, q)?.points;
            pts.dedup();
            *pts.last_mut().unwrap() = 1.0;
            pts
        }
        _ => unreachable!(),
    };
    let step_error_target = (1.0 - p) / (2.0 * q as f64);
    let eps = step_error_target;

    let unitary = path.kind() == PathKind::Unitary;
    let reject = |why: &str| Err(Error::PlanRejected(why.to_string()));
    let (base, n): (TimeDistribution, u64) = match (unitary, family, negative_ok) {
        (false, Family::CompactOptimal, true) => (build_compact_optimal(gap_floor)?, 1),
        (false, Family::Sinc4, true) => (TimeDistribution::sinc4(gap_floor / 4.0)?, 1),
        (false, Family::Gaussian, true) => {
            let sigma = (2.0 * (1.0 / eps).ln()).sqrt() / gap_floor;
            (TimeDistribution::gaussian(sigma, 0.0)?, 1)
        }
        (false, Family::Gaussian, false) => {
            let l = (2.0 / eps).ln().sqrt();
            let sigma = 2.0 * l / gap_floor;
            let shift = SQRT_2 * sigma * l;
            (DistSpec::Gaussian { sigma, shift, conditioned: true }.build()?, 1)
        }
        (false, Family::UniformInt, _) => return reject("integer evolution times need a unitary path"),
        (_, Family::CompactOptimal | Family::Sinc4, false) => {
            return reject("compactly supported characteristic functions need negative evolution times")
        }
        (true, Family::CompactOptimal, true) => (discretize_to_integers(&build_compact_optimal(gap_floor)?)?, 1),
        (true, Family::Sinc4, true) => (discretize_to_integers(&TimeDistribution::sinc4(gap_floor / 4.0)?)?, 1),
        (true, Family::UniformInt, neg) => {
            let q_int = (2.0 * PI / gap_floor).ceil() as u64;
            let shift = if neg { -(q_int as i64 / 2) } else { 0 };
            let n = ((1.0 / eps).log2().ceil() as u64).max(1);
            (TimeDistribution::uniform_int(q_int, shift)?, n)
        }
        (true, Family::Gaussian, _) => return reject("Gaussian times are not integers; use uniform_int or compact_optimal"),
    };
    let omega_max = if unitary { PI } else { spread.max(gap_floor) };
    let grid: Vec<f64> = (0..2048).map(|i| gap_floor + (omega_max - gap_floor) * i as f64 / 2047.0).collect();
    let effective = if n > 1 { repeat(&base, n)? } else { base.clone() };
    let step_error = if base.compact_support().is_some_and(|w| w <= gap_floor) { 0.0 } else { effective.error_bound(&grid)? };
    if step_error > eps * (1.0 + 1e-9) + 1e-15 {
        return Err(Error::PlanRejected(format!("per-step error {step_error} exceeds the target {eps}")));
    }
    let step_cost = n as f64 * base.mean_abs_cost();
    let plan = TraversalPlan {
        schedule,
        distribution: base.spec().clone(),
        repetitions: n,
        mode: opts.mode,
        seed: opts.seed,
        target_fidelity: p,
        gap_floor,
        negative_ok,
        family,
        path_kind: path.kind(),
        schedule_rule: opts.schedule,
        length_bound,
        numeric_length,
        step_error_target,
        step_error,
        step_cost,
        predicted_cost: q as f64 * step_cost,
    };
    plan.validate()?;
    Ok(plan)
}

struct Trajectory {
    cost: f64,
    step_fidelities: Vec<f64>,
    populations: Vec<f64>,
}

/// Runs a plan starting from `initial`.
pub fn execute<T: Tracking + ?Sized>(plan: &TraversalPlan, path: &OperatorPath, tracker: &T, initial: &StateVector) -> Result<TraversalReport> {
    plan.validate()?;
    if initial.dim() != path.dim() {
        return Err(Error::DimensionMismatch { expected: path.dim(), found: initial.dim() });
    }
    let start = Instant::now();
    let base = plan.distribution()?;
    if plan.path_kind == PathKind::Unitary && !base.support().is_integer() {
        return Err(Error::param("unitary paths need integer evolution times"));
    }
    let targets = track_schedule(path, tracker, &plan.schedule)?;
    let eigs = spectra(path, &plan.schedule)?;
    let n = plan.repetitions;
    let dim = path.dim();
    let mut report = TraversalReport {
        mode: plan.mode,
        schedule: plan.schedule.clone(),
        repetitions: n,
        step_fidelities: Vec::new(),
        final_fidelity: 0.0,
        final_fidelity_se: 0.0,
        total_cost: 0.0,
        predicted_cost: plan.predicted_cost,
        cost_samples: Vec::new(),
        trajectory_fidelities: Vec::new(),
        final_populations: Vec::new(),
        wall_clock_seconds: 0.0,
    };
    match plan.mode {
        ExecutionMode::Exact => {
            let effective = if n > 1 { repeat(&base, n)? } else { base.clone() };
            let mut rho: DensityOperator = initial.density();
            for (eig, target) in eigs.iter().zip(&targets[1..]) {
                rho = randomized_evolution_eigen(eig, &effective).apply(&rho)?;
                report.step_fidelities.push(clamp01(crate::qcore::fidelity(target, &rho)?));
            }
            report.final_fidelity = *report.step_fidelities.last().unwrap();
            report.total_cost = plan.predicted_cost;
            report.final_populations = (0..dim).map(|k| rho.matrix()[(k, k)].re).collect();
        }
        ExecutionMode::Trajectories { count } => {
            let runs: Vec<Trajectory> = (0..count)
                .into_par_iter()
                .map(|i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
                    rng.set_stream(i as u64);
                    let mut psi = initial.clone();
                    let mut cost = 0.0;
                    let mut fids = Vec::with_capacity(eigs.len());
                    for (eig, target) in eigs.iter().zip(&targets[1..]) {
                        for _ in 0..n {
                            let t = base.sample(&mut rng);
                            psi = eig.evolve(t, &psi);
                            cost += t.abs();
                        }
                        fids.push(clamp01(crate::qcore::overlap_sq(target, &psi)));
                    }
                    let populations = psi.amplitudes().iter().map(|a| a.norm_sqr()).collect();
                    Trajectory { cost, step_fidelities: fids, populations }
                })
                .collect();
            let m = count as f64;
            let q = plan.q();
            report.step_fidelities = (0..q).map(|j| runs.iter().map(|r| r.step_fidelities[j]).sum::<f64>() / m).collect();
            report.trajectory_fidelities = runs.iter().map(|r| r.step_fidelities[q - 1]).collect();
            report.cost_samples = runs.iter().map(|r| r.cost).collect();
            let mean = report.trajectory_fidelities.iter().sum::<f64>() / m;
            let var = if count > 1 {
                report.trajectory_fidelities.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (m - 1.0)
            } else {
                0.0
            };
            report.final_fidelity = mean;
            report.final_fidelity_se = (var / m).sqrt();
            report.total_cost = report.cost_samples.iter().sum::<f64>() / m;
            report.final_populations = (0..dim).map(|k| runs.iter().map(|r| r.populations[k]).sum::<f64>() / m).collect();
        }
    }
    report.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostStatistics {
    pub mean_cost: f64,
    /// Markov bound `1/a`.
    pub tail_bound: f64,
    /// Fraction of trajectories with cost at least `a·mean_cost`.
    pub empirical_tail: Option<f64>,
    /// Binomial standard error of the empirical fraction at the bound.
    pub standard_error: Option<f64>,
}

pub fn cost_statistics(report: &TraversalReport, a: f64) -> Result<CostStatistics> {
    if !(a > 1.0) {
        return Err(Error::param(format!("tail multiplier {a} must exceed 1")));
    }
    let mean_cost = report.predicted_cost;
    let tail_bound = 1.0 / a;
    let (empirical_tail, standard_error) = if report.cost_samples.is_empty() {
        (None, None)
    } else {
        let m = report.cost_samples.len() as f64;
        let hits = report.cost_samples.iter().filter(|c| **c >= a * mean_cost).count() as f64;
        (Some(hits / m), Some((tail_bound * (1.0 - tail_bound) / m).sqrt()))
    };
    Ok(CostStatistics { mean_cost, tail_bound, empirical_tail, standard_error })
}
