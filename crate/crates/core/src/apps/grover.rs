//! Search for marked items with `H(s) = −[s|S⟩⟨S| + (1 − s)|+⟩⟨+|]`.

use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channels::{randomized_evolution_eigen, randomized_evolution_sampled};
use crate::error::{Error, Result};
use crate::paths::{EigenpathTracker, OperatorPath, Selection};
use crate::qcore::{fidelity, overlap_sq, CMatrix, CVector, StateVector, C64};
use crate::timedist::TimeDistribution;
use crate::traversal::{execute, plan_randomization_with, ExecutionMode, Family, PlanOptions, TraversalPlan, TraversalReport};

/// Largest qubit count for the full Hilbert-space representation.
pub const MAX_FULL_QUBITS: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroverRepr {
    /// All `N = 2^n` computational basis states.
    Full,
    /// The invariant plane spanned by `|S⟩` and the part of `|+⟩` orthogonal to it.
    Subspace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroverInstance {
    pub qubits: u32,
    pub marked: Vec<u64>,
    pub repr: GroverRepr,
}

impl GroverInstance {
    pub fn new(qubits: u32, marked: u64, repr: GroverRepr) -> Result<Self> {
        Self::with_marked(qubits, vec![marked], repr)
    }

    pub fn with_marked(qubits: u32, mut marked: Vec<u64>, repr: GroverRepr) -> Result<Self> {
        if qubits == 0 || qubits > 52 {
            return Err(Error::param(format!("qubit count {qubits} outside 1..=52")));
        }
        if repr == GroverRepr::Full && qubits > MAX_FULL_QUBITS {
            return Err(Error::param(format!("full representation is limited to {MAX_FULL_QUBITS} qubits")));
        }
        marked.sort_unstable();
        marked.dedup();
        let n = 1u64 << qubits;
        if marked.is_empty() || marked.len() as u64 >= n {
            return Err(Error::param("need at least one marked and one unmarked element"));
        }
        if let Some(x) = marked.iter().find(|x| **x >= n) {
            return Err(Error::param(format!("marked element {x} outside 0..{n}")));
        }
        Ok(GroverInstance { qubits, marked, repr })
    }

    /// `N = 2^n`.
    pub fn n_items(&self) -> f64 {
        (1u64 << self.qubits) as f64
    }

    /// `N / M`, the item count seen by the two-dimensional dynamics.
    pub fn effective_items(&self) -> f64 {
        self.n_items() / self.marked.len() as f64
    }

    pub fn dim(&self) -> usize {
        match self.repr {
            GroverRepr::Full => 1usize << self.qubits,
            GroverRepr::Subspace => 2,
        }
    }

    pub fn plus_state(&self) -> StateVector {
        match self.repr {
            GroverRepr::Full => StateVector::uniform(self.dim()),
            GroverRepr::Subspace => {
                let a = (1.0 / self.effective_items()).sqrt();
                StateVector::from_real(&[a, (1.0 - a * a).sqrt()]).expect("unit vector")
            }
        }
    }

    /// Uniform superposition over the marked elements.
    pub fn marked_state(&self) -> StateVector {
        match self.repr {
            GroverRepr::Full => {
                let mut v = vec![0.0; self.dim()];
                let w = 1.0 / (self.marked.len() as f64).sqrt();
                for &x in &self.marked {
                    v[x as usize] = w;
                }
                StateVector::from_real(&v).expect("unit vector")
            }
            GroverRepr::Subspace => StateVector::basis(2, 0),
        }
    }

    /// Projector onto the marked elements (rank `M` in the full representation).
    fn marked_projector(&self) -> CMatrix {
        match self.repr {
            GroverRepr::Full => {
                let mut p = CMatrix::zeros(self.dim(), self.dim());
                for &x in &self.marked {
                    p[(x as usize, x as usize)] = C64::new(1.0, 0.0);
                }
                p
            }
            GroverRepr::Subspace => self.marked_state().projector(),
        }
    }

    pub fn hamiltonian_at(&self, s: f64) -> CMatrix {
        let ps = self.marked_projector();
        let pp = self.plus_state().projector();
        -(ps * C64::new(s, 0.0) + pp * C64::new(1.0 - s, 0.0))
    }
}

/// The search path with its analytic derivative `−(Π_S − |+⟩⟨+|)`.
pub fn grover_path(instance: &GroverInstance) -> OperatorPath {
    let ps = instance.marked_projector();
    let pp = instance.plus_state().projector();
    let deriv = -(&ps - &pp);
    let (a, b) = (ps.clone(), pp.clone());
    OperatorPath::hamiltonian(instance.dim(), move |s| -(&a * C64::new(s, 0.0) + &b * C64::new(1.0 - s, 0.0)))
        .with_derivative(move |_| deriv.clone())
        .with_norm_bound(1.0)
}

/// Ground-state tracker for [`grover_path`].
pub fn grover_tracker() -> EigenpathTracker {
    EigenpathTracker::new(Selection::Lowest)
}

/// `Δ(s) = √(1 − 4s(1 − s)(1 − 1/N))`.
pub fn grover_gap(s: f64, n_items: f64) -> f64 {
    (1.0 - 4.0 * s * (1.0 - s) * (1.0 - 1.0 / n_items)).sqrt()
}

/// Exact eigenpath length, the angle between `|+⟩` and `|S⟩`.
pub fn grover_path_length(n_items: f64) -> f64 {
    (1.0 / n_items).sqrt().acos()
}

/// `s_j = 1/2 − cot(2jδ) / (2√N)` for `jδ ≤ π/2`, clamped to `[0, 1]`,
/// ending at `s = 1`.
pub fn grover_schedule(n_items: f64, delta: f64) -> Result<Vec<f64>> {
    if !(delta > 0.0 && delta <= FRAC_PI_2) {
        return Err(Error::param(format!("step {delta} outside (0, π/2]")));
    }
    if !(n_items >= 2.0) {
        return Err(Error::param("need N ≥ 2"));
    }
    let mut out = Vec::new();
    let mut j = 1u64;
    while j as f64 * delta <= FRAC_PI_2 * (1.0 + 1e-12) {
        let x = 2.0 * j as f64 * delta;
        let s = if (x - std::f64::consts::PI).abs() < 1e-12 { 1.0 } else { 0.5 - 1.0 / (x.tan() * 2.0 * n_items.sqrt()) };
        out.push(s.clamp(0.0, 1.0));
        j += 1;
    }
    if out.last() != Some(&1.0) {
        out.push(1.0);
    }
    Ok(out)
}

/// Gap between the ground level and the next level that overlaps the plane
/// spanned by `|+⟩` and `|S⟩`, from a full eigendecomposition.
///
/// Levels outside that invariant plane are never populated and do not count.
pub fn relevant_gap(instance: &GroverInstance, s: f64) -> Result<f64> {
    let eig = grover_path(instance).spectrum_at(s)?;
    let plus = instance.plus_state();
    let marked = instance.marked_state();
    // orthonormal basis of the plane
    let c = marked.inner(&plus);
    let rest: CVector = plus.amplitudes() - marked.amplitudes() * c;
    let perp = StateVector::normalized(rest)?;
    let weight = |k: usize| {
        let v = eig.eigenvector(k);
        overlap_sq(&v, &marked) + overlap_sq(&v, &perp)
    };
    // group numerically equal eigenvalues so weights do not depend on the
    // basis the solver picked inside a degenerate eigenspace
    let e = &eig.eigenvalues;
    let mut clusters: Vec<(f64, f64)> = Vec::new();
    for k in 0..e.len() {
        match clusters.last_mut() {
            Some((v, w)) if (e[k] - *v).abs() < 1e-9 => *w += weight(k),
            _ => clusters.push((e[k], weight(k))),
        }
    }
    let mut relevant = clusters.iter().filter(|(_, w)| *w > 1e-8).map(|(v, _)| *v);
    let ground = relevant.next().ok_or_else(|| Error::param("no level overlaps the search plane"))?;
    let next = relevant.next().ok_or_else(|| Error::param("search plane has a single level"))?;
    Ok(next - ground)
}

/// One randomized measurement at `s = 1/2` with `two_point(Δ(1/2))`,
/// starting from `|+⟩`; returns the exact probability of ending in `|S⟩`.
pub fn run_grover_single_step(instance: &GroverInstance) -> Result<f64> {
    let eig = grover_path(instance).spectrum_at(0.5)?;
    let dist = TimeDistribution::two_point(grover_gap(0.5, instance.effective_items()))?;
    let rho = randomized_evolution_eigen(&eig, &dist).apply(&instance.plus_state().density())?;
    fidelity(&instance.marked_state(), &rho)
}

/// Sampled version of [`run_grover_single_step`]: fraction of `shots` runs
/// whose computational-basis measurement finds a marked element.
pub fn sample_grover_single_step(instance: &GroverInstance, shots: usize, seed: u64) -> Result<f64> {
    if shots == 0 {
        return Err(Error::param("shots must be positive"));
    }
    let eig = grover_path(instance).spectrum_at(0.5)?;
    let dist = TimeDistribution::two_point(grover_gap(0.5, instance.effective_items()))?;
    let plus = instance.plus_state();
    let marked = instance.marked_state();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..shots {
        let (psi, _) = randomized_evolution_sampled(&eig, &dist, &plus, &mut rng);
        // marked elements carry equal amplitude, so this is the total marked weight
        if rng.random::<f64>() < overlap_sq(&marked, &psi) {
            hits += 1;
        }
    }
    Ok(hits as f64 / shots as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroverRunOptions {
    pub p: f64,
    pub family: Family,
    pub negative_ok: bool,
    pub mode: ExecutionMode,
    pub seed: u64,
}

impl Default for GroverRunOptions {
    fn default() -> Self {
        GroverRunOptions { p: 0.8, family: Family::CompactOptimal, negative_ok: true, mode: ExecutionMode::Exact, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroverRun {
    pub plan: TraversalPlan,
    pub report: TraversalReport,
    /// Probability of measuring a marked element at the end.
    pub success_probability: f64,
}

/// Plans with `L' = π/2` and gap floor `Δ(1/2)`, then runs from `|+⟩`.
pub fn plan_grover(instance: &GroverInstance, opts: &GroverRunOptions) -> Result<TraversalPlan> {
    if instance.repr == GroverRepr::Full && instance.marked.len() > 1 {
        return Err(Error::param("several marked elements need the subspace representation"));
    }
    let path = grover_path(instance);
    let floor = grover_gap(0.5, instance.effective_items());
    let popts = PlanOptions { length_bound: Some(FRAC_PI_2), mode: opts.mode, seed: opts.seed, ..PlanOptions::default() };
    plan_randomization_with(&path, &grover_tracker(), opts.p, floor, opts.family, opts.negative_ok, &popts)
}

pub fn run_grover(instance: &GroverInstance, opts: &GroverRunOptions) -> Result<GroverRun> {
    let plan = plan_grover(instance, opts)?;
    let report = execute(&plan, &grover_path(instance), &grover_tracker(), &instance.plus_state())?;
    let success_probability = match instance.repr {
        GroverRepr::Full => instance.marked.iter().map(|x| report.final_populations[*x as usize]).sum(),
        GroverRepr::Subspace => report.final_populations[0],
    };
    Ok(GroverRun { plan, report, success_probability })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{path_length, ArcLengthTable};
    use proptest::prelude::*;

    #[test]
    fn endpoints() {
        let inst = GroverInstance::new(4, 5, GroverRepr::Full).unwrap();
        let path = grover_path(&inst);
        let tr = grover_tracker();
        let a = tr.eigenstate_at(&path, 0.0, None).unwrap();
        assert!((overlap_sq(&a.state, &inst.plus_state()) - 1.0).abs() < 1e-12);
        let b = tr.eigenstate_at(&path, 1.0, None).unwrap();
        assert!((overlap_sq(&b.state, &StateVector::basis(16, 5)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gap_formula_values() {
        assert!((grover_gap(0.5, 4.0) - 0.5).abs() < 1e-15);
        assert_eq!(grover_gap(0.0, 1000.0), 1.0);
        assert!((grover_gap(0.5, 1024.0) - 1.0 / 32.0).abs() < 1e-15);
    }

    #[test]
    fn gap_matches_eigensolver() {
        for qubits in [2u32, 4, 6] {
            for repr in [GroverRepr::Full, GroverRepr::Subspace] {
                let inst = GroverInstance::new(qubits, 1, repr).unwrap();
                let path = grover_path(&inst);
                for k in 0..20 {
                    let s = k as f64 / 19.0;
                    let spec = path.spectrum_at(s).unwrap();
                    let numeric = path.gap_of(&spec, 0);
                    assert!((numeric - grover_gap(s, inst.n_items())).abs() < 1e-10, "n={qubits} s={s}");
                }
            }
        }
    }

    #[test]
    fn representations_agree() {
        let full = GroverInstance::new(5, 9, GroverRepr::Full).unwrap();
        let sub = GroverInstance::new(5, 9, GroverRepr::Subspace).unwrap();
        let (pf, ps) = (grover_path(&full), grover_path(&sub));
        let tr = grover_tracker();
        for k in 0..=10 {
            let s = k as f64 / 10.0;
            let (ef, es) = (pf.spectrum_at(s).unwrap(), ps.spectrum_at(s).unwrap());
            assert!((ef.eigenvalues[0] - es.eigenvalues[0]).abs() < 1e-10);
            let tf = tr.eigenstate_at(&pf, s, None).unwrap().state;
            let ts = tr.eigenstate_at(&ps, s, None).unwrap().state;
            let o1 = overlap_sq(&tf, &full.marked_state());
            let o2 = overlap_sq(&ts, &sub.marked_state());
            assert!((o1 - o2).abs() < 1e-10);
        }
    }

    #[test]
    fn length_approaches_half_pi() {
        for qubits in [6u32, 8, 10] {
            let inst = GroverInstance::new(qubits, 0, GroverRepr::Subspace).unwrap();
            let l = path_length(&grover_path(&inst), &grover_tracker(), 1e-10).unwrap();
            let n = inst.n_items();
            assert!((l - grover_path_length(n)).abs() < 1e-6);
            assert!((l - FRAC_PI_2).abs() <= 2.0 / n.sqrt());
        }
    }

    #[test]
    fn schedule_formula() {
        let s = grover_schedule(256.0, std::f64::consts::FRAC_PI_4).unwrap();
        assert_eq!(s.len(), 2);
        assert!((s[0] - 0.5).abs() < 1e-15);
        assert_eq!(s[1], 1.0);
    }

    #[test]
    fn schedule_tracks_uniform_parametrization() {
        let inst = GroverInstance::new(8, 3, GroverRepr::Subspace).unwrap();
        let path = grover_path(&inst);
        let tr = grover_tracker();
        let q = 8;
        let table = ArcLengthTable::build(&path, &tr, 1e-10).unwrap();
        let uniform = table.uniform_parametrization(&path, &tr, q).unwrap();
        let formula = grover_schedule(256.0, FRAC_PI_2 / q as f64).unwrap();
        assert_eq!(formula.len(), q);
        let worst = uniform.iter().zip(&formula).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst <= 0.02, "{worst}");
    }

    #[test]
    fn single_step_is_about_half() {
        let big = GroverInstance::new(10, 17, GroverRepr::Subspace).unwrap();
        assert!((run_grover_single_step(&big).unwrap() - 0.5).abs() <= 0.05);
        let small = GroverInstance::new(6, 17, GroverRepr::Full).unwrap();
        assert!((run_grover_single_step(&small).unwrap() - 0.5).abs() <= 0.15);
        // 2D closed form: ½ Σ_k |⟨k|+⟩|²|⟨S|k⟩|² over the two eigenvectors at s = 1/2
        let sub = GroverInstance::new(6, 17, GroverRepr::Subspace).unwrap();
        let full = run_grover_single_step(&small).unwrap();
        assert!((run_grover_single_step(&sub).unwrap() - full).abs() < 1e-10);
    }

    #[test]
    fn single_step_converges_monotonically() {
        let mut prev = f64::INFINITY;
        for qubits in 4..=12 {
            let inst = GroverInstance::new(qubits, 0, GroverRepr::Subspace).unwrap();
            let d = (run_grover_single_step(&inst).unwrap() - 0.5).abs();
            assert!(d < prev);
            prev = d;
        }
    }

    #[test]
    fn sampled_single_step_agrees() {
        let inst = GroverInstance::new(6, 2, GroverRepr::Subspace).unwrap();
        let exact = run_grover_single_step(&inst).unwrap();
        let shots = 4000;
        let est = sample_grover_single_step(&inst, shots, 5).unwrap();
        let se = (exact * (1.0 - exact) / shots as f64).sqrt();
        assert!((est - exact).abs() <= 4.0 * se);
    }

    #[test]
    fn multi_marked_gap_grows() {
        for qubits in [4u32, 5, 6] {
            let one = GroverInstance::new(qubits, 0, GroverRepr::Full).unwrap();
            let base = relevant_gap(&one, 0.5).unwrap();
            assert!((base - grover_gap(0.5, one.n_items())).abs() < 1e-10);
            let mut prev = base;
            for m in 2..=5u64 {
                let inst = GroverInstance::with_marked(qubits, (0..m).map(|k| 3 * k).collect(), GroverRepr::Full).unwrap();
                let g = relevant_gap(&inst, 0.5).unwrap();
                assert!(g >= prev - 1e-12);
                assert!((g - grover_gap(0.5, inst.effective_items())).abs() < 1e-10);
                prev = g;
            }
        }
    }

    #[test]
    fn end_to_end_n64() {
        for p in [0.5, 0.8] {
            let inst = GroverInstance::new(6, 11, GroverRepr::Full).unwrap();
            let run = run_grover(&inst, &GroverRunOptions { p, ..GroverRunOptions::default() }).unwrap();
            assert!(run.report.final_fidelity >= p);
            let q = (2.0 * FRAC_PI_2 * FRAC_PI_2 / (1.0 - p)).ceil() as usize;
            assert_eq!(run.plan.q(), q);
            let cost = q as f64 * crate::timedist::build_compact_optimal(0.125).unwrap().mean_abs_cost();
            assert!((run.report.total_cost - cost).abs() <= 1e-12 * cost);
            assert!((run.success_probability - run.report.final_fidelity).abs() < 1e-10);
        }
    }

    #[test]
    fn invalid_instances() {
        assert!(GroverInstance::new(11, 0, GroverRepr::Full).is_err());
        assert!(GroverInstance::new(3, 8, GroverRepr::Subspace).is_err());
        assert!(GroverInstance::with_marked(1, vec![0, 1], GroverRepr::Full).is_err());
        assert!(grover_schedule(16.0, 0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn gap_formula_matches_subspace(s in 0.0f64..=1.0, qubits in 1u32..=20) {
            let inst = GroverInstance::new(qubits, 0, GroverRepr::Subspace).unwrap();
            let path = grover_path(&inst);
            let spec = path.spectrum_at(s).unwrap();
            prop_assert!((path.gap_of(&spec, 0) - grover_gap(s, inst.n_items())).abs() < 1e-10);
        }
    }
}
