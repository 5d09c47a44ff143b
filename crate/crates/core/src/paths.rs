//! Continuous operator families `H(s)` / `U(s)`, tracking of the continued
//! eigenstate, path length and parametrizations of the eigenpath.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{
    angular_distance, eigendecompose_unitary, hermitian_deviation, operator_norm, wrap_phase,
    EigenSystem, HermitianOperator, StateVector, C64, CMatrix,
};

/// Step used for central differences when no derivative is supplied.
pub const FD_STEP: f64 = 1e-5;

/// Gaps at or below this value count as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Hamiltonian,
    /// Unitary family; eigenphases and phase gaps replace energies and gaps.
    Unitary,
}

type Evaluator = Arc<dyn Fn(f64) -> CMatrix + Send + Sync>;

/// A continuous family of operators indexed by `s ∈ [0, 1]`.
#[derive(Clone)]
pub struct OperatorPath {
    kind: PathKind,
    dim: usize,
    evaluator: Evaluator,
    derivative: Option<Evaluator>,
    norm_bound: f64,
}

impl fmt::Debug for OperatorPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorPath")
            .field("kind", &self.kind)
            .field("dim", &self.dim)
            .field("has_derivative", &self.derivative.is_some())
            .field("norm_bound", &self.norm_bound)
            .finish()
    }
}

impl OperatorPath {
    pub fn hamiltonian(dim: usize, evaluator: impl Fn(f64) -> CMatrix + Send + Sync + 'static) -> Self {
        OperatorPath { kind: PathKind::Hamiltonian, dim, evaluator: Arc::new(evaluator), derivative: None, norm_bound: 1.0 }
    }

    pub fn unitary(dim: usize, evaluator: impl Fn(f64) -> CMatrix + Send + Sync + 'static) -> Self {
        OperatorPath { kind: PathKind::Unitary, dim, evaluator: Arc::new(evaluator), derivative: None, norm_bound: 1.0 }
    }

    pub fn with_derivative(mut self, derivative: impl Fn(f64) -> CMatrix + Send + Sync + 'static) -> Self {
        self.derivative = Some(Arc::new(derivative));
        self
    }

    pub fn with_norm_bound(mut self, bound: f64) -> Self {
        self.norm_bound = bound;
        self
    }

    /// `H(s) = H` for all `s`.
    pub fn constant(h: HermitianOperator) -> Self {
        let n = h.dim();
        let m = h.into_inner();
        OperatorPath::hamiltonian(n, move |_| m.clone()).with_derivative(move |_| CMatrix::zeros(n, n))
    }

    /// `H(s) = (1 − s) A + s B`.
    pub fn linear(a: HermitianOperator, b: HermitianOperator) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
        }
        let n = a.dim();
        let (a, b) = (a.into_inner(), b.into_inner());
        let diff = &b - &a;
        let bound = operator_norm(&a).max(operator_norm(&b));
        Ok(OperatorPath::hamiltonian(n, move |s| &a * C64::new(1.0 - s, 0.0) + &b * C64::new(s, 0.0))
            .with_derivative(move |_| diff.clone())
            .with_norm_bound(bound))
    }

    /// `H(s) = −|φ(s)⟩⟨φ(s)|` with `φ(s) = cos(as)|0⟩ + sin(as)|1⟩`; the ground
    /// state rotates at constant speed `a` with unit gap.
    pub fn two_level_rotation(rate: f64) -> Self {
        let proj = move |s: f64| {
            let (c, sn) = ((rate * s).cos(), (rate * s).sin());
            CMatrix::from_row_slice(2, 2, &[C64::new(-c * c, 0.0), C64::new(-c * sn, 0.0), C64::new(-c * sn, 0.0), C64::new(-sn * sn, 0.0)])
        };
        let deriv = move |s: f64| {
            // d/ds of −φφᵀ: −a [[−sin 2as, cos 2as], [cos 2as, sin 2as]]
            let (c2, s2) = ((2.0 * rate * s).cos(), (2.0 * rate * s).sin());
            CMatrix::from_row_slice(2, 2, &[C64::new(rate * s2, 0.0), C64::new(-rate * c2, 0.0), C64::new(-rate * c2, 0.0), C64::new(-rate * s2, 0.0)])
        };
        OperatorPath::hamiltonian(2, proj).with_derivative(deriv)
    }

    pub fn kind(&self) -> PathKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    pub fn has_derivative(&self) -> bool {
        self.derivative.is_some()
    }

    pub fn operator_at(&self, s: f64) -> CMatrix {
        (self.evaluator)(s)
    }

    /// Spectral decomposition at `s`. Hamiltonians are symmetrized after a
    /// Hermiticity check; unitaries are decomposed into quasi-energies.
    pub fn spectrum_at(&self, s: f64) -> Result<EigenSystem> {
        let m = self.operator_at(s);
        if m.nrows() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: m.nrows() });
        }
        match self.kind {
            PathKind::Hamiltonian => {
                let deviation = hermitian_deviation(&m);
                if deviation > 1e-10 {
                    return Err(Error::NotHermitian { deviation });
                }
                let sym = (&m + m.adjoint()) * C64::new(0.5, 0.0);
                Ok(HermitianOperator::new(sym)?.eigen())
            }
            PathKind::Unitary => eigendecompose_unitary(&m),
        }
    }

    /// `∂_s H(s)`, from the supplied derivative or by central differences
    /// (one-sided second order at the ends of `[0, 1]`).
    pub fn derivative_at(&self, s: f64) -> CMatrix {
        if let Some(d) = &self.derivative {
            return d(s);
        }
        let h = FD_STEP;
        let f = |x: f64| self.operator_at(x);
        if s - h < 0.0 {
            (f(s) * C64::new(-3.0, 0.0) + f(s + h) * C64::new(4.0, 0.0) - f(s + 2.0 * h)) / C64::new(2.0 * h, 0.0)
        } else if s + h > 1.0 {
            (f(s) * C64::new(3.0, 0.0) - f(s - h) * C64::new(4.0, 0.0) + f(s - 2.0 * h)) / C64::new(2.0 * h, 0.0)
        } else {
            (f(s + h) - f(s - h)) / C64::new(2.0 * h, 0.0)
        }
    }

    pub fn derivative_norm_at(&self, s: f64) -> f64 {
        operator_norm(&self.derivative_at(s))
    }

    /// `sup_s ‖∂_s H(s)‖` over `samples + 1` equally spaced points.
    pub fn derivative_norm_sup(&self, samples: usize) -> f64 {
        let samples = samples.max(1);
        (0..=samples).map(|k| self.derivative_norm_at(k as f64 / samples as f64)).fold(0.0, f64::max)
    }

    /// Distance between two levels: plain difference for Hamiltonians,
    /// wrapped phase difference for unitaries.
    pub fn level_distance(&self, a: f64, b: f64) -> f64 {
        match self.kind {
            PathKind::Hamiltonian => (a - b).abs(),
            PathKind::Unitary => wrap_phase(a - b).abs(),
        }
    }

    /// Gap of level `k` to the rest of the spectrum.
    pub fn gap_of(&self, spectrum: &EigenSystem, k: usize) -> f64 {
        let e = spectrum.eigenvalues[k];
        spectrum
            .eigenvalues
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .map(|(_, &ej)| self.level_distance(e, ej))
            .fold(f64::INFINITY, f64::min)
    }
}

/// How the tracked level is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "index")]
pub enum Selection {
    /// Level with this index (ascending order) at the first query, then
    /// continued by overlap.
    Index(usize),
    Lowest,
    Highest,
    /// Always continue from the previous state by maximal overlap.
    Overlap,
}

/// Eigenstate at one point of the path.
#[derive(Debug, Clone)]
pub struct TrackedEigenstate {
    pub s: f64,
    pub state: StateVector,
    pub energy: f64,
    pub gap: f64,
    pub index: usize,
}

/// Follows a nondegenerate eigenstate along a path.
///
/// Phases follow the geometric convention: every returned state has a real
/// nonnegative overlap with the previous one.
#[derive(Debug, Clone)]
pub struct EigenpathTracker {
    pub selection: Selection,
    /// Minimum squared overlap accepted between adjacent samples.
    pub threshold: f64,
    pub max_refinements: u32,
    last: Option<(f64, StateVector)>,
}

impl EigenpathTracker {
    pub fn new(selection: Selection) -> Self {
        EigenpathTracker { selection, threshold: 0.5, max_refinements: 20, last: None }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn reset(&mut self) {
        self.last = None;
    }

    pub fn last(&self) -> Option<&(f64, StateVector)> {
        self.last.as_ref()
    }

    fn continues_by_overlap(&self) -> bool {
        matches!(self.selection, Selection::Index(_) | Selection::Overlap)
    }

    /// Tracked eigenstate at `s`, continuing from `prev` when given.
    pub fn eigenstate_at(&self, path: &OperatorPath, s: f64, prev: Option<&StateVector>) -> Result<TrackedEigenstate> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::param(format!("s = {s} outside [0, 1]")));
        }
        let spec = path.spectrum_at(s)?;
        let n = spec.dim();
        let index = match (self.selection, prev) {
            (Selection::Lowest, _) => 0,
            (Selection::Highest, _) => n - 1,
            (Selection::Index(k), None) => {
                if k >= n {
                    return Err(Error::param(format!("level index {k} out of range for dimension {n}")));
                }
                k
            }
            (Selection::Overlap, None) => {
                return Err(Error::param("overlap continuation needs a previous state"));
            }
            (_, Some(p)) => {
                let (best, ov) = (0..n)
                    .map(|j| (j, spec.eigenvector(j).inner(p).norm_sqr()))
                    .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
                if ov < self.threshold {
                    return Err(Error::TrackingLost { s, overlap: ov });
                }
                best
            }
        };
        let gap = path.gap_of(&spec, index);
        if gap <= DEGENERACY_TOL {
            return Err(Error::Degenerate { s, gap });
        }
        let raw = spec.eigenvector(index);
        let state = match prev {
            Some(p) => raw.aligned_to(p),
            None => canonical_phase(raw),
        };
        Ok(TrackedEigenstate { s, state, energy: spec.eigenvalues[index], gap, index })
    }

    /// Continues from the anchor `(s0, prev)` to `s`, halving the step when
    /// the overlap criterion fails (up to `max_refinements` times).
    pub fn track_from(&self, path: &OperatorPath, s0: f64, prev: &StateVector, s: f64) -> Result<TrackedEigenstate> {
        self.track_from_depth(path, s0, prev, s, 0)
    }

    fn track_from_depth(&self, path: &OperatorPath, s0: f64, prev: &StateVector, s: f64, depth: u32) -> Result<TrackedEigenstate> {
        match self.eigenstate_at(path, s, Some(prev)) {
            Err(Error::TrackingLost { .. }) if self.continues_by_overlap() && depth < self.max_refinements => {
                let mid = 0.5 * (s0 + s);
                let m = self.track_from_depth(path, s0, prev, mid, depth + 1)?;
                self.track_from_depth(path, mid, &m.state, s, depth + 1)
            }
            other => other,
        }
    }

    /// Stateful query: continues from the last returned state.
    pub fn advance(&mut self, path: &OperatorPath, s: f64) -> Result<TrackedEigenstate> {
        let t = match &self.last {
            None => self.eigenstate_at(path, s, None)?,
            Some((s0, prev)) => self.track_from(path, *s0, prev, s)?,
        };
        self.last = Some((s, t.state.clone()));
        Ok(t)
    }
}

/// Anything that can follow a chosen eigenstate along a path.
pub trait Tracking: Send + Sync {
    /// Tracked eigenstate at `s`, continuing from `prev` when given.
    fn eigenstate_at(&self, path: &OperatorPath, s: f64, prev: Option<&StateVector>) -> Result<TrackedEigenstate>;

    /// Continues from the anchor `(s0, prev)` to `s`.
    fn track_from(&self, path: &OperatorPath, s0: f64, prev: &StateVector, s: f64) -> Result<TrackedEigenstate>;
}

impl Tracking for EigenpathTracker {
    fn eigenstate_at(&self, path: &OperatorPath, s: f64, prev: Option<&StateVector>) -> Result<TrackedEigenstate> {
        EigenpathTracker::eigenstate_at(self, path, s, prev)
    }

    fn track_from(&self, path: &OperatorPath, s0: f64, prev: &StateVector, s: f64) -> Result<TrackedEigenstate> {
        EigenpathTracker::track_from(self, path, s0, prev, s)
    }
}

type StateFn = Arc<dyn Fn(f64) -> StateVector + Send + Sync>;
type GapFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Eigenstate family known in closed form, with a caller-supplied gap.
///
/// Used when the tracked eigenvalue is degenerate with levels the dynamics
/// never populates to first order, so overlap tracking is ill defined.
#[derive(Clone)]
pub struct KnownEigenpath {
    state: StateFn,
    gap: GapFn,
}

impl fmt::Debug for KnownEigenpath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("KnownEigenpath")
    }
}

impl KnownEigenpath {
    pub fn new(
        state: impl Fn(f64) -> StateVector + Send + Sync + 'static,
        gap: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        KnownEigenpath { state: Arc::new(state), gap: Arc::new(gap) }
    }
}

impl Tracking for KnownEigenpath {
    fn eigenstate_at(&self, path: &OperatorPath, s: f64, prev: Option<&StateVector>) -> Result<TrackedEigenstate> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::param(format!("s = {s} outside [0, 1]")));
        }
        let raw = (self.state)(s);
        if raw.dim() != path.dim() {
            return Err(Error::DimensionMismatch { expected: path.dim(), found: raw.dim() });
        }
        let gap = (self.gap)(s);
        if gap <= DEGENERACY_TOL {
            return Err(Error::Degenerate { s, gap });
        }
        let state = match prev {
            Some(p) => raw.aligned_to(p),
            None => raw,
        };
        Ok(TrackedEigenstate { s, state, energy: 0.0, gap, index: 0 })
    }

    fn track_from(&self, path: &OperatorPath, _s0: f64, prev: &StateVector, s: f64) -> Result<TrackedEigenstate> {
        self.eigenstate_at(path, s, Some(prev))
    }
}

/// Fixes the global phase so the largest-magnitude amplitude is real positive.
fn canonical_phase(v: StateVector) -> StateVector {
    let amps = v.amplitudes();
    let (mut best, mut mag) = (0, -1.0);
    for (i, a) in amps.iter().enumerate() {
        if a.norm() > mag + 1e-12 {
            best = i;
            mag = a.norm();
        }
    }
    let a = amps[best];
    if a.norm() == 0.0 {
        return v;
    }
    let phase = a.conj() / a.norm();
    StateVector::from_unit_unchecked(amps * phase)
}

/// Eigenstate, energy and gap at `s` (stateless form).
pub fn eigenstate_at(path: &OperatorPath, tracker: &EigenpathTracker, s: f64, prev: Option<&StateVector>) -> Result<(StateVector, f64, f64)> {
    let t = tracker.eigenstate_at(path, s, prev)?;
    Ok((t.state, t.energy, t.gap))
}

#[derive(Debug, Clone)]
struct Node {
    s: f64,
    length: f64,
    state: StateVector,
}

/// Cumulative eigenpath length `L(s)` on an adaptively refined grid.
#[derive(Debug, Clone)]
pub struct ArcLengthTable {
    nodes: Vec<Node>,
    pub tolerance: f64,
    /// Largest accepted refinement increment, relative to its segment width.
    pub last_increment: f64,
    pub converged: bool,
}

const INITIAL_SEGMENTS: usize = 16;
const MAX_DEPTH: u32 = 40;

impl ArcLengthTable {
    /// Builds the table by recursive bisection: a segment is accepted once
    /// splitting it raises the summed angular distance by at most
    /// `tol × width`.
    pub fn build<T: Tracking + ?Sized>(path: &OperatorPath, tracker: &T, tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::param("arc-length tolerance must be positive"));
        }
        let first = tracker.eigenstate_at(path, 0.0, None)?;
        let mut nodes = vec![Node { s: 0.0, length: 0.0, state: first.state }];
        let mut worst = 0.0f64;
        let mut converged = true;
        for k in 0..INITIAL_SEGMENTS {
            let a = k as f64 / INITIAL_SEGMENTS as f64;
            let b = (k + 1) as f64 / INITIAL_SEGMENTS as f64;
            let left = nodes.last().unwrap().clone();
            let right = tracker.track_from(path, a, &left.state, b)?;
            let chord = angular_distance(&left.state, &right.state)?;
            let mut out = Vec::new();
            refine(path, tracker, (a, &left.state), (b, &right.state), chord, tol, 0, &mut out, &mut worst, &mut converged)?;
            let mut length = left.length;
            for (s, theta, state) in out {
                length += theta;
                nodes.push(Node { s, length, state });
            }
        }
        Ok(ArcLengthTable { nodes, tolerance: tol, last_increment: worst, converged })
    }

    pub fn total(&self) -> f64 {
        self.nodes.last().map_or(0.0, |n| n.length)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().map(|n| (n.s, n.length))
    }

    /// `L(s)` for arbitrary `s`, measured from the nearest table node below.
    pub fn length_at<T: Tracking + ?Sized>(&self, path: &OperatorPath, tracker: &T, s: f64) -> Result<f64> {
        let k = self.node_below(s);
        let node = &self.nodes[k];
        if s == node.s {
            return Ok(node.length);
        }
        let st = tracker.track_from(path, node.s, &node.state, s)?;
        Ok(node.length + angular_distance(&node.state, &st.state)?)
    }

    fn node_below(&self, s: f64) -> usize {
        match self.nodes.binary_search_by(|n| n.s.total_cmp(&s)) {
            Ok(k) => k,
            Err(k) => k.saturating_sub(1),
        }
    }

    /// `s(l) = inf{s : L(s) ≥ l}` at `l_j = jL/q`, `j = 1..=q`.
    pub fn uniform_parametrization<T: Tracking + ?Sized>(&self, path: &OperatorPath, tracker: &T, q: usize) -> Result<Vec<f64>> {
        if !self.converged {
            return Err(Error::Unconverged { increment: self.last_increment });
        }
        if q == 0 {
            return Err(Error::param("q must be positive"));
        }
        let total = self.total();
        let mut out = Vec::with_capacity(q);
        for j in 1..=q {
            if j == q {
                out.push(1.0);
                continue;
            }
            let target = total * j as f64 / q as f64;
            out.push(self.invert(path, tracker, target)?);
        }
        Ok(out)
    }

    fn invert<T: Tracking + ?Sized>(&self, path: &OperatorPath, tracker: &T, target: f64) -> Result<f64> {
        // First node whose cumulative length reaches the target.
        let k = self.nodes.partition_point(|n| n.length < target);
        if k == 0 {
            return Ok(0.0);
        }
        if k >= self.nodes.len() {
            return Ok(1.0);
        }
        let lo_node = &self.nodes[k - 1];
        let hi_node = &self.nodes[k];
        let need = target - lo_node.length;
        let (mut lo, mut hi) = (lo_node.s, hi_node.s);
        let tol = self.tolerance * 1e-2;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let st = tracker.track_from(path, lo_node.s, &lo_node.state, mid)?;
            let theta = angular_distance(&lo_node.state, &st.state)?;
            if (theta - need).abs() <= tol || hi - lo < 1e-15 {
                return Ok(mid);
            }
            if theta < need {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

#[allow(clippy::too_many_arguments)]
fn refine<T: Tracking + ?Sized>(
    path: &OperatorPath,
    tracker: &T,
    left: (f64, &StateVector),
    right: (f64, &StateVector),
    chord: f64,
    tol: f64,
    depth: u32,
    out: &mut Vec<(f64, f64, StateVector)>,
    worst: &mut f64,
    converged: &mut bool,
) -> Result<()> {
    let (a, sa) = left;
    let (b, sb) = right;
    let m = 0.5 * (a + b);
    let mid = tracker.track_from(path, a, sa, m)?;
    let t1 = angular_distance(sa, &mid.state)?;
    let t2 = angular_distance(&mid.state, sb)?;
    let increment = t1 + t2 - chord;
    let width = b - a;
    if increment <= tol * width || depth >= MAX_DEPTH {
        if increment > tol * width {
            *converged = false;
        }
        *worst = worst.max(increment / width);
        out.push((m, t1, mid.state));
        out.push((b, t2, sb.clone()));
        return Ok(());
    }
    refine(path, tracker, (a, sa), (m, &mid.state), t1, tol, depth + 1, out, worst, converged)?;
    refine(path, tracker, (m, &mid.state), (b, sb), t2, tol, depth + 1, out, worst, converged)
}

/// Total eigenpath length `L`.
pub fn path_length<T: Tracking + ?Sized>(path: &OperatorPath, tracker: &T, tol: f64) -> Result<f64> {
    Ok(ArcLengthTable::build(path, tracker, tol)?.total())
}

/// Summed angular distances over uniform subdivisions with `2^k` segments,
/// `k = 0..levels`. The sequence is nondecreasing.
pub fn refinement_sequence<T: Tracking + ?Sized>(path: &OperatorPath, tracker: &T, levels: u32) -> Result<Vec<f64>> {
    let finest = 1usize << levels;
    let mut states = Vec::with_capacity(finest + 1);
    let mut prev = tracker.eigenstate_at(path, 0.0, None)?;
    states.push(prev.state.clone());
    for k in 1..=finest {
        let s = k as f64 / finest as f64;
        let next = tracker.track_from(path, prev.s, &prev.state, s)?;
        states.push(next.state.clone());
        prev = next;
    }
    (0..=levels)
        .map(|level| {
            let stride = finest >> level;
            let mut sum = 0.0;
            for k in (0..finest).step_by(stride) {
                sum += angular_distance(&states[k], &states[k + stride])?;
            }
            Ok(sum)
        })
        .collect()
}

/// Schedule from the linear parametrization `s(l) = Δ l / ‖Ḣ‖`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubuniformSchedule {
    pub points: Vec<f64>,
    /// `L' = ‖Ḣ‖ / Δ`.
    pub length_bound: f64,
}

pub fn subuniform_schedule(gap_floor: f64, hdot_bound: f64, q: usize) -> Result<SubuniformSchedule> {
    if !(gap_floor > 0.0) {
        return Err(Error::param("gap floor must be positive"));
    }
    if !(hdot_bound > 0.0) {
        return Err(Error::param("derivative bound must be positive"));
    }
    if q == 0 {
        return Err(Error::param("q must be positive"));
    }
    let length_bound = hdot_bound / gap_floor;
    let points = (1..=q)
        .map(|j| {
            let l = j as f64 * length_bound / q as f64;
            (gap_floor * l / hdot_bound).min(1.0)
        })
        .collect();
    Ok(SubuniformSchedule { points, length_bound })
}

/// Finite-difference check of `‖∂_s ψ‖ ≤ ‖∂_s H‖ / |Δ(s)|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeBound {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

pub fn derivative_bound_check<T: Tracking + ?Sized>(path: &OperatorPath, tracker: &T, s: f64, h: f64) -> Result<DerivativeBound> {
    if !(h > 0.0) {
        return Err(Error::param("step must be positive"));
    }
    let centre = tracker.eigenstate_at(path, s, None)?;
    let (a, b) = ((s - h).max(0.0), (s + h).min(1.0));
    let left = tracker.track_from(path, s, &centre.state, a)?;
    let right = tracker.track_from(path, s, &centre.state, b)?;
    let lhs = (right.state.amplitudes() - left.state.amplitudes()).norm() / (b - a);
    // For unitaries the relevant separation is the chord |e^{iθ} − e^{iθ'}|.
    let separation = match path.kind() {
        PathKind::Hamiltonian => centre.gap,
        PathKind::Unitary => 2.0 * (centre.gap / 2.0).sin(),
    };
    let rhs = path.derivative_norm_at(s) / separation;
    let pass = lhs <= rhs * (1.0 + 1e-6) + 1e-8;
    Ok(DerivativeBound { lhs, rhs, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{max_abs, random};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4};

    #[test]
    fn constant_path_has_zero_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let path = OperatorPath::constant(random::hermitian(4, 1.0, &mut rng));
        let tr = EigenpathTracker::new(Selection::Lowest);
        assert!(path_length(&path, &tr, 1e-6).unwrap() < 1e-12);
        let d = derivative_bound_check(&path, &tr, 0.3, 1e-5).unwrap();
        assert!(d.lhs < 1e-9 && d.pass);
    }

    #[test]
    fn rotation_length_is_rate() {
        for rate in [0.3, 1.0, FRAC_PI_2] {
            let path = OperatorPath::two_level_rotation(rate);
            let tr = EigenpathTracker::new(Selection::Lowest);
            let l = path_length(&path, &tr, 1e-7).unwrap();
            assert!((l - rate).abs() < 1e-6, "rate {rate}: {l}");
        }
    }

    #[test]
    fn rotation_uniform_parametrization_is_equally_spaced() {
        let path = OperatorPath::two_level_rotation(1.2);
        let tr = EigenpathTracker::new(Selection::Lowest);
        let table = ArcLengthTable::build(&path, &tr, 1e-8).unwrap();
        let q = 7;
        let s = table.uniform_parametrization(&path, &tr, q).unwrap();
        for (j, sj) in s.iter().enumerate() {
            assert!((sj - (j + 1) as f64 / q as f64).abs() < 1e-6, "{s:?}");
        }
        assert_eq!(table.uniform_parametrization(&path, &tr, 1).unwrap(), vec![1.0]);
    }

    #[test]
    fn refinement_is_monotone() {
        let path = OperatorPath::two_level_rotation(1.4);
        let tr = EigenpathTracker::new(Selection::Lowest);
        let seq = refinement_sequence(&path, &tr, 6).unwrap();
        assert!(seq.windows(2).all(|w| w[1] >= w[0] - 1e-15), "{seq:?}");
    }

    #[test]
    fn linear_path_derivative_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random::hermitian(4, 1.0, &mut rng);
        let b = random::hermitian(4, 1.0, &mut rng);
        let expected = operator_norm(&(b.matrix() - a.matrix()));
        let path = OperatorPath::linear(a, b).unwrap();
        assert!((path.derivative_norm_sup(8) - expected).abs() < 1e-12);
    }

    #[test]
    fn finite_difference_derivative_matches_analytic() {
        let analytic = OperatorPath::two_level_rotation(0.9);
        let numeric = OperatorPath::hamiltonian(2, {
            let p = analytic.clone();
            move |s| p.operator_at(s)
        });
        for s in [0.0, 0.4, 1.0] {
            let d = max_abs(&(analytic.derivative_at(s) - numeric.derivative_at(s)));
            assert!(d < 1e-8, "s={s}: {d}");
        }
    }

    #[test]
    fn subuniform_schedule_points() {
        let sched = subuniform_schedule(0.5, 2.0, 4).unwrap();
        assert_eq!(sched.length_bound, 4.0);
        assert_eq!(sched.points, vec![0.25, 0.5, 0.75, 1.0]);
        assert_eq!(subuniform_schedule(0.5, 1.0, 1).unwrap().points, vec![1.0]);
        assert!(subuniform_schedule(0.0, 1.0, 3).is_err());
    }

    #[test]
    fn degenerate_level_is_reported() {
        let path = OperatorPath::constant(HermitianOperator::diagonal(&[0.0, 0.0, 1.0]));
        let tr = EigenpathTracker::new(Selection::Lowest);
        assert!(matches!(tr.eigenstate_at(&path, 0.5, None), Err(Error::Degenerate { .. })));
    }

    #[test]
    fn tracking_lost_without_refinement() {
        let path = OperatorPath::two_level_rotation(FRAC_PI_4);
        let mut tr = EigenpathTracker::new(Selection::Index(0));
        tr.threshold = 0.9;
        tr.max_refinements = 0;
        let start = tr.eigenstate_at(&path, 0.0, None).unwrap();
        assert!(matches!(tr.track_from(&path, 0.0, &start.state, 1.0), Err(Error::TrackingLost { .. })));
        tr.max_refinements = 20;
        let end = tr.track_from(&path, 0.0, &start.state, 1.0).unwrap();
        assert_eq!(end.index, 0);
        assert!((end.state.amplitudes()[1].norm() - FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn advance_keeps_geometric_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = random::hermitian(5, 1.0, &mut rng);
        let b = random::hermitian(5, 1.0, &mut rng);
        let path = OperatorPath::linear(a, b).unwrap();
        let mut tr = EigenpathTracker::new(Selection::Lowest);
        let mut prev = tr.advance(&path, 0.0).unwrap().state;
        for k in 1..=20 {
            let next = tr.advance(&path, k as f64 / 20.0).unwrap().state;
            let ov = prev.inner(&next);
            assert!(ov.im.abs() < 1e-12 && ov.re > 0.0);
            prev = next;
        }
    }

    #[test]
    fn overlap_selection_needs_prev() {
        let path = OperatorPath::two_level_rotation(1.0);
        let tr = EigenpathTracker::new(Selection::Overlap);
        assert!(tr.eigenstate_at(&path, 0.0, None).is_err());
    }
}
