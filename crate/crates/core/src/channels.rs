//! Quantum operations on density operators: projective-measurement
//! operations, randomized evolution (exact and sampled) and the channel left
//! on the system by phase estimation.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::paths::DEGENERACY_TOL;
use crate::qcore::{
    eigendecompose, eigendecompose_unitary, hermitian_deviation, max_abs, trace_norm, unitary_deviation, CMatrix, DensityOperator,
    EigenSystem, HermitianOperator, StateVector, C64,
};
use crate::timedist::TimeDistribution;

/// Tolerance for accepting a rank-1 projector or a unitary.
pub const OPERATOR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    Identity,
    Unitary,
    ProjectiveMeasurement,
    RandomizedEvolution,
    PhaseEstimation,
    Composite,
}

type MapFn = dyn Fn(&CMatrix) -> CMatrix + Send + Sync;

/// A linear map on `dim × dim` density matrices.
#[derive(Clone)]
pub struct QuantumChannel {
    kind: ChannelKind,
    dim: usize,
    map: Arc<MapFn>,
}

impl fmt::Debug for QuantumChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuantumChannel").field("kind", &self.kind).field("dim", &self.dim).finish()
    }
}

impl QuantumChannel {
    pub fn new(kind: ChannelKind, dim: usize, map: impl Fn(&CMatrix) -> CMatrix + Send + Sync + 'static) -> Self {
        QuantumChannel { kind, dim, map: Arc::new(map) }
    }

    pub fn identity(dim: usize) -> Self {
        QuantumChannel::new(ChannelKind::Identity, dim, |m| m.clone())
    }

    /// Conjugation `ρ ↦ UρU†`.
    pub fn unitary(u: CMatrix) -> Result<Self> {
        let dev = unitary_deviation(&u);
        if dev > OPERATOR_TOL {
            return Err(Error::NotUnitary { deviation: dev });
        }
        let ud = u.adjoint();
        Ok(QuantumChannel::new(ChannelKind::Unitary, u.nrows(), move |m| &u * m * &ud))
    }

    pub fn kind(&self) -> ChannelKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Applies the map to an arbitrary matrix (linearity lets it act on
    /// differences of states).
    pub fn apply_matrix(&self, m: &CMatrix) -> Result<CMatrix> {
        if m.nrows() != self.dim || m.ncols() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: m.nrows() });
        }
        Ok((self.map)(m))
    }

    pub fn apply(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        Ok(DensityOperator::from_matrix_unchecked(self.apply_matrix(rho.matrix())?))
    }

    /// `other ∘ self`.
    pub fn then(&self, other: &QuantumChannel) -> Result<QuantumChannel> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        let (a, b) = (self.map.clone(), other.map.clone());
        Ok(QuantumChannel::new(ChannelKind::Composite, self.dim, move |m| b(&a(m))))
    }
}

/// Deviation of `p` from a rank-1 orthogonal projector.
pub fn projector_deviation(p: &CMatrix) -> f64 {
    let idem = max_abs(&(p * p - p));
    let herm = hermitian_deviation(p);
    let tr = (p.trace() - C64::new(1.0, 0.0)).norm();
    idem.max(herm).max(tr)
}

/// `M(ρ) = PρP + E((1−P)ρ(1−P))` for a rank-1 projector `P`.
pub fn projective_measurement_op(p: &CMatrix, complement: &QuantumChannel) -> Result<QuantumChannel> {
    if p.nrows() != p.ncols() {
        return Err(Error::DimensionMismatch { expected: p.nrows(), found: p.ncols() });
    }
    let dev = projector_deviation(p);
    if dev > OPERATOR_TOL {
        return Err(Error::NotProjector { deviation: dev });
    }
    if complement.dim() != p.nrows() {
        return Err(Error::DimensionMismatch { expected: p.nrows(), found: complement.dim() });
    }
    let n = p.nrows();
    let p = p.clone();
    let q = CMatrix::identity(n, n) - &p;
    let e = complement.map.clone();
    Ok(QuantumChannel::new(ChannelKind::ProjectiveMeasurement, n, move |m| &p * m * &p + e(&(&q * m * &q))))
}

/// Ideal measurement onto `psi` with `E` the identity on the complement.
pub fn ideal_projection(psi: &StateVector) -> QuantumChannel {
    let n = psi.dim();
    projective_measurement_op(&psi.projector(), &QuantumChannel::identity(n)).expect("projector of a unit vector")
}

/// Dephasing in a fixed eigenbasis: element `(j,k)` multiplied by `Φ(E_k − E_j)`.
pub fn randomized_evolution_eigen(eig: &EigenSystem, dist: &TimeDistribution) -> QuantumChannel {
    let n = eig.dim();
    let mut factors = CMatrix::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            factors[(j, k)] = if j == k { C64::new(1.0, 0.0) } else { dist.char_fn(eig.eigenvalues[k] - eig.eigenvalues[j]) };
        }
    }
    let v = eig.eigenvectors.clone();
    let vd = v.adjoint();
    QuantumChannel::new(ChannelKind::RandomizedEvolution, n, move |m| {
        let mut inner = &vd * m * &v;
        inner.component_mul_assign(&factors);
        &v * inner * &vd
    })
}

/// `ρ ↦ E_T[e^{−iHT} ρ e^{iHT}]`.
pub fn randomized_evolution_exact(h: &HermitianOperator, dist: &TimeDistribution) -> QuantumChannel {
    randomized_evolution_eigen(&eigendecompose(h), dist)
}

/// `ρ ↦ E_T[U^T ρ U^{−T}]` for integer-valued `T`.
pub fn randomized_unitary_exact(u: &CMatrix, dist: &TimeDistribution) -> Result<QuantumChannel> {
    if !dist.support().is_integer() {
        return Err(Error::param(format!("{} is not integer valued; powers of a unitary need integer times", dist.label())));
    }
    Ok(randomized_evolution_eigen(&eigendecompose_unitary(u)?, dist))
}

/// One trajectory: draws `t` from `dist` and returns `(e^{−iHt}ψ, t)`.
pub fn randomized_evolution_sampled<R: Rng + ?Sized>(
    eig: &EigenSystem,
    dist: &TimeDistribution,
    psi: &StateVector,
    rng: &mut R,
) -> (StateVector, f64) {
    let t = dist.sample(rng);
    (eig.evolve(t, psi), t)
}

/// Distance between the proof's projective-measurement operation and the
/// randomized channel, against `sup_j |Φ(E_j − E_target)|`.
pub fn dephasing_bound_check(
    h: &HermitianOperator,
    dist: &TimeDistribution,
    rho: &DensityOperator,
    target_index: usize,
) -> Result<(f64, f64, bool)> {
    let eig = eigendecompose(h);
    dephasing_bound_check_eigen(&eig, dist, rho, target_index)
}

pub fn dephasing_bound_check_eigen(
    eig: &EigenSystem,
    dist: &TimeDistribution,
    rho: &DensityOperator,
    target_index: usize,
) -> Result<(f64, f64, bool)> {
    let n = eig.dim();
    if target_index >= n {
        return Err(Error::param(format!("target index {target_index} out of range for dimension {n}")));
    }
    let e0 = eig.eigenvalues[target_index];
    let gaps: Vec<f64> = (0..n).filter(|j| *j != target_index).map(|j| eig.eigenvalues[j] - e0).collect();
    let gap = gaps.iter().map(|g| g.abs()).fold(f64::INFINITY, f64::min);
    if gap <= DEGENERACY_TOL {
        return Err(Error::Degenerate { s: f64::NAN, gap });
    }
    let r = randomized_evolution_eigen(eig, dist);
    let m = projective_measurement_op(&eig.eigenvector(target_index).projector(), &r)?;
    let distance = trace_norm(&(m.apply_matrix(rho.matrix())? - r.apply_matrix(rho.matrix())?));
    let bound = if gaps.is_empty() { 0.0 } else { dist.dephasing_error(&gaps)? };
    Ok((distance, bound, distance <= bound + 1e-9))
}

/// How the phase-estimation channel is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeaMode {
    /// `(1/2^r) Σ_j U^j ρ U^{−j}`.
    Algebraic,
    /// Ancilla register simulated explicitly, then traced out.
    Circuit,
}

/// Channel on the system after phase estimation with `r` ancilla qubits,
/// discarding the ancillas and the outcome.
pub fn pea_channel(u: &CMatrix, r: u32, mode: PeaMode) -> Result<QuantumChannel> {
    let dev = unitary_deviation(u);
    if dev > OPERATOR_TOL {
        return Err(Error::NotUnitary { deviation: dev });
    }
    if r == 0 || r > 16 {
        return Err(Error::param(format!("ancilla count {r} outside 1..=16")));
    }
    let n = u.nrows();
    let count = 1usize << r;
    match mode {
        PeaMode::Algebraic => {
            let mut powers = Vec::with_capacity(count);
            let mut p = CMatrix::identity(n, n);
            for _ in 0..count {
                let next = &p * u;
                powers.push(p);
                p = next;
            }
            let adj: Vec<CMatrix> = powers.iter().map(|p| p.adjoint()).collect();
            Ok(QuantumChannel::new(ChannelKind::PhaseEstimation, n, move |m| {
                let mut out = CMatrix::zeros(n, n);
                for (p, pd) in powers.iter().zip(&adj) {
                    out += p * m * pd;
                }
                out / C64::new(count as f64, 0.0)
            }))
        }
        PeaMode::Circuit => {
            if r > 6 {
                return Err(Error::param("circuit mode is limited to r <= 6"));
            }
            let circuit = pea_circuit_unitary(u, r);
            let cd = circuit.adjoint();
            Ok(QuantumChannel::new(ChannelKind::PhaseEstimation, n, move |m| {
                let plus = CMatrix::from_element(count, count, C64::new(1.0 / count as f64, 0.0));
                let joint = &circuit * plus.kronecker(m) * &cd;
                partial_trace_first(&joint, count, n)
            }))
        }
    }
}

/// Full phase-estimation unitary on ancilla ⊗ system: controlled `U^{2^b}`
/// gates followed by the inverse Fourier transform on the ancilla register.
fn pea_circuit_unitary(u: &CMatrix, r: u32) -> CMatrix {
    let n = u.nrows();
    let count = 1usize << r;
    let dim = count * n;
    let mut total = CMatrix::identity(dim, dim);
    let mut power = u.clone();
    for b in 0..r {
        // ancilla bit b controls U^{2^b}
        let mut gate = CMatrix::zeros(dim, dim);
        for a in 0..count {
            let block = if (a >> b) & 1 == 1 { power.clone() } else { CMatrix::identity(n, n) };
            gate.view_mut((a * n, a * n), (n, n)).copy_from(&block);
        }
        total = gate * total;
        power = &power * &power;
    }
    let mut iqft = CMatrix::zeros(count, count);
    let norm = 1.0 / (count as f64).sqrt();
    for x in 0..count {
        for y in 0..count {
            let phase = -2.0 * std::f64::consts::PI * (x * y) as f64 / count as f64;
            iqft[(x, y)] = C64::from_polar(norm, phase);
        }
    }
    iqft.kronecker(&CMatrix::identity(n, n)) * total
}

/// Traces out the first tensor factor (dimension `a`) of an `(a·b)`-square matrix.
pub fn partial_trace_first(m: &CMatrix, a: usize, b: usize) -> CMatrix {
    let mut out = CMatrix::zeros(b, b);
    for k in 0..a {
        out += m.view((k * b, k * b), (b, b));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::random;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn plus() -> StateVector {
        StateVector::from_real(&[1.0, 1.0]).unwrap()
    }

    fn all_kinds(n: usize, rng: &mut ChaCha8Rng) -> Vec<QuantumChannel> {
        let h = random::hermitian(n, 1.0, rng);
        let u = random::unitary(n, rng);
        let psi = random::state(n, rng);
        let g = TimeDistribution::gaussian(0.7, 0.2).unwrap();
        let r = randomized_evolution_exact(&h, &g);
        vec![
            QuantumChannel::identity(n),
            QuantumChannel::unitary(u.clone()).unwrap(),
            projective_measurement_op(&psi.projector(), &QuantumChannel::identity(n)).unwrap(),
            projective_measurement_op(&eigendecompose(&h).eigenvector(1).projector(), &r).unwrap(),
            r.clone(),
            randomized_evolution_exact(&h, &build_compact()),
            randomized_unitary_exact(&u, &TimeDistribution::uniform_int(5, -2).unwrap()).unwrap(),
            pea_channel(&u, 2, PeaMode::Algebraic).unwrap(),
            pea_channel(&u, 2, PeaMode::Circuit).unwrap(),
            r.then(&QuantumChannel::unitary(u).unwrap()).unwrap(),
        ]
    }

    fn build_compact() -> TimeDistribution {
        crate::timedist::build_compact_optimal(0.6).unwrap()
    }

    #[test]
    fn measurement_removes_coherence() {
        let p = StateVector::basis(2, 0).projector();
        let m = projective_measurement_op(&p, &QuantumChannel::identity(2)).unwrap();
        let out = m.apply(&plus().density()).unwrap();
        let expect = CMatrix::from_diagonal_element(2, 2, C64::new(0.5, 0.0));
        assert!(max_abs(&(out.matrix() - expect)) < 1e-15);
    }

    #[test]
    fn measurement_fixes_block_diagonal_state() {
        let p = StateVector::basis(3, 1).projector();
        let m = projective_measurement_op(&p, &QuantumChannel::identity(3)).unwrap();
        let rho = DensityOperator::pure(&StateVector::basis(3, 1));
        assert!(max_abs(&(m.apply(&rho).unwrap().matrix() - rho.matrix())) < 1e-15);
    }

    #[test]
    fn measurement_rejects_bad_projector() {
        let mut p = StateVector::basis(2, 0).projector();
        p[(0, 0)] = C64::new(0.9, 0.0);
        assert!(matches!(projective_measurement_op(&p, &QuantumChannel::identity(2)), Err(Error::NotProjector { .. })));
        let two = CMatrix::identity(2, 2);
        assert!(matches!(projective_measurement_op(&two, &QuantumChannel::identity(2)), Err(Error::NotProjector { .. })));
    }

    #[test]
    fn eigenstate_is_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random::hermitian(5, 1.0, &mut rng);
        let eig = eigendecompose(&h);
        let r = randomized_evolution_exact(&h, &TimeDistribution::gaussian(1.0, 0.3).unwrap());
        let rho = eig.eigenvector(2).density();
        assert!(max_abs(&(r.apply(&rho).unwrap().matrix() - rho.matrix())) < 1e-13);
    }

    #[test]
    fn two_point_dephases_exactly() {
        let w1 = 1.3;
        let h = HermitianOperator::diagonal(&[0.0, w1]);
        let r = randomized_evolution_exact(&h, &TimeDistribution::two_point(w1).unwrap());
        let out = r.apply(&plus().density()).unwrap();
        let expect = CMatrix::from_diagonal_element(2, 2, C64::new(0.5, 0.0));
        assert!(max_abs(&(out.matrix() - expect)) < 1e-15);
    }

    #[test]
    fn point_mass_is_conjugation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = random::hermitian(6, 1.0, &mut rng);
        let rho = random::density(6, &mut rng);
        let t = 0.83;
        let r = randomized_evolution_exact(&h, &TimeDistribution::point_mass(t).unwrap());
        let u = eigendecompose(&h).propagator(t);
        let expect = &u * rho.matrix() * u.adjoint();
        assert!(trace_norm(&(r.apply(&rho).unwrap().matrix() - expect)) < 1e-10);
    }

    #[test]
    fn sampled_point_mass_zero_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = random::hermitian(4, 1.0, &mut rng);
        let eig = eigendecompose(&h);
        let psi = random::state(4, &mut rng);
        let (out, t) = randomized_evolution_sampled(&eig, &TimeDistribution::point_mass(0.0).unwrap(), &psi, &mut rng);
        assert_eq!(t, 0.0);
        assert!((out.amplitudes() - psi.amplitudes()).norm() < 1e-14);
    }

    #[test]
    fn trajectory_average_matches_exact_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 4;
        let h = random::hermitian(n, 1.0, &mut rng);
        let eig = eigendecompose(&h);
        let psi = random::state(n, &mut rng);
        let dist = TimeDistribution::gaussian(0.9, 0.4).unwrap();
        let exact = randomized_evolution_eigen(&eig, &dist).apply(&psi.density()).unwrap();
        let count = 10_000;
        let mut sum = CMatrix::zeros(n, n);
        let mut sum_sq = 0.0;
        for _ in 0..count {
            let (phi, _) = randomized_evolution_sampled(&eig, &dist, &psi, &mut rng);
            let p = phi.projector();
            sum_sq += (&p - exact.matrix()).norm_squared();
            sum += p;
        }
        let avg = sum / C64::new(count as f64, 0.0);
        // trace norm ≤ √n · Frobenius; Frobenius standard error from the sample spread
        let se = (n as f64).sqrt() * (sum_sq / count as f64 / count as f64).sqrt();
        let diff = trace_norm(&(avg - exact.matrix()));
        assert!(diff <= 5.0 * se, "diff {diff} se {se}");
    }

    #[test]
    fn sampled_cost_matches_mean_abs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = random::hermitian(3, 1.0, &mut rng);
        let eig = eigendecompose(&h);
        let psi = random::state(3, &mut rng);
        let dist = TimeDistribution::sinc4(0.8).unwrap();
        let ts: Vec<f64> = (0..100_000).map(|_| randomized_evolution_sampled(&eig, &dist, &psi, &mut rng).1.abs()).collect();
        let mean = ts.iter().sum::<f64>() / ts.len() as f64;
        let var = ts.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (ts.len() - 1) as f64;
        let se = (var / ts.len() as f64).sqrt();
        assert!((mean - dist.mean_abs_cost()).abs() <= 3.0 * se, "mean {mean} expect {} se {se}", dist.mean_abs_cost());
    }

    #[test]
    fn dephasing_bound_examples() {
        let w = 0.9;
        let h = HermitianOperator::diagonal(&[0.0, w]);
        let d = TimeDistribution::two_point(w).unwrap();
        let (dist, bound, pass) = dephasing_bound_check(&h, &d, &plus().density(), 0).unwrap();
        assert!(dist < 1e-15 && bound < 1e-15 && pass);

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = random::hermitian(8, 1.0, &mut rng);
        let g = TimeDistribution::gaussian(1.5, 0.0).unwrap();
        for _ in 0..20 {
            let rho = random::state(8, &mut rng).density();
            let (distance, bound, pass) = dephasing_bound_check(&h, &g, &rho, 0).unwrap();
            assert!(pass, "{distance} > {bound}");
        }
        let eig = eigendecompose(&h);
        let (distance, _, _) = dephasing_bound_check(&h, &g, &eig.eigenvector(0).density(), 0).unwrap();
        assert!(distance < 1e-13);
    }

    #[test]
    fn dephasing_bound_rejects_degenerate_target() {
        let h = HermitianOperator::diagonal(&[0.0, 0.0, 1.0]);
        let d = TimeDistribution::gaussian(1.0, 0.0).unwrap();
        let rho = DensityOperator::maximally_mixed(3);
        assert!(matches!(dephasing_bound_check(&h, &d, &rho, 0), Err(Error::Degenerate { .. })));
    }

    #[test]
    fn pea_single_ancilla_kills_coherence() {
        let u = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![C64::new(1.0, 0.0), C64::from_polar(1.0, PI)]));
        for mode in [PeaMode::Algebraic, PeaMode::Circuit] {
            let c = pea_channel(&u, 1, mode).unwrap();
            let out = c.apply(&plus().density()).unwrap();
            assert!(out.matrix()[(0, 1)].norm() < 1e-15);
            assert!((out.matrix()[(0, 0)].re - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn pea_with_commensurate_phases_is_projective() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v = random::unitary(4, &mut rng);
        let phases = [0.0, 1.0, 3.0, 6.0].map(|k| 2.0 * PI * k / 8.0);
        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(4, phases.iter().map(|p| C64::from_polar(1.0, *p))));
        let u = &v * d * v.adjoint();
        let rho = random::density(4, &mut rng);
        // projective measurement on each eigenspace
        let mut expect = CMatrix::zeros(4, 4);
        for k in 0..4 {
            let p = v.column(k) * v.column(k).adjoint();
            expect += &p * rho.matrix() * &p;
        }
        for mode in [PeaMode::Algebraic, PeaMode::Circuit] {
            let out = pea_channel(&u, 3, mode).unwrap().apply(&rho).unwrap();
            assert!(trace_norm(&(out.matrix() - &expect)) < 1e-10);
        }
    }

    #[test]
    fn pea_equals_uniform_randomization() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for r in 1..=3u32 {
            for _ in 0..3 {
                let u = random::unitary(3, &mut rng);
                let rho = random::density(3, &mut rng);
                let via_dist = randomized_unitary_exact(&u, &TimeDistribution::uniform_int(1 << r, 0).unwrap()).unwrap();
                let a = pea_channel(&u, r, PeaMode::Algebraic).unwrap().apply(&rho).unwrap();
                let c = pea_channel(&u, r, PeaMode::Circuit).unwrap().apply(&rho).unwrap();
                let d = via_dist.apply(&rho).unwrap();
                assert!(trace_norm(&(a.matrix() - d.matrix())) < 1e-10);
                assert!(trace_norm(&(c.matrix() - d.matrix())) < 1e-10);
            }
        }
    }

    #[test]
    fn non_integer_times_rejected_for_unitaries() {
        let u = CMatrix::identity(2, 2);
        assert!(randomized_unitary_exact(&u, &TimeDistribution::gaussian(1.0, 0.0).unwrap()).is_err());
        let mut bad = CMatrix::identity(2, 2);
        bad[(0, 1)] = C64::new(0.1, 0.0);
        assert!(matches!(pea_channel(&bad, 1, PeaMode::Algebraic), Err(Error::NotUnitary { .. })));
    }

    #[test]
    fn channels_are_cptp_and_contracting() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 4;
        for c in all_kinds(n, &mut rng) {
            for _ in 0..50 {
                let rho = random::density(n, &mut rng);
                let sigma = random::density(n, &mut rng);
                let out = c.apply(&rho).unwrap();
                assert!((out.trace() - C64::new(1.0, 0.0)).norm() < 1e-9, "{:?}", c.kind());
                assert!(out.min_eigenvalue() >= -1e-8, "{:?}", c.kind());
                let before = trace_norm(&(rho.matrix() - sigma.matrix()));
                let after = trace_norm(&(out.matrix() - c.apply(&sigma).unwrap().matrix()));
                assert!(after <= before + 1e-10, "{:?}", c.kind());
            }
        }
    }

    #[test]
    fn randomization_leaves_populations_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let h = random::hermitian(5, 1.0, &mut rng);
        let eig = eigendecompose(&h);
        let r = randomized_evolution_eigen(&eig, &TimeDistribution::binomial(4, 1).unwrap());
        let rho = random::density(5, &mut rng);
        let before = eig.eigenvectors.adjoint() * rho.matrix() * &eig.eigenvectors;
        let after = eig.eigenvectors.adjoint() * r.apply(&rho).unwrap().matrix() * &eig.eigenvectors;
        for k in 0..5 {
            assert!((before[(k, k)] - after[(k, k)]).norm() < 1e-14);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn errors_accumulate_at_most_linearly(seed in 0u64..1000, steps in 1usize..8, sigma in 0.3f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 4;
            let dist = TimeDistribution::gaussian(sigma, 0.0).unwrap();
            let mut ideal = random::density(n, &mut rng);
            let mut randomized = ideal.clone();
            let mut eps = 0.0f64;
            for _ in 0..steps {
                let h = random::hermitian(n, 1.0, &mut rng);
                let eig = eigendecompose(&h);
                let r = randomized_evolution_eigen(&eig, &dist);
                let m = projective_measurement_op(&eig.eigenvector(0).projector(), &r).unwrap();
                let gaps: Vec<f64> = (1..n).map(|j| eig.eigenvalues[j] - eig.eigenvalues[0]).collect();
                eps = eps.max(dist.dephasing_error(&gaps).unwrap());
                ideal = m.apply(&ideal).unwrap();
                randomized = r.apply(&randomized).unwrap();
            }
            let d = trace_norm(&(ideal.matrix() - randomized.matrix()));
            prop_assert!(d <= steps as f64 * eps + 1e-9);
        }

        #[test]
        fn pea_equivalence_random(seed in 0u64..1000, r in 1u32..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random::unitary(2, &mut rng);
            let rho = random::density(2, &mut rng);
            let a = pea_channel(&u, r, PeaMode::Algebraic).unwrap().apply(&rho).unwrap();
            let c = pea_channel(&u, r, PeaMode::Circuit).unwrap().apply(&rho).unwrap();
            prop_assert!(trace_norm(&(a.matrix() - c.matrix())) < 1e-10);
        }
    }
}
