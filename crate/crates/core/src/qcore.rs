//! Dense complex linear algebra and the quantum primitives the rest of the
//! crate is built on.
//!
//! All state comparisons are projective: two vectors differing by a global
//! phase are the same state, so use [`fidelity`] or [`angular_distance`]
//! rather than comparing amplitudes.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Tolerances used by invariant and construction checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericPolicy {
    /// Norms, traces and reconstruction of derived objects.
    pub invariant_tol: f64,
    /// Hermiticity of constructed operators.
    pub construction_tol: f64,
    /// Smallest eigenvalue accepted for a density operator.
    pub psd_tol: f64,
}

impl NumericPolicy {
    pub const DEFAULT: NumericPolicy = NumericPolicy {
        invariant_tol: 1e-10,
        construction_tol: 1e-12,
        psd_tol: 1e-9,
    };
}

impl Default for NumericPolicy {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Largest entrywise deviation of `m` from its adjoint.
pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Largest entrywise deviation of `u†u` from the identity.
pub fn unitary_deviation(u: &CMatrix) -> f64 {
    let prod = u.adjoint() * u;
    let n = u.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            dev = dev.max((prod[(i, j)] - target).norm());
        }
    }
    dev
}

/// Largest entry modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

/// Operator (spectral) norm: the largest singular value.
pub fn operator_norm(m: &CMatrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// A normalized pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(CVector);

impl StateVector {
    /// Wraps `amplitudes`, rejecting vectors whose norm is not 1 within
    /// the invariant tolerance.
    pub fn new(amplitudes: CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NumericPolicy::DEFAULT.invariant_tol {
            return Err(Error::NotNormalized { norm });
        }
        Ok(StateVector(amplitudes))
    }

    /// Rescales `amplitudes` to unit norm.
    pub fn normalized(amplitudes: CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::NotNormalized { norm });
        }
        Ok(StateVector(amplitudes / C64::new(norm, 0.0)))
    }

    pub fn from_real(amplitudes: &[f64]) -> Result<Self> {
        Self::normalized(CVector::from_iterator(
            amplitudes.len(),
            amplitudes.iter().map(|&a| C64::new(a, 0.0)),
        ))
    }

    /// Computational basis state `|k⟩` in dimension `n`.
    pub fn basis(n: usize, k: usize) -> Self {
        let mut v = CVector::zeros(n);
        v[k] = C64::new(1.0, 0.0);
        StateVector(v)
    }

    /// Equal superposition over all basis states.
    pub fn uniform(n: usize) -> Self {
        let a = C64::new(1.0 / (n as f64).sqrt(), 0.0);
        StateVector(CVector::from_element(n, a))
    }

    pub(crate) fn from_unit_unchecked(amplitudes: CVector) -> Self {
        StateVector(amplitudes)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.0
    }

    pub fn into_inner(self) -> CVector {
        self.0
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.0.dotc(&other.0)
    }

    /// `|self⟩⟨self|`.
    pub fn projector(&self) -> CMatrix {
        &self.0 * self.0.adjoint()
    }

    /// Multiplies by a global phase so that `⟨reference|self⟩` is real and
    /// nonnegative.
    pub fn aligned_to(&self, reference: &StateVector) -> StateVector {
        let ov = reference.inner(self);
        if ov.norm() == 0.0 {
            return self.clone();
        }
        let phase = ov.conj() / ov.norm();
        StateVector(&self.0 * phase)
    }

    pub fn density(&self) -> DensityOperator {
        DensityOperator(self.projector())
    }
}

/// A mixed state.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator(CMatrix);

impl DensityOperator {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let rho = DensityOperator(matrix);
        rho.validate(&NumericPolicy::DEFAULT)?;
        Ok(rho)
    }

    pub fn pure(psi: &StateVector) -> Self {
        psi.density()
    }

    pub fn maximally_mixed(n: usize) -> Self {
        DensityOperator(CMatrix::identity(n, n) * C64::new(1.0 / n as f64, 0.0))
    }

    /// Wraps the output of a channel without re-checking positivity.
    pub(crate) fn from_matrix_unchecked(matrix: CMatrix) -> Self {
        DensityOperator(matrix)
    }

    pub fn validate(&self, policy: &NumericPolicy) -> Result<()> {
        let m = &self.0;
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidDensity("matrix is not square".into()));
        }
        let dev = hermitian_deviation(m);
        if dev > policy.invariant_tol {
            return Err(Error::InvalidDensity(format!("not Hermitian (deviation {dev:.3e})")));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > policy.invariant_tol || tr.im.abs() > policy.invariant_tol {
            return Err(Error::InvalidDensity(format!("trace is {tr}")));
        }
        let min = self.min_eigenvalue();
        if min < -policy.psd_tol {
            return Err(Error::InvalidDensity(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_inner(self) -> CMatrix {
        self.0
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = hermitian_part(&self.0);
        h.symmetric_eigenvalues().min()
    }
}

fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// A Hermitian operator (Hamiltonian).
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator(CMatrix);

impl HermitianOperator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), found: matrix.ncols() });
        }
        let deviation = hermitian_deviation(&matrix);
        if deviation > NumericPolicy::DEFAULT.construction_tol {
            return Err(Error::NotHermitian { deviation });
        }
        Ok(HermitianOperator(matrix))
    }

    /// Builds from a real symmetric matrix.
    pub fn from_real(matrix: &DMatrix<f64>) -> Result<Self> {
        Self::new(matrix.map(|x| C64::new(x, 0.0)))
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = CMatrix::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = C64::new(v, 0.0);
        }
        HermitianOperator(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_inner(self) -> CMatrix {
        self.0
    }

    pub fn operator_norm(&self) -> f64 {
        let e = self.eigen();
        e.eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn eigen(&self) -> EigenSystem {
        eigen_hermitian(&self.0)
    }
}

/// Spectral decomposition `H = V Λ V†` with eigenvalues in ascending order.
///
/// For unitary operators (see [`eigendecompose_unitary`]) the eigenvalues
/// are quasi-energies `ε` with `U = V e^{-iε} V†`, so that every consumer can
/// treat `U` as a unit-time evolution.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvector(&self, k: usize) -> StateVector {
        StateVector(self.eigenvectors.column(k).into_owned())
    }

    /// `V Λ V†`.
    pub fn reconstruct(&self) -> CMatrix {
        let mut scaled = self.eigenvectors.clone();
        for (k, &e) in self.eigenvalues.iter().enumerate() {
            scaled.column_mut(k).scale_mut(e);
        }
        scaled * self.eigenvectors.adjoint()
    }

    /// `V f(Λ) V†` for a complex function of the eigenvalue.
    pub fn apply_fn(&self, f: impl Fn(f64) -> C64) -> CMatrix {
        let mut scaled = self.eigenvectors.clone();
        for (k, &e) in self.eigenvalues.iter().enumerate() {
            let fk = f(e);
            for v in scaled.column_mut(k).iter_mut() {
                *v *= fk;
            }
        }
        scaled * self.eigenvectors.adjoint()
    }

    /// `e^{-iHt}` as a matrix.
    pub fn propagator(&self, t: f64) -> CMatrix {
        self.apply_fn(|e| C64::from_polar(1.0, -e * t))
    }

    /// `e^{-iHt} ψ`.
    pub fn evolve(&self, t: f64, psi: &StateVector) -> StateVector {
        let v = &self.eigenvectors;
        let mut coeffs = v.adjoint() * psi.amplitudes();
        for (c, &e) in coeffs.iter_mut().zip(&self.eigenvalues) {
            *c *= C64::from_polar(1.0, -e * t);
        }
        StateVector(v * coeffs)
    }

    /// Largest deviation of the eigenvector columns from orthonormality.
    pub fn orthonormality_deviation(&self) -> f64 {
        unitary_deviation(&self.eigenvectors)
    }
}

fn eigen_hermitian(m: &CMatrix) -> EigenSystem {
    let n = m.nrows();
    if n == 0 {
        return EigenSystem { eigenvalues: vec![], eigenvectors: CMatrix::zeros(0, 0) };
    }
    let eig = hermitian_part(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let eigenvectors = CMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    EigenSystem { eigenvalues, eigenvectors }
}

/// Eigendecomposition of a Hermitian matrix; eigenvalues ascending.
pub fn eigendecompose(h: &HermitianOperator) -> EigenSystem {
    h.eigen()
}

/// Eigendecomposition of an arbitrary square matrix that must be Hermitian
/// within the construction tolerance.
pub fn eigendecompose_matrix(m: &CMatrix) -> Result<EigenSystem> {
    Ok(HermitianOperator::new(m.clone())?.eigen())
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_phase(theta: f64) -> f64 {
    use std::f64::consts::PI;
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// Eigendecomposition of a unitary from its commuting Hermitian parts.
///
/// `(U + U†)/2` is diagonalized first; each cluster of nearly equal
/// eigenvalues (which holds `e^{±iθ}` pairs and genuine degeneracies) is
/// then split with `(U − U†)/2i`. Quasi-energies `ε = -arg λ` lie in
/// `[-π, π)` and are sorted ascending.
pub fn eigendecompose_unitary(u: &CMatrix) -> Result<EigenSystem> {
    const CLUSTER_TOL: f64 = 1e-8;
    let deviation = unitary_deviation(u);
    if deviation > NumericPolicy::DEFAULT.invariant_tol {
        return Err(Error::NotUnitary { deviation });
    }
    let n = u.nrows();
    let im = (u - u.adjoint()) * C64::new(0.0, -0.5);
    let first = eigen_hermitian(&hermitian_part(u));
    let mut vectors = CMatrix::zeros(n, n);
    let mut k = 0;
    while k < n {
        let mut j = k + 1;
        while j < n && first.eigenvalues[j] - first.eigenvalues[j - 1] < CLUSTER_TOL {
            j += 1;
        }
        let block = first.eigenvectors.columns(k, j - k).into_owned();
        let cols = if j - k == 1 {
            block
        } else {
            let split = eigen_hermitian(&(block.adjoint() * &im * &block));
            &block * &split.eigenvectors
        };
        vectors.columns_mut(k, j - k).copy_from(&cols);
        k = j;
    }
    let uv = u * &vectors;
    let mut pairs: Vec<(f64, usize)> = (0..n).map(|k| (-wrap_phase(vectors.column(k).dotc(&uv.column(k)).arg()), k)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let eigenvalues = pairs.iter().map(|p| p.0).collect();
    let eigenvectors = CMatrix::from_fn(n, n, |i, j| vectors[(i, pairs[j].1)]);
    Ok(EigenSystem { eigenvalues, eigenvectors })
}

/// `e^{-iHt} ψ`, computed through the eigendecomposition of `H`.
pub fn evolve(h: &HermitianOperator, t: f64, psi: &StateVector) -> Result<StateVector> {
    if h.dim() != psi.dim() {
        return Err(Error::DimensionMismatch { expected: h.dim(), found: psi.dim() });
    }
    Ok(h.eigen().evolve(t, psi))
}

/// Sum of singular values. Orthogonal pure states are at distance 2.
pub fn trace_norm(a: &CMatrix) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    a.clone().singular_values().sum()
}

/// `⟨ψ|ρ|ψ⟩`, clamped to `[0, 1]`.
pub fn fidelity(psi: &StateVector, rho: &DensityOperator) -> Result<f64> {
    if psi.dim() != rho.dim() {
        return Err(Error::DimensionMismatch { expected: psi.dim(), found: rho.dim() });
    }
    let v = psi.amplitudes();
    let f = v.dotc(&(rho.matrix() * v)).re;
    Ok(f.clamp(0.0, 1.0))
}

/// Squared overlap `|⟨φ|ψ⟩|²` of two pure states.
pub fn overlap_sq(phi: &StateVector, psi: &StateVector) -> f64 {
    phi.inner(psi).norm_sqr()
}

/// `arccos |⟨φ2|φ1⟩|`, evaluated through the chord length so that small
/// angles keep full relative precision.
pub fn angular_distance(phi1: &StateVector, phi2: &StateVector) -> Result<f64> {
    if phi1.dim() != phi2.dim() {
        return Err(Error::DimensionMismatch { expected: phi1.dim(), found: phi2.dim() });
    }
    let aligned = phi2.aligned_to(phi1);
    let chord = (phi1.amplitudes() - aligned.amplitudes()).norm();
    Ok(2.0 * (chord / 2.0).min(1.0).asin().min(std::f64::consts::FRAC_PI_2))
}

/// Seeded random objects for tests and examples.
pub mod random {
    use super::*;

    fn gaussian_c64<R: Rng + ?Sized>(rng: &mut R) -> C64 {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    }

    /// Hermitian matrix from the Gaussian unitary ensemble, rescaled to
    /// operator norm `scale`.
    pub fn hermitian<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> HermitianOperator {
        let g = CMatrix::from_fn(n, n, |_, _| gaussian_c64(rng));
        let h = hermitian_part(&g);
        let norm = operator_norm(&h).max(f64::MIN_POSITIVE);
        HermitianOperator(h * C64::new(scale / norm, 0.0))
    }

    /// Haar-distributed pure state.
    pub fn state<R: Rng + ?Sized>(n: usize, rng: &mut R) -> StateVector {
        let v = CVector::from_fn(n, |_, _| gaussian_c64(rng));
        StateVector::normalized(v).expect("nonzero Gaussian vector")
    }

    /// Random unitary `e^{-iH}` with `H` drawn from [`hermitian`] with norm `π`.
    pub fn unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
        hermitian(n, std::f64::consts::PI, rng).eigen().propagator(1.0)
    }

    /// Mixed state with a random spectrum in a random basis.
    pub fn density<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DensityOperator {
        let g = CMatrix::from_fn(n, n, |_, _| gaussian_c64(rng));
        let m = &g * g.adjoint();
        let tr = m.trace();
        DensityOperator(m / tr)
    }
}
