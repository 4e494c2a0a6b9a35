//! Composite atoms ⊗ field Hilbert space, elementary and collective
//! operators, thermal field states and partial traces.
//!
//! Tensor ordering is fixed everywhere as
//! `atom 0 ⊗ atom 1 ⊗ … ⊗ atom N−1 ⊗ field`, with the first factor most
//! significant. Each atom uses the local basis `|g⟩ = 0`, `|e⟩ = 1`; the
//! field is truncated to Fock levels `0..fock_cutoff`.

use std::ops::{Add, Mul, Sub};

use ndarray::{Array1, Array2};
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::{re, Real, C};

/// Atom counts above this make dense operators impractical.
pub const MAX_ATOMS: usize = 12;

/// Geometry and couplings of the simulated system.
///
/// Frequencies are angular and conventionally expressed in units of `g`.
/// The atomic transition is taken resonant with the classical drive, so
/// only the detuning `delta = ω0 − ωa` and the Rabi frequency enter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HilbertSpec<T> {
    pub n_atoms: usize,
    pub fock_cutoff: usize,
    pub g: T,
    pub delta: T,
    pub omega_rabi: T,
}

impl<T: Real> HilbertSpec<T> {
    pub fn new(n_atoms: usize, fock_cutoff: usize, g: T, delta: T, omega_rabi: T) -> Result<Self> {
        let spec = Self { n_atoms, fock_cutoff, g, delta, omega_rabi };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_atoms == 0 || self.n_atoms > MAX_ATOMS {
            return Err(Error::InvalidSpec(format!("n_atoms must be in 1..={MAX_ATOMS}, got {}", self.n_atoms)));
        }
        if self.fock_cutoff < 2 {
            return Err(Error::InvalidSpec(format!("fock_cutoff must be >= 2, got {}", self.fock_cutoff)));
        }
        if !(self.g > T::zero()) || !self.g.is_finite() {
            return Err(Error::InvalidSpec(format!("g must be positive and finite, got {}", self.g)));
        }
        if !self.delta.is_finite() || !self.omega_rabi.is_finite() {
            return Err(Error::InvalidSpec("delta and omega_rabi must be finite".into()));
        }
        Ok(())
    }

    /// `2^n_atoms`.
    pub fn atom_dim(&self) -> usize {
        1 << self.n_atoms
    }

    /// `2^n_atoms × fock_cutoff`.
    pub fn dim(&self) -> usize {
        self.atom_dim() * self.fock_cutoff
    }

    pub fn with_cutoff(&self, fock_cutoff: usize) -> Result<Self> {
        Self::new(self.n_atoms, fock_cutoff, self.g, self.delta, self.omega_rabi)
    }

    pub fn with_omega(&self, omega_rabi: T) -> Result<Self> {
        Self::new(self.n_atoms, self.fock_cutoff, self.g, self.delta, omega_rabi)
    }

    /// Composite index of an atomic basis index and a Fock level.
    #[inline]
    pub fn index(&self, atoms: usize, n: usize) -> usize {
        atoms * self.fock_cutoff + n
    }
}

/// Dense complex matrix on a Hilbert space.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOperator<T: Real> {
    matrix: Array2<C<T>>,
}

impl<T: Real> LinearOperator<T> {
    pub fn from_matrix(matrix: Array2<C<T>>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), found: matrix.ncols() });
        }
        Ok(Self { matrix })
    }

    pub(crate) fn new_unchecked(matrix: Array2<C<T>>) -> Self {
        debug_assert_eq!(matrix.nrows(), matrix.ncols());
        Self { matrix }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { matrix: Array2::zeros((dim, dim)) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { matrix: linalg::identity(dim) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Array2<C<T>> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Array2<C<T>> {
        self.matrix
    }

    pub fn entry(&self, row: usize, col: usize) -> C<T> {
        self.matrix[[row, col]]
    }

    pub fn adjoint(&self) -> Self {
        Self { matrix: linalg::dagger(&self.matrix) }
    }

    pub fn scale(&self, factor: C<T>) -> Self {
        Self { matrix: self.matrix.mapv(|z| z * factor) }
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self { matrix: linalg::kron(&self.matrix, &other.matrix) }
    }

    pub fn commutator(&self, other: &Self) -> Self {
        Self { matrix: linalg::commutator(&self.matrix, &other.matrix) }
    }

    pub fn apply(&self, v: &Array1<C<T>>) -> Result<Array1<C<T>>> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: v.len() });
        }
        Ok(self.matrix.dot(v))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        linalg::max_abs_diff(&self.matrix, &other.matrix)
    }

    pub fn max_abs(&self) -> T {
        linalg::max_abs(&self.matrix)
    }

    pub fn hermiticity_defect(&self) -> T {
        linalg::hermiticity_defect(&self.matrix)
    }

    pub fn unitarity_defect(&self) -> T {
        linalg::unitarity_defect(&self.matrix)
    }

    /// Ascending eigenvalues, assuming the operator is Hermitian.
    pub fn eigenvalues_hermitian(&self) -> Vec<T> {
        linalg::hermitian_eigen(&self.matrix).values
    }

    pub fn trace(&self) -> C<T> {
        linalg::trace(&self.matrix)
    }
}

impl<'a, T: Real> Add for &'a LinearOperator<T> {
    type Output = LinearOperator<T>;
    fn add(self, rhs: Self) -> LinearOperator<T> {
        LinearOperator { matrix: &self.matrix + &rhs.matrix }
    }
}

impl<'a, T: Real> Sub for &'a LinearOperator<T> {
    type Output = LinearOperator<T>;
    fn sub(self, rhs: Self) -> LinearOperator<T> {
        LinearOperator { matrix: &self.matrix - &rhs.matrix }
    }
}

impl<'a, T: Real> Mul for &'a LinearOperator<T> {
    type Output = LinearOperator<T>;
    fn mul(self, rhs: Self) -> LinearOperator<T> {
        LinearOperator { matrix: self.matrix.dot(&rhs.matrix) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StateKind {
    Pure,
    Mixed,
}

/// A normalized pure state or a density operator.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantumState<T: Real> {
    Pure(Array1<C<T>>),
    Mixed(Array2<C<T>>),
}

const STATE_TOL: f64 = 1e-10;

impl<T: Real> QuantumState<T> {
    /// Validated pure state: `‖ψ‖ = 1` within 1e-10.
    pub fn pure(vector: Array1<C<T>>) -> Result<Self> {
        let n = linalg::norm(&vector);
        if (n - T::one()).abs() > T::of(STATE_TOL) {
            return Err(Error::InvalidState(format!("pure state norm {n} differs from 1")));
        }
        Ok(Self::Pure(vector))
    }

    /// Normalizes `vector` before wrapping it.
    pub fn pure_normalized(vector: Array1<C<T>>) -> Result<Self> {
        let n = linalg::norm(&vector);
        if !(n > T::zero()) {
            return Err(Error::InvalidState("cannot normalize the zero vector".into()));
        }
        Ok(Self::Pure(vector.mapv(|z| z / re(n))))
    }

    /// Validated density matrix: unit trace, Hermitian, eigenvalues ≥ −1e-10.
    pub fn mixed(rho: Array2<C<T>>) -> Result<Self> {
        if rho.nrows() != rho.ncols() {
            return Err(Error::DimensionMismatch { expected: rho.nrows(), found: rho.ncols() });
        }
        let tol = T::of(STATE_TOL);
        let tr = linalg::trace(&rho);
        if (tr - C::one()).norm() > tol {
            return Err(Error::InvalidState(format!("density matrix trace {tr} differs from 1")));
        }
        if linalg::hermiticity_defect(&rho) > tol {
            return Err(Error::InvalidState("density matrix is not Hermitian".into()));
        }
        let min = linalg::hermitian_eigen(&rho).values.first().copied().unwrap_or_else(T::zero);
        if min < -tol {
            return Err(Error::InvalidState(format!("density matrix has negative eigenvalue {min}")));
        }
        Ok(Self::Mixed(rho))
    }

    pub(crate) fn mixed_unchecked(rho: Array2<C<T>>) -> Self {
        Self::Mixed(rho)
    }

    pub fn kind(&self) -> StateKind {
        match self {
            Self::Pure(_) => StateKind::Pure,
            Self::Mixed(_) => StateKind::Mixed,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Pure(v) => v.len(),
            Self::Mixed(m) => m.nrows(),
        }
    }

    pub fn density(&self) -> Array2<C<T>> {
        match self {
            Self::Pure(v) => linalg::outer(v, v),
            Self::Mixed(m) => m.clone(),
        }
    }

    pub fn as_pure(&self) -> Option<&Array1<C<T>>> {
        match self {
            Self::Pure(v) => Some(v),
            Self::Mixed(_) => None,
        }
    }

    pub fn trace(&self) -> C<T> {
        match self {
            Self::Pure(v) => re(linalg::norm(v).powi(2)),
            Self::Mixed(m) => linalg::trace(m),
        }
    }

    /// `⟨ψ|O|ψ⟩` or `Tr(ρO)`.
    pub fn expectation(&self, op: &LinearOperator<T>) -> Result<C<T>> {
        if op.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: op.dim() });
        }
        Ok(match self {
            Self::Pure(v) => linalg::inner(v, &op.matrix().dot(v)),
            Self::Mixed(m) => linalg::trace(&op.matrix().dot(m)),
        })
    }

    /// Tensor product `self ⊗ other`.
    pub fn tensor(&self, other: &Self) -> Self {
        match (self, other) {
            (Self::Pure(a), Self::Pure(b)) => Self::Pure(linalg::kron_vec(a, b)),
            _ => Self::Mixed(linalg::kron(&self.density(), &other.density())),
        }
    }

    /// Smallest eigenvalue of the density operator (zero for pure states).
    pub fn min_eigenvalue(&self) -> T {
        match self {
            Self::Pure(_) => T::zero(),
            Self::Mixed(m) => linalg::hermitian_eigen(m).values.first().copied().unwrap_or_else(T::zero),
        }
    }

    /// Writes the state as `Σ p_k |φ_k⟩⟨φ_k|`, dropping weights below `cut`.
    ///
    /// Diagonal density matrices decompose onto basis vectors directly, so a
    /// Fock-diagonal field state yields Fock states in ascending order.
    pub fn ensemble(&self, cut: T) -> Vec<(T, Array1<C<T>>)> {
        match self {
            Self::Pure(v) => vec![(T::one(), v.clone())],
            Self::Mixed(m) => {
                let n = m.nrows();
                let off = (0..n)
                    .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                    .fold(T::zero(), |s, (i, j)| s.max(m[[i, j]].norm()));
                if off == T::zero() {
                    (0..n)
                        .filter(|&k| m[[k, k]].re > cut)
                        .map(|k| {
                            let mut v = Array1::zeros(n);
                            v[k] = C::one();
                            (m[[k, k]].re, v)
                        })
                        .collect()
                } else {
                    let eig = linalg::hermitian_eigen(m);
                    eig.values
                        .iter()
                        .enumerate()
                        .rev()
                        .filter(|(_, &p)| p > cut)
                        .map(|(k, &p)| (p, eig.vectors.column(k).to_owned()))
                        .collect()
                }
            }
        }
    }
}

/// Tensor product of several states, first argument most significant.
pub fn tensor_states<T: Real>(states: &[&QuantumState<T>]) -> Result<QuantumState<T>> {
    let (first, rest) = states
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("tensor of an empty list".into()))?;
    Ok(rest.iter().fold((*first).clone(), |acc, s| acc.tensor(s)))
}

/// Single-atom operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtomicOp {
    /// `S⁺ = |e⟩⟨g|`.
    Raise,
    /// `S⁻ = |g⟩⟨e|`.
    Lower,
    /// `½(|e⟩⟨e| − |g⟩⟨g|)`.
    Sz,
    /// `σ⁺ = |+⟩⟨−|`.
    SigmaPlus,
    /// `σ⁻ = |−⟩⟨+|`.
    SigmaMinus,
    /// `σ_z = ½(|+⟩⟨+| − |−⟩⟨−|)`.
    SigmaZ,
}

pub fn ket_g<T: Real>() -> Array1<C<T>> {
    Array1::from(vec![C::one(), C::zero()])
}

pub fn ket_e<T: Real>() -> Array1<C<T>> {
    Array1::from(vec![C::zero(), C::one()])
}

/// `|+⟩ = (|g⟩ + |e⟩)/√2`.
pub fn ket_plus<T: Real>() -> Array1<C<T>> {
    let h = re(T::FRAC_1_SQRT_2());
    Array1::from(vec![h, h])
}

/// `|−⟩ = (|g⟩ − |e⟩)/√2`.
pub fn ket_minus<T: Real>() -> Array1<C<T>> {
    let h = re(T::FRAC_1_SQRT_2());
    Array1::from(vec![h, -h])
}

/// Real symmetric involution taking `|g⟩ ↦ |+⟩` and `|e⟩ ↦ |−⟩`.
pub fn basis_change<T: Real>() -> Array2<C<T>> {
    let h = re(T::FRAC_1_SQRT_2());
    Array2::from_shape_vec((2, 2), vec![h, h, h, -h]).expect("2x2")
}

/// Product of single-atom kets, atom 0 first.
pub fn product_ket<T: Real>(kets: &[Array1<C<T>>]) -> Array1<C<T>> {
    kets.iter()
        .fold(Array1::from(vec![C::one()]), |acc, k| linalg::kron_vec(&acc, k))
}

pub fn fock_ket<T: Real>(cutoff: usize, n: usize) -> Result<Array1<C<T>>> {
    if n >= cutoff {
        return Err(Error::InvalidArgument(format!("Fock level {n} outside cutoff {cutoff}")));
    }
    let mut v = Array1::zeros(cutoff);
    v[n] = C::one();
    Ok(v)
}

/// 2×2 matrix of a single-atom operator in the `{|g⟩, |e⟩}` basis.
pub fn atomic_matrix<T: Real>(which: AtomicOp) -> Array2<C<T>> {
    let (g, e, p, m) = (ket_g(), ket_e(), ket_plus(), ket_minus());
    let half = re(T::of(0.5));
    match which {
        AtomicOp::Raise => linalg::outer(&e, &g),
        AtomicOp::Lower => linalg::outer(&g, &e),
        AtomicOp::Sz => (linalg::outer(&e, &e) - linalg::outer(&g, &g)).mapv(|z| z * half),
        AtomicOp::SigmaPlus => linalg::outer(&p, &m),
        AtomicOp::SigmaMinus => linalg::outer(&m, &p),
        AtomicOp::SigmaZ => (linalg::outer(&p, &p) - linalg::outer(&m, &m)).mapv(|z| z * half),
    }
}

/// Truncated field annihilation operator on `cutoff` levels.
pub fn field_annihilation<T: Real>(cutoff: usize) -> Array2<C<T>> {
    let mut a = Array2::zeros((cutoff, cutoff));
    for n in 1..cutoff {
        a[[n - 1, n]] = re(T::of_usize(n).sqrt());
    }
    a
}

/// Lifts an operator on the atomic register to the composite space.
pub fn embed_atomic<T: Real>(spec: &HilbertSpec<T>, op: &Array2<C<T>>) -> Result<LinearOperator<T>> {
    if op.nrows() != spec.atom_dim() || op.ncols() != spec.atom_dim() {
        return Err(Error::DimensionMismatch { expected: spec.atom_dim(), found: op.nrows() });
    }
    Ok(LinearOperator::new_unchecked(linalg::kron(op, &linalg::identity(spec.fock_cutoff))))
}

/// Lifts a field operator to the composite space.
pub fn embed_field<T: Real>(spec: &HilbertSpec<T>, op: &Array2<C<T>>) -> Result<LinearOperator<T>> {
    if op.nrows() != spec.fock_cutoff || op.ncols() != spec.fock_cutoff {
        return Err(Error::DimensionMismatch { expected: spec.fock_cutoff, found: op.nrows() });
    }
    Ok(LinearOperator::new_unchecked(linalg::kron(&linalg::identity(spec.atom_dim()), op)))
}

/// Single-atom operator acting on `atom` of an `n_atoms` register.
pub fn register_operator<T: Real>(n_atoms: usize, atom: usize, which: AtomicOp) -> Result<Array2<C<T>>> {
    if atom >= n_atoms {
        return Err(Error::InvalidAtomIndex { index: atom, n_atoms });
    }
    let local = atomic_matrix::<T>(which);
    let id = linalg::identity::<T>(2);
    Ok((0..n_atoms).fold(linalg::identity::<T>(1), |acc, k| {
        linalg::kron(&acc, if k == atom { &local } else { &id })
    }))
}

/// `S_x = ½ Σ_j (S⁺_j + S⁻_j)` on the atomic register only.
pub fn register_sx<T: Real>(n_atoms: usize) -> Array2<C<T>> {
    let dim = 1usize << n_atoms;
    let half = re(T::of(0.5));
    let mut sx = Array2::zeros((dim, dim));
    // Flipping bit j of the basis index connects |…g_j…⟩ and |…e_j…⟩.
    for idx in 0..dim {
        for j in 0..n_atoms {
            let flipped = idx ^ (1 << (n_atoms - 1 - j));
            sx[[flipped, idx]] = sx[[flipped, idx]] + half;
        }
    }
    sx
}

/// Field annihilation `I_atoms ⊗ a` on the composite space.
pub fn annihilation<T: Real>(spec: &HilbertSpec<T>) -> LinearOperator<T> {
    embed_field(spec, &field_annihilation(spec.fock_cutoff)).expect("dimensions agree by construction")
}

/// Photon number `I_atoms ⊗ a†a`.
pub fn number_operator<T: Real>(spec: &HilbertSpec<T>) -> LinearOperator<T> {
    let a = field_annihilation::<T>(spec.fock_cutoff);
    embed_field(spec, &linalg::dagger(&a).dot(&a)).expect("dimensions agree by construction")
}

/// Single-atom operator on `atom` (0-based), identity on the other atoms and the field.
pub fn atomic_operator<T: Real>(spec: &HilbertSpec<T>, atom: usize, which: AtomicOp) -> Result<LinearOperator<T>> {
    embed_atomic(spec, &register_operator(spec.n_atoms, atom, which)?)
}

/// Collective `S_x` on the composite space.
pub fn collective_sx<T: Real>(spec: &HilbertSpec<T>) -> LinearOperator<T> {
    embed_atomic(spec, &register_sx(spec.n_atoms)).expect("dimensions agree by construction")
}

/// `Σ_j σ_z,j` built from the `|±⟩` projectors.
pub fn sigma_z_sum<T: Real>(spec: &HilbertSpec<T>) -> LinearOperator<T> {
    let mut acc = Array2::zeros((spec.atom_dim(), spec.atom_dim()));
    for j in 0..spec.n_atoms {
        acc = acc + register_operator::<T>(spec.n_atoms, j, AtomicOp::SigmaZ).expect("index in range");
    }
    embed_atomic(spec, &acc).expect("dimensions agree by construction")
}

/// Truncated geometric photon-number distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalDistribution<T> {
    pub nbar: T,
    /// Renormalized occupation of levels `0..cutoff`.
    pub probabilities: Vec<T>,
    /// Mass of the untruncated distribution above the cutoff, before renormalization.
    pub discarded_mass: T,
}

impl<T: Real> ThermalDistribution<T> {
    pub fn new(nbar: T, cutoff: usize) -> Result<Self> {
        if !(nbar >= T::zero()) || !nbar.is_finite() {
            return Err(Error::InvalidArgument(format!("mean photon number must be >= 0, got {nbar}")));
        }
        if cutoff == 0 {
            return Err(Error::InvalidArgument("cutoff must be positive".into()));
        }
        let ratio = nbar / (T::one() + nbar);
        let mut raw = Vec::with_capacity(cutoff);
        let mut p = T::one() / (T::one() + nbar);
        for _ in 0..cutoff {
            raw.push(p);
            p = p * ratio;
        }
        let kept = raw.iter().fold(T::zero(), |s, &x| s + x);
        let probabilities = raw.iter().map(|&x| x / kept).collect();
        Ok(Self { nbar, probabilities, discarded_mass: ratio.powi(cutoff as i32) })
    }

    /// Renormalized mass strictly above level `n`.
    pub fn tail_above(&self, n: usize) -> T {
        self.probabilities.iter().skip(n + 1).fold(T::zero(), |s, &x| s + x)
    }
}

/// Field-only thermal state of mean photon number `nbar`, renormalized on
/// `spec.fock_cutoff` levels. Tensor it with an atomic state to obtain a
/// composite state.
pub fn thermal_state<T: Real>(spec: &HilbertSpec<T>, nbar: T) -> Result<QuantumState<T>> {
    thermal_field(spec.fock_cutoff, nbar)
}

pub fn thermal_field<T: Real>(cutoff: usize, nbar: T) -> Result<QuantumState<T>> {
    let dist = ThermalDistribution::new(nbar, cutoff)?;
    let diag = Array1::from(dist.probabilities.iter().map(|&p| re(p)).collect::<Vec<_>>());
    Ok(QuantumState::mixed_unchecked(Array2::from_diag(&diag)))
}

fn reduced<T: Real>(spec: &HilbertSpec<T>, state: &QuantumState<T>, keep_atoms: bool) -> Result<QuantumState<T>> {
    if state.dim() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), found: state.dim() });
    }
    let (na, nf) = (spec.atom_dim(), spec.fock_cutoff);
    let out_dim = if keep_atoms { na } else { nf };
    let mut out = Array2::<C<T>>::zeros((out_dim, out_dim));
    match state {
        QuantumState::Pure(v) => {
            for i in 0..out_dim {
                for j in 0..out_dim {
                    let mut acc = C::zero();
                    if keep_atoms {
                        for n in 0..nf {
                            acc = acc + v[spec.index(i, n)] * v[spec.index(j, n)].conj();
                        }
                    } else {
                        for a in 0..na {
                            acc = acc + v[spec.index(a, i)] * v[spec.index(a, j)].conj();
                        }
                    }
                    out[[i, j]] = acc;
                }
            }
        }
        QuantumState::Mixed(m) => {
            for i in 0..out_dim {
                for j in 0..out_dim {
                    let mut acc = C::zero();
                    if keep_atoms {
                        for n in 0..nf {
                            acc = acc + m[[spec.index(i, n), spec.index(j, n)]];
                        }
                    } else {
                        for a in 0..na {
                            acc = acc + m[[spec.index(a, i), spec.index(a, j)]];
                        }
                    }
                    out[[i, j]] = acc;
                }
            }
        }
    }
    Ok(QuantumState::mixed_unchecked(out))
}

/// Reduced atomic density matrix.
pub fn partial_trace_field<T: Real>(spec: &HilbertSpec<T>, state: &QuantumState<T>) -> Result<QuantumState<T>> {
    reduced(spec, state, true)
}

/// Reduced field density matrix.
pub fn partial_trace_atoms<T: Real>(spec: &HilbertSpec<T>, state: &QuantumState<T>) -> Result<QuantumState<T>> {
    reduced(spec, state, false)
}

/// Population in the two highest Fock levels of a composite state.
pub fn top_level_population<T: Real>(spec: &HilbertSpec<T>, state: &QuantumState<T>) -> Result<T> {
    let field = partial_trace_atoms(spec, state)?;
    let rho = field.density();
    let c = spec.fock_cutoff;
    Ok((c.saturating_sub(2)..c).fold(T::zero(), |s, n| s + rho[[n, n]].re))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;

    fn spec(n_atoms: usize, cutoff: usize) -> HilbertSpec<f64> {
        HilbertSpec::new(n_atoms, cutoff, 1.0, 1.0, 0.0).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(HilbertSpec::new(0, 4, 1.0, 1.0, 0.0).is_err());
        assert!(HilbertSpec::new(1, 1, 1.0, 1.0, 0.0).is_err());
        assert!(HilbertSpec::new(1, 4, 0.0, 1.0, 0.0).is_err());
        assert!(HilbertSpec::new(1, 4, -1.0, 1.0, 0.0).is_err());
        assert_eq!(spec(3, 5).dim(), 40);
    }

    #[test]
    fn annihilation_lowest_levels() {
        let s = spec(1, 2);
        let a = annihilation(&s);
        assert_eq!(a.dim(), 4);
        for atom in 0..2 {
            // a|1⟩ = |0⟩, a|0⟩ = 0.
            assert_eq!(a.entry(s.index(atom, 0), s.index(atom, 1)), C::one());
            assert!(a.matrix().column(s.index(atom, 0)).iter().all(|z| z.is_zero()));
        }
    }

    #[test]
    fn annihilation_matrix_element() {
        let s = spec(1, 4);
        let a = annihilation(&s);
        assert!((a.entry(s.index(0, 2), s.index(0, 3)).re - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn number_operator_spectrum() {
        let s = spec(1, 3);
        let vals = number_operator(&s).eigenvalues_hermitian();
        let expected = [0.0, 0.0, 1.0, 1.0, 2.0, 2.0];
        for (v, e) in vals.iter().zip(expected) {
            assert!((v - e).abs() < 1e-13);
        }
    }

    #[test]
    fn truncated_canonical_commutator() {
        let s = spec(2, 6);
        let a = annihilation(&s);
        let comm = a.commutator(&a.adjoint());
        for atoms in 0..s.atom_dim() {
            for n in 0..s.fock_cutoff - 1 {
                let i = s.index(atoms, n);
                assert!((comm.entry(i, i) - C::one()).norm() < 1e-13);
            }
        }
        // Only the top level deviates.
        let top = s.index(0, s.fock_cutoff - 1);
        assert!((comm.entry(top, top).re - (1.0 - s.fock_cutoff as f64)).abs() < 1e-12);
    }

    #[test]
    fn sigma_plus_maps_minus_to_plus() {
        let s = spec(1, 3);
        let op = atomic_operator(&s, 0, AtomicOp::SigmaPlus).unwrap();
        for n in 0..3 {
            let input = linalg::kron_vec(&ket_minus(), &fock_ket(3, n).unwrap());
            let expected = linalg::kron_vec(&ket_plus(), &fock_ket(3, n).unwrap());
            let out = op.apply(&input).unwrap();
            assert!(out.iter().zip(expected.iter()).all(|(a, b)| (a - b).norm() < 1e-15));
        }
    }

    #[test]
    fn raise_is_nilpotent() {
        let s = spec(2, 3);
        for j in 0..2 {
            let sp = atomic_operator(&s, j, AtomicOp::Raise).unwrap();
            assert!((&sp * &sp).max_abs() == 0.0);
        }
    }

    #[test]
    fn sigma_z_is_half_sx_of_original_basis() {
        let s = spec(2, 2);
        for j in 0..2 {
            let sz = atomic_operator(&s, j, AtomicOp::SigmaZ).unwrap();
            let sp = atomic_operator(&s, j, AtomicOp::Raise).unwrap();
            let sm = atomic_operator(&s, j, AtomicOp::Lower).unwrap();
            let rhs = (&sp + &sm).scale(re(0.5));
            assert!(sz.max_abs_diff(&rhs) < 1e-15);
        }
    }

    #[test]
    fn sigma_operators_are_conjugated_raise_lower() {
        // W maps |g⟩→|+⟩, |e⟩→|−⟩, so σ⁺ = |+⟩⟨−| = W S⁻ W and σ_z = −W Sz W.
        let w = basis_change::<f64>();
        let conj = |m: Array2<C<f64>>| w.dot(&m).dot(&w);
        assert!(max_abs_diff(&atomic_matrix(AtomicOp::SigmaPlus), &conj(atomic_matrix(AtomicOp::Lower))) < 1e-15);
        assert!(max_abs_diff(&atomic_matrix(AtomicOp::SigmaMinus), &conj(atomic_matrix(AtomicOp::Raise))) < 1e-15);
        assert!(
            max_abs_diff(&atomic_matrix(AtomicOp::SigmaZ), &conj(atomic_matrix(AtomicOp::Sz)).mapv(|z| -z)) < 1e-15
        );
    }

    #[test]
    fn basis_change_is_real_symmetric_involution() {
        let w = basis_change::<f64>();
        assert!(max_abs_diff(&w.dot(&w), &linalg::identity(2)) < 1e-15);
        assert!(max_abs_diff(&w, &w.t().to_owned()) == 0.0);
        assert!(w.iter().all(|z| z.im == 0.0));
    }

    #[test]
    fn atom_index_is_checked() {
        let s = spec(2, 2);
        assert_eq!(
            atomic_operator(&s, 2, AtomicOp::Raise).unwrap_err(),
            Error::InvalidAtomIndex { index: 2, n_atoms: 2 }
        );
    }

    #[test]
    fn collective_sx_spectra() {
        let one = collective_sx(&spec(1, 2)).eigenvalues_hermitian();
        assert!((one[0] + 0.5).abs() < 1e-14 && (one[3] - 0.5).abs() < 1e-14);

        // N = 2 register: {-1, 0, 0, 1}.
        let reg = LinearOperator::from_matrix(register_sx::<f64>(2)).unwrap();
        let vals = reg.eigenvalues_hermitian();
        for (v, e) in vals.iter().zip([-1.0, 0.0, 0.0, 1.0]) {
            assert!((v - e).abs() < 1e-14);
        }
    }

    #[test]
    fn sx_commutes_with_photon_number() {
        let s = spec(3, 4);
        let comm = collective_sx(&s).commutator(&number_operator(&s));
        assert_eq!(comm.max_abs(), 0.0);
    }

    #[test]
    fn sigma_z_sum_equals_sx() {
        let s = spec(3, 2);
        assert!(sigma_z_sum(&s).max_abs_diff(&collective_sx(&s)) < 1e-15);
    }

    #[test]
    fn thermal_limits() {
        let vac = thermal_field::<f64>(5, 0.0).unwrap().density();
        assert_eq!(vac[[0, 0]], C::one());
        assert!(vac.iter().skip(1).all(|z| z.is_zero()));

        let d = ThermalDistribution::new(1.0f64, 60).unwrap();
        assert!((d.probabilities[0] - 0.5).abs() < 1e-15);
        assert!((d.probabilities[1] - 0.25).abs() < 1e-15);

        assert!(thermal_field::<f64>(5, -0.1).is_err());
    }

    #[test]
    fn thermal_tail_and_normalization() {
        let d = ThermalDistribution::new(2.0f64, 20).unwrap();
        let sum: f64 = d.probabilities.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        // Oracle: renormalized geometric tail Σ_{n=16}^{19} p_n.
        let raw: Vec<f64> = (0..20).map(|n| 2f64.powi(n) / 3f64.powi(n + 1)).collect();
        let kept: f64 = raw.iter().sum();
        let tail: f64 = raw[16..].iter().sum::<f64>() / kept;
        assert!((d.tail_above(15) - tail).abs() < 1e-15);
        assert!(d.tail_above(15) < 1e-2);
        assert!((d.discarded_mass - (2.0f64 / 3.0).powi(20)).abs() < 1e-15);
    }

    #[test]
    fn partial_trace_of_product_state() {
        let s = spec(2, 3);
        let atoms = product_ket(&[ket_g(), ket_g()]);
        let psi = QuantumState::pure(linalg::kron_vec(&atoms, &fock_ket(3, 0).unwrap())).unwrap();
        let rho = partial_trace_field(&s, &psi).unwrap().density();
        assert!(max_abs_diff(&rho, &linalg::outer(&atoms, &atoms)) < 1e-15);
    }

    #[test]
    fn partial_trace_of_entangled_pair_is_maximally_mixed() {
        let s = spec(1, 2);
        // (|g,0⟩ + |e,1⟩)/√2
        let mut v = Array1::zeros(4);
        v[s.index(0, 0)] = re(0.5f64.sqrt());
        v[s.index(1, 1)] = re(0.5f64.sqrt());
        let psi = QuantumState::pure(v).unwrap();
        let half = Array2::from_diag_elem(2, re(0.5));
        assert!(max_abs_diff(&partial_trace_field(&s, &psi).unwrap().density(), &half) < 1e-15);
        assert!(max_abs_diff(&partial_trace_atoms(&s, &psi).unwrap().density(), &half) < 1e-15);
    }

    #[test]
    fn partial_trace_dimension_mismatch() {
        let s = spec(1, 3);
        let wrong = QuantumState::pure(fock_ket(4, 0).unwrap()).unwrap();
        assert!(matches!(partial_trace_atoms(&s, &wrong), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn state_validation() {
        assert!(QuantumState::pure(Array1::from(vec![re(1.0f64), re(1.0)])).is_err());
        assert!(QuantumState::mixed(Array2::from_diag_elem(2, re(0.6f64))).is_err());
        let mut neg = Array2::from_diag_elem(2, re(0.5f64));
        neg[[0, 0]] = re(1.2);
        neg[[1, 1]] = re(-0.2);
        assert!(QuantumState::mixed(neg).is_err());
    }

    #[test]
    fn ensemble_of_diagonal_state_lists_fock_levels() {
        let thermal = thermal_field::<f64>(6, 1.0).unwrap();
        let ens = thermal.ensemble(0.0);
        assert_eq!(ens.len(), 6);
        for (k, (_, v)) in ens.iter().enumerate() {
            assert_eq!(v[k], C::one());
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_density(dim: usize) -> impl Strategy<Value = Array2<C<f64>>> {
            proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim * dim).prop_map(move |raw| {
                let m = Array2::from_shape_fn((dim, dim), |(i, j)| C::new(raw[i * dim + j].0, raw[i * dim + j].1));
                let rho = m.dot(&linalg::dagger(&m));
                let tr = linalg::trace(&rho);
                rho.mapv(|z| z / tr)
            })
        }

        proptest! {
            #[test]
            fn partial_traces_preserve_trace(rho in arb_density(12)) {
                let s = spec(1, 6);
                let state = QuantumState::mixed(rho).unwrap();
                let tf = partial_trace_field(&s, &state).unwrap().trace();
                let ta = partial_trace_atoms(&s, &state).unwrap().trace();
                prop_assert!((tf - C::one()).norm() < 1e-12);
                prop_assert!((ta - C::one()).norm() < 1e-12);
            }

            #[test]
            fn thermal_probabilities_sum_to_one(nbar in 0.0f64..20.0, cutoff in 2usize..40) {
                let d = ThermalDistribution::new(nbar, cutoff).unwrap();
                let sum: f64 = d.probabilities.iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-12);
            }
        }
    }
}
