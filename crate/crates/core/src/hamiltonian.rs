//! Hamiltonians of the driven multi-atom cavity, from the interaction
//! picture down to the effective collective coupling.
//!
//! A [`TimeDependentHamiltonian`] is a sum of constant operators weighted by
//! scalar coefficients that are either constant or a single complex
//! exponential in time. Integrators sample it through [`TimeDependentHamiltonian::evaluate`]
//! or consume the terms directly.

use ndarray::Array2;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::linalg;
use crate::operators::{self, AtomicOp, HilbertSpec, LinearOperator};
use crate::scalar::{cis, re, Real, C};

/// Scalar time dependence of one Hamiltonian term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coefficient<T> {
    Constant(C<T>),
    /// `amplitude · e^{i·frequency·t}`.
    Oscillating { amplitude: C<T>, frequency: T },
}

impl<T: Real> Coefficient<T> {
    #[inline]
    pub fn at(&self, t: T) -> C<T> {
        match *self {
            Self::Constant(c) => c,
            Self::Oscillating { amplitude, frequency } => amplitude * cis(frequency * t),
        }
    }

    fn phase(frequency: T) -> Self {
        Self::Oscillating { amplitude: re(T::one()), frequency }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term<T: Real> {
    pub coefficient: Coefficient<T>,
    pub operator: LinearOperator<T>,
}

/// Operator-valued function of time `H(t) = Σ_k c_k(t) O_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeDependentHamiltonian<T: Real> {
    spec: HilbertSpec<T>,
    label: String,
    terms: Vec<Term<T>>,
}

impl<T: Real> TimeDependentHamiltonian<T> {
    pub fn new(spec: HilbertSpec<T>, label: impl Into<String>, terms: Vec<Term<T>>) -> Result<Self> {
        if let Some(bad) = terms.iter().find(|t| t.operator.dim() != spec.dim()) {
            return Err(Error::DimensionMismatch { expected: spec.dim(), found: bad.operator.dim() });
        }
        Ok(Self { spec, label: label.into(), terms })
    }

    /// Time-independent Hamiltonian.
    pub fn constant(spec: HilbertSpec<T>, label: impl Into<String>, op: LinearOperator<T>) -> Result<Self> {
        Self::new(spec, label, vec![Term { coefficient: Coefficient::Constant(re(T::one())), operator: op }])
    }

    pub fn spec(&self) -> &HilbertSpec<T> {
        &self.spec
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn terms(&self) -> &[Term<T>] {
        &self.terms
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn evaluate(&self, t: T) -> LinearOperator<T> {
        let mut acc = Array2::<C<T>>::zeros((self.dim(), self.dim()));
        for term in &self.terms {
            let k = term.coefficient.at(t);
            if k.is_zero() {
                continue;
            }
            acc.zip_mut_with(term.operator.matrix(), |a, &o| *a = *a + k * o);
        }
        LinearOperator::new_unchecked(acc)
    }

    /// Sum of two Hamiltonians on the same space.
    pub fn plus(&self, other: &Self, label: impl Into<String>) -> Result<Self> {
        if other.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Self::new(self.spec, label, terms)
    }

    /// Largest oscillation frequency among the terms.
    pub fn max_frequency(&self) -> T {
        self.terms.iter().fold(T::zero(), |m, t| match t.coefficient {
            Coefficient::Constant(_) => m,
            Coefficient::Oscillating { frequency, .. } => m.max(frequency.abs()),
        })
    }
}

fn sum_over<T: Real>(
    spec: &HilbertSpec<T>,
    atoms: &[usize],
    which: AtomicOp,
) -> Result<Array2<C<T>>> {
    let mut acc = Array2::zeros((spec.atom_dim(), spec.atom_dim()));
    for &j in atoms {
        acc = acc + operators::register_operator::<T>(spec.n_atoms, j, which)?;
    }
    Ok(acc)
}

/// `scale · (atomic ⊗ field)`.
fn field_times<T: Real>(atomic: &Array2<C<T>>, field: &Array2<C<T>>, scale: T) -> LinearOperator<T> {
    LinearOperator::new_unchecked(linalg::kron(atomic, field).mapv(|z| z * re(scale)))
}

fn all_atoms<T: Real>(spec: &HilbertSpec<T>) -> Vec<usize> {
    (0..spec.n_atoms).collect()
}

fn check_atoms<T: Real>(spec: &HilbertSpec<T>, atoms: &[usize]) -> Result<()> {
    match atoms.iter().find(|&&j| j >= spec.n_atoms) {
        Some(&j) => Err(Error::InvalidAtomIndex { index: j, n_atoms: spec.n_atoms }),
        None => Ok(()),
    }
}

/// Interaction-picture Hamiltonian with the drive resonant on the atoms:
///
/// `H_i(t) = Σ_j [ (g/2)(e^{−iδt} a†S⁻_j + e^{iδt} a S⁺_j) + (Ω/2)(S⁺_j + S⁻_j) ]`.
pub fn build_interaction<T: Real>(spec: &HilbertSpec<T>) -> TimeDependentHamiltonian<T> {
    build_interaction_for(spec, &all_atoms(spec)).expect("all atoms are in range")
}

/// [`build_interaction`] restricted to the atoms in `atoms`; the others
/// neither couple to the cavity nor see the drive.
pub fn build_interaction_for<T: Real>(spec: &HilbertSpec<T>, atoms: &[usize]) -> Result<TimeDependentHamiltonian<T>> {
    check_atoms(spec, atoms)?;
    let half = T::of(0.5);
    let a = operators::field_annihilation::<T>(spec.fock_cutoff);
    let ad = linalg::dagger(&a);
    let lower = sum_over(spec, atoms, AtomicOp::Lower)?;
    let raise = sum_over(spec, atoms, AtomicOp::Raise)?;
    let emit = field_times(&lower, &ad, spec.g * half);
    let absorb = field_times(&raise, &a, spec.g * half);
    let drive = operators::embed_atomic(spec, &(&raise + &lower).mapv(|z| z * re(spec.omega_rabi * half)))?;
    TimeDependentHamiltonian::new(
        *spec,
        "interaction",
        vec![
            Term { coefficient: Coefficient::phase(-spec.delta), operator: emit },
            Term { coefficient: Coefficient::phase(spec.delta), operator: absorb },
            Term { coefficient: Coefficient::Constant(re(T::one())), operator: drive },
        ],
    )
}

/// Drive-frame generator `H0 = Ω Σ_j σ_z,j`.
pub fn build_drive_frame<T: Real>(spec: &HilbertSpec<T>) -> LinearOperator<T> {
    operators::sigma_z_sum(spec).scale(re(spec.omega_rabi))
}

/// Effective coupling after dropping the terms rotating at ±Ω:
///
/// `H_eff(t) = (g/2)(e^{−iδt} a† + e^{iδt} a) Σ_j σ_z,j`.
pub fn build_effective<T: Real>(spec: &HilbertSpec<T>) -> TimeDependentHamiltonian<T> {
    let half = T::of(0.5);
    let a = operators::field_annihilation::<T>(spec.fock_cutoff);
    let ad = linalg::dagger(&a);
    let sz = sum_over(spec, &all_atoms(spec), AtomicOp::SigmaZ).expect("all atoms are in range");
    TimeDependentHamiltonian::new(
        *spec,
        "effective",
        vec![
            Term { coefficient: Coefficient::phase(-spec.delta), operator: field_times(&sz, &ad, spec.g * half) },
            Term { coefficient: Coefficient::phase(spec.delta), operator: field_times(&sz, &a, spec.g * half) },
        ],
    )
    .expect("dimensions agree by construction")
}

/// Terms discarded by the effective description, written in the drive frame:
///
/// `ΔH(t) = (g/4) Σ_j [ −e^{i(Ω−δ)t} a†σ⁺_j + e^{−i(Ω+δ)t} a†σ⁻_j + e^{i(Ω+δ)t} aσ⁺_j − e^{−i(Ω−δ)t} aσ⁻_j ]`.
///
/// The signs follow from `S⁻ = σ_z − ½σ⁺ + ½σ⁻` under `|±⟩ = (|g⟩ ± |e⟩)/√2`.
pub fn build_residual<T: Real>(spec: &HilbertSpec<T>) -> TimeDependentHamiltonian<T> {
    let quarter = spec.g * T::of(0.25);
    let (omega, delta) = (spec.omega_rabi, spec.delta);
    let a = operators::field_annihilation::<T>(spec.fock_cutoff);
    let ad = linalg::dagger(&a);
    let atoms = all_atoms(spec);
    let sp = sum_over(spec, &atoms, AtomicOp::SigmaPlus).expect("all atoms are in range");
    let sm = sum_over(spec, &atoms, AtomicOp::SigmaMinus).expect("all atoms are in range");
    let term = |atomic: &Array2<C<T>>, field: &Array2<C<T>>, sign: T, frequency: T| Term {
        coefficient: Coefficient::phase(frequency),
        operator: field_times(atomic, field, quarter * sign),
    };
    TimeDependentHamiltonian::new(
        *spec,
        "residual",
        vec![
            term(&sp, &ad, -T::one(), omega - delta),
            term(&sm, &ad, T::one(), -(omega + delta)),
            term(&sp, &a, T::one(), omega + delta),
            term(&sm, &a, -T::one(), -(omega - delta)),
        ],
    )
    .expect("dimensions agree by construction")
}

/// Interaction Hamiltonian in the frame rotating with `H0`:
/// `H'(t) = e^{iH0t}(H_i(t) − H0)e^{−iH0t} = H_eff(t) + ΔH(t)`.
pub fn build_rotated<T: Real>(spec: &HilbertSpec<T>) -> TimeDependentHamiltonian<T> {
    build_effective(spec)
        .plus(&build_residual(spec), "rotated")
        .expect("same space")
}

/// Effective dynamics expressed back in the interaction picture,
/// `H0 + H_eff(t)` restricted to `atoms`. Since `H0` and `H_eff` are both
/// built from `σ_z,j`, the frame change leaves `H_eff` unchanged.
pub fn build_effective_interaction_frame<T: Real>(
    spec: &HilbertSpec<T>,
    atoms: &[usize],
) -> Result<TimeDependentHamiltonian<T>> {
    check_atoms(spec, atoms)?;
    let half = T::of(0.5);
    let a = operators::field_annihilation::<T>(spec.fock_cutoff);
    let ad = linalg::dagger(&a);
    let sz = sum_over(spec, atoms, AtomicOp::SigmaZ)?;
    let drive = operators::embed_atomic(spec, &sz.mapv(|z| z * re(spec.omega_rabi)))?;
    TimeDependentHamiltonian::new(
        *spec,
        "effective-interaction-frame",
        vec![
            Term { coefficient: Coefficient::phase(-spec.delta), operator: field_times(&sz, &ad, spec.g * half) },
            Term { coefficient: Coefficient::phase(spec.delta), operator: field_times(&sz, &a, spec.g * half) },
            Term { coefficient: Coefficient::Constant(re(T::one())), operator: drive },
        ],
    )
}
