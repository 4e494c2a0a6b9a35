use thiserror::Error;

/// Failures raised by the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid Hilbert space: {0}")]
    InvalidSpec(String),

    #[error("atom index {index} out of range for {n_atoms} atom(s)")]
    InvalidAtomIndex { index: usize, n_atoms: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("detuning must be non-zero for the closed-form propagator coefficients")]
    ZeroDetuning,

    #[error("integrator did not converge: {0}")]
    NonConvergence(String),

    #[error("Fock truncation leakage {leakage:.3e} exceeds limit {limit:.1e} (cutoff {cutoff})")]
    Truncation { leakage: f64, limit: f64, cutoff: usize },

    #[error("operator dimension {dim} exceeds the materialization limit {limit}")]
    DimensionTooLarge { dim: usize, limit: usize },

    #[error("fidelity between two mixed states is not supported")]
    MixedMixedFidelity,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
