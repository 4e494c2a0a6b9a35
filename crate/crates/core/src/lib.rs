//! Simulator for a thermal-field-insensitive two-qubit phase gate and
//! multiatom GHZ generation with atoms in a driven, detuned cavity.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar for the common cases.

pub mod analysis;
pub mod error;
pub mod gates;
pub mod hamiltonian;
pub mod linalg;
pub mod operators;
pub mod propagator;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::{Real, C};

pub type HilbertSpec = operators::HilbertSpec<f64>;
pub type LinearOperator = operators::LinearOperator<f64>;
pub type QuantumState = operators::QuantumState<f64>;
pub type Hamiltonian = hamiltonian::TimeDependentHamiltonian<f64>;
pub type PropagatorCoefficients = propagator::PropagatorCoefficients<f64>;
pub type IntegratorConfig = propagator::IntegratorConfig<f64>;
pub type GateParameters = gates::GateParameters<f64>;
pub type GhzParameters = gates::GhzParameters<f64>;
pub type Model = gates::Model<f64>;
pub type FidelityReport = analysis::FidelityReport<f64>;

pub type HilbertSpec32 = operators::HilbertSpec<f32>;
pub type LinearOperator32 = operators::LinearOperator<f32>;
pub type QuantumState32 = operators::QuantumState<f32>;
pub type GateParameters32 = gates::GateParameters<f32>;
pub type FidelityReport32 = analysis::FidelityReport<f32>;
