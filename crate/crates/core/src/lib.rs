//! Simulation and analysis of adaptive PXP circuits on the Rydberg-constrained
//! ("Fibonacci") Hilbert space.
//!
//! The crate contains two engines for the same stochastic protocol: a
//! state-vector engine generic over the scalar type ([`statevec`],
//! [`dynamics`], [`control`]) and a bit-packed cellular automaton for the
//! classical θ = π/2 limit ([`automaton`]). On top sit the observables, the
//! trajectory harness, finite-size-scaling analysis and the ancilla-register
//! magnetization meter.

pub mod automaton;
pub mod config;
pub mod control;
pub mod dynamics;
pub mod fss;
pub mod harness;
pub mod hilbert;
pub mod io;
pub mod magmeter;
pub mod observables;
pub mod rng;
pub mod scalar;
pub mod statevec;

pub use automaton::BitState;
pub use control::{ControlOutcome, TargetPattern};
pub use hilbert::FibBasis;
pub use scalar::Real;
pub use statevec::PureState;

/// Double-precision state vector, the default for all experiments.
pub type State = PureState<f64>;
/// Single-precision state vector.
pub type State32 = PureState<f32>;
/// Double-precision chaotic-step parameters.
pub type ChaoticStep = dynamics::ChaoticStepSpec<f64>;
