//! Geometric phases of two interacting Rydberg atoms moved by optical tweezers.
//!
//! The library is generic over the floating-point type; the `f64`
//! aliases at the crate root are what the CLI and experiments use.

// `!(x > 0.0)` rejects NaN on purpose; index loops mirror the matrix algebra.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod hamiltonian;
pub mod linalg;
pub mod noise;
pub mod optimal;
pub mod phase;
pub mod scalar;
pub mod units;
pub mod wigner;

pub use error::{Error, Result};
pub use scalar::Real;

pub type State = scalar::StateVector<f64>;
pub type Control = control::ControlSignal<f64>;
pub type Coupling = hamiltonian::DipoleCoupling<f64>;
pub type Hamiltonian = hamiltonian::HamiltonianMatrix<f64>;
pub type System = dynamics::PairSystem<f64>;
pub type PairState = dynamics::AtomPairState<f64>;
pub type Trajectory = dynamics::TrajectoryRecord<f64>;
pub type Problem = optimal::ControlProblem<f64>;
pub type ObjectiveWeights = optimal::Weights<f64>;
pub type Optimization = optimal::OptimizationResult<f64>;
pub type Circle = optimal::CircleGeometry<f64>;
