//! Lie-group variational integrators and discrete optimal control for
//! interconnected (actuated × unactuated) mechanical systems.
//!
//! The geometric layers ([`lie`], [`mechanics`], [`integrator`],
//! [`optimal_control`]) are generic over the scalar type through [`Real`].
//! The shooting solver, the built-in systems and the artifact formats work in
//! `f64`; the aliases at the crate root name the `f64` instances.

pub mod integrator;
pub mod lie;
pub mod linalg;
pub mod mechanics;
pub mod optimal_control;
pub mod scalar;
pub mod shooting;
pub mod systems;

pub use scalar::Real;

pub type GroupElementF64 = lie::GroupElement<f64>;
pub type AlgebraVectorF64 = lie::AlgebraVector<f64>;
pub type CoAlgebraVectorF64 = lie::CoAlgebraVector<f64>;
pub type ModelSpecF64 = mechanics::ModelSpec<f64>;
pub type ProductStateF64 = integrator::ProductState<f64>;
pub type TrajectoryF64 = integrator::Trajectory<f64>;
pub type OcProblemF64 = optimal_control::OcProblem<f64>;
pub type MultiplierSetF64 = optimal_control::MultiplierSet<f64>;
pub type KktResidualF64 = optimal_control::KktResidual<f64>;
