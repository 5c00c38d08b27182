//! Optimal control of hybrid systems with autonomous state jumps.
//!
//! The solver is a relaxed method of successive approximations built on the
//! hybrid minimum principle: forward Euler with collision-time insertion,
//! a backward costate sweep with jump conditions, and a relaxed pointwise
//! Hamiltonian minimization. The [`disc`] module provides the two-disc
//! collision benchmarks, [`oracle`] their analytic optimal controls, and
//! [`direct`] a gradient-descent baseline on the discretized problem.

pub mod backward;
pub mod direct;
pub mod disc;
pub mod error;
pub mod experiment;
pub mod forward;
pub mod ocp;
pub mod oracle;
pub mod solver;

pub use backward::{CostateGrid, JumpControls, JumpRecord};
pub use disc::{CostKind, DiscWorld, DiscWorldConfig, Wall};
pub use error::{Error, Result};
pub use forward::{CollisionRecord, HybridTrajectory, StepOutcome};
pub use ocp::{ControlGrid, HybridProblem, ManifoldId};
pub use solver::{SolveReport, SolverParams, StopRule};

#[cfg(test)]
mod testing;
