//! Distributed trainer for structured SVMs with L2 slack penalties.
//!
//! The training problem is solved in the dual: a box-constrained QP over
//! working sets of structures, one block per instance. Each worker owns a
//! partition of the data and repeatedly solves a direction subproblem under
//! a block-diagonal surrogate Hessian, so the only cross-worker traffic per
//! iteration is one weight-space vector reduction and a handful of scalars
//! for the exact line search.

pub mod baselines;
pub mod comm;
pub mod config;
pub mod driver;
pub mod dual;
pub mod hashing;
pub mod model;
pub mod sparse;
pub mod subsolver;
pub mod tasks;

pub use config::{ConfigError, TrainConfig};
pub use dual::{DualState, InstanceState, WorkingSetEntry};
pub use model::ModelVector;
pub use sparse::SparseVec;
