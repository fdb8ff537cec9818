//! Energy-aware task assignment and routing for battery-powered robot fleets
//! running paired pickup-and-delivery jobs.
//!
//! The crate is split along the solve pipeline:
//!
//! - [`instance`]: point clouds, fleets, energy matrices and perturbations.
//! - [`routing`]: single-robot depth-first branch-and-bound under precedence,
//!   payload, state-of-charge and depot-recharge constraints.
//! - [`mcts`]: the task-assignment search tree, LCB selection and the anytime
//!   search loop.
//! - [`warm`]: re-using a nominal search tree after the problem changes.
//! - [`oracle`]: exhaustive ground truth and the decentralized rerouting baseline.
//! - [`io`]: tree snapshots, convergence traces, experiment orchestration.
//!
//! Rollout batches, oracle enumeration and experiment repetitions are
//! data-parallel. With the `parallel` feature (default) they run on rayon;
//! [`ExecMode`] selects the path at runtime and results are identical either way.

pub mod instance;
pub mod io;
pub mod mcts;
pub mod oracle;
mod par;
mod rng;
pub mod routing;
pub mod warm;

pub use instance::{
    derive_mht_instance, energy_matrix, load_tsplib, DeriveOptions, EnergyMatrix, Fleet, Instance,
    InstanceError, Perturbation, PointCloud, Robot, RobotType, Task,
};
pub use mcts::{
    Assignment, ConvergenceTrace, Incumbent, Phase, SearchBudget, SearchTree, SolverConfig,
    TraceRow,
};
pub use par::ExecMode;
pub use routing::{Route, RoutingBudget};
