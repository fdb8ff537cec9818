//! Persistence and experiment orchestration.

mod experiment;
mod snapshot;
mod tables;

pub use experiment::{
    median, run_experiment, write_bundle, BudgetSpec, Cell, CellData, Checkpoint, Checkpoints, ExperimentError,
    ExperimentReport, ExperimentSpec, Histogram, InstanceSource, NominalRun, SolverSpec, Strategy, SummaryRow,
    WarmSpec, EXPERIMENT_FORMAT,
};
pub use snapshot::{load_tree, read_snapshot, save_tree, write_snapshot, SnapshotError, TreeSnapshot, TREE_FORMAT};
pub use tables::{oracle_to_csv, trace_from_csv, trace_to_csv, TableError, TRACE_HEADER};
