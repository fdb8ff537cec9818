//! Task-assignment search.
//!
//! Depth `d` of the tree assigns a robot to task `task_order[d]`. Each
//! iteration descends from the root by LCB selection, expands a visited leaf,
//! completes the partial assignment at random `r` times, routes every robot
//! with branch-and-bound and backpropagates the `r` costs together.

mod eval;
mod search;
mod tree;

pub use eval::{evaluate_assignment, infeasible_penalty, Evaluation, Evaluator};
pub use search::{rollout_assignment, search, search_on, SearchOutcome};
pub use tree::{SearchTree, TreeNode, ROOT};

pub(crate) use search::Engine;

use crate::instance::Fleet;
use crate::par::ExecMode;
use crate::routing::{Route, RoutingBudget};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("tree does not fit the instance: {0}")]
    Topology(String),
}

/// Robot index (position in the fleet) per task, indexed by task id - 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment(pub Vec<usize>);

impl Assignment {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn robot_for(&self, task_id: usize) -> usize {
        self.0[task_id - 1]
    }

    /// 1-based ids of the tasks assigned to `robot`, ascending.
    pub fn tasks_of(&self, robot: usize) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &r)| r == robot)
            .map(|(t, _)| t + 1)
            .collect()
    }

    /// Robot labels joined by `-`, task 1 first, e.g. `1-2-2-1`.
    pub fn labels(&self, fleet: &Fleet) -> String {
        self.0
            .iter()
            .map(|&r| fleet.robots[r].id.to_string())
            .collect::<Vec<_>>()
            .join("-")
    }

    /// Inverse of [`Assignment::labels`].
    pub fn from_labels(text: &str, fleet: &Fleet) -> Result<Self, String> {
        if text.is_empty() {
            return Ok(Assignment(Vec::new()));
        }
        text.split('-')
            .map(|w| {
                let id: u32 = w.parse().map_err(|_| format!("bad robot label {w:?}"))?;
                fleet.index_of(id).map_err(|e| e.to_string())
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Assignment)
    }

    pub fn validate(&self, n_tasks: usize, fleet_size: usize) -> Result<(), String> {
        if self.0.len() != n_tasks {
            return Err(format!("assignment covers {} of {n_tasks} tasks", self.0.len()));
        }
        if let Some(r) = self.0.iter().find(|&&r| r >= fleet_size) {
            return Err(format!("robot index {r} outside a fleet of {fleet_size}"));
        }
        Ok(())
    }
}

/// Best feasible solution seen so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incumbent {
    pub assignment: Assignment,
    /// One route per robot, fleet order.
    pub routes: Vec<Route>,
    pub cost: f64,
    pub found_at_evaluation: u64,
    pub found_at_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Search,
    Reeval,
    Resume,
    Reroute,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Search => "search",
            Phase::Reeval => "reeval",
            Phase::Resume => "resume",
            Phase::Reroute => "reroute",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "search" => Ok(Phase::Search),
            "reeval" => Ok(Phase::Reeval),
            "resume" => Ok(Phase::Resume),
            "reroute" => Ok(Phase::Reroute),
            other => Err(format!("unknown phase {other:?}")),
        }
    }
}

/// One incumbent improvement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub phase: Phase,
    pub evaluations: u64,
    pub wall_seconds: f64,
    pub incumbent_kj: f64,
    /// Robot labels per task, see [`Assignment::labels`].
    pub assignment: String,
}

/// Append-only record of incumbent improvements.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub rows: Vec<TraceRow>,
}

impl ConvergenceTrace {
    pub fn push(&mut self, row: TraceRow) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: ConvergenceTrace) {
        self.rows.extend(other.rows);
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last_cost(&self) -> Option<f64> {
        self.rows.last().map(|r| r.incumbent_kj)
    }

    /// Incumbent after `evaluations` evaluations, `None` if nothing feasible yet.
    pub fn incumbent_at(&self, evaluations: u64) -> Option<f64> {
        self.rows
            .iter()
            .take_while(|r| r.evaluations <= evaluations)
            .last()
            .map(|r| r.incumbent_kj)
    }

    /// Incumbent after `seconds` of wall time.
    pub fn incumbent_at_time(&self, seconds: f64) -> Option<f64> {
        self.rows
            .iter()
            .take_while(|r| r.wall_seconds <= seconds)
            .last()
            .map(|r| r.incumbent_kj)
    }

    pub fn first_feasible(&self) -> Option<&TraceRow> {
        self.rows.first()
    }
}

/// Stops a search when any cap is reached. Caps count from the start of the
/// call they are passed to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchBudget {
    pub iterations: Option<u64>,
    pub evaluations: Option<u64>,
    #[serde(default, with = "opt_secs")]
    pub wall_time: Option<Duration>,
}

impl SearchBudget {
    pub fn iterations(n: u64) -> Self {
        Self {
            iterations: Some(n),
            ..Self::default()
        }
    }

    pub fn evaluations(n: u64) -> Self {
        Self {
            evaluations: Some(n),
            ..Self::default()
        }
    }

    pub fn wall_time(d: Duration) -> Self {
        Self {
            wall_time: Some(d),
            ..Self::default()
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.iterations.is_some() || self.evaluations.is_some() || self.wall_time.is_some()
    }
}

mod opt_secs {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Option<Duration>, s: S) -> Result<S::Ok, S::Error> {
        d.map(|d| d.as_secs_f64()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Duration>, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.map(Duration::from_secs_f64))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Exploration weight in the LCB score.
    pub gamma: f64,
    /// Rollouts per evaluation batch.
    pub rollouts: usize,
    pub routing: RoutingBudget,
    pub budget: SearchBudget,
    pub seed: u64,
    pub exec: ExecMode,
    /// Reuse routing results for repeated assignments. Only takes effect when
    /// the routing budget has no wall-time cap.
    pub memoize: bool,
    /// Keep the node path of every descent in the outcome.
    pub record_selections: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gamma: 0.5f64.sqrt(),
            rollouts: 20,
            routing: RoutingBudget::wall_time(Duration::from_millis(100)),
            budget: SearchBudget::iterations(1000),
            seed: 0,
            exec: ExecMode::default(),
            memoize: true,
            record_selections: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(SearchError::Config(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if self.rollouts == 0 {
            return Err(SearchError::Config("rollouts must be >= 1".into()));
        }
        if !self.budget.is_bounded() {
            return Err(SearchError::Config(
                "search budget needs an iteration, evaluation or wall-time cap".into(),
            ));
        }
        Ok(())
    }
}
