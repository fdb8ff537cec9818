//! Exhaustive ground truth for small instances and the decentralized
//! rerouting baseline.

use crate::instance::{Instance, InstanceError, Perturbation};
use crate::mcts::{Assignment, Incumbent};
use crate::par::{map_collect, ExecMode};
use crate::routing::{replay_stops, route_bnb, Route, RoutingBudget, RoutingError, RoutingProblem};
use std::collections::BTreeSet;
use std::time::Instant;
use thiserror::Error;

/// Default ceiling on the number of enumerated assignments.
pub const DEFAULT_ORACLE_CAP: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("{required} assignments to enumerate, cap is {cap}")]
    TooLarge { required: u128, cap: u64 },
    #[error("route search for robot {robot} under assignment {assignment} hit its node cap; no exact answer")]
    RouteCapHit { robot: usize, assignment: String },
    #[error("routing failed: {0}")]
    Routing(RoutingError),
}

#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    /// Refuse instances with more assignments than this.
    pub cap: u64,
    /// Per-route expansion cap; hitting it aborts the oracle.
    pub route_expansions: Option<u64>,
    pub exec: ExecMode,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            cap: DEFAULT_ORACLE_CAP,
            route_expansions: None,
            exec: ExecMode::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub assignment: Assignment,
    /// `None` when some robot cannot route its share.
    pub cost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Every assignment within tolerance of the minimum, enumeration order.
    pub optimal: Vec<Assignment>,
    /// `None` when no assignment is feasible.
    pub cost: Option<f64>,
    /// One row per assignment in lexicographic order, task 1 most significant.
    pub table: Vec<OracleRow>,
}

impl OracleResult {
    /// Relative gap of `cost` above the optimum.
    pub fn gap(&self, cost: f64) -> Option<f64> {
        self.cost.map(|opt| (cost - opt) / opt.abs().max(f64::MIN_POSITIVE))
    }

    pub fn is_optimal(&self, cost: f64) -> bool {
        self.cost.is_some_and(|opt| cost <= opt + tie_tolerance(opt))
    }
}

fn tie_tolerance(min: f64) -> f64 {
    1e-9 * min.abs().max(1.0)
}

/// The `index`-th assignment in lexicographic order over `fleet^n`.
pub fn assignment_at(index: u64, n_tasks: usize, fleet: usize) -> Assignment {
    let mut robots = vec![0; n_tasks];
    let mut rest = index;
    for slot in robots.iter_mut().rev() {
        *slot = (rest % fleet as u64) as usize;
        rest /= fleet as u64;
    }
    Assignment(robots)
}

/// Enumerates every assignment and routes it with uncapped branch-and-bound.
pub fn exhaustive_solve(instance: &Instance, options: &OracleOptions) -> Result<OracleResult, OracleError> {
    let n = instance.n_tasks();
    let m = instance.fleet.len();
    let required = (m as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if required > options.cap as u128 {
        return Err(OracleError::TooLarge {
            required,
            cap: options.cap,
        });
    }
    let budget = match options.route_expansions {
        Some(cap) => RoutingBudget::expansions(cap),
        None => RoutingBudget::unlimited(),
    };
    let indices: Vec<u64> = (0..required as u64).collect();
    let rows = map_collect(options.exec, &indices, |&i| {
        let a = assignment_at(i, n, m);
        exact_cost(&a, instance, &budget).map(|cost| OracleRow { assignment: a, cost })
    });
    let table = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    let cost = table.iter().filter_map(|r| r.cost).min_by(f64::total_cmp);
    let optimal = match cost {
        Some(min) => table
            .iter()
            .filter(|r| r.cost.is_some_and(|c| c <= min + tie_tolerance(min)))
            .map(|r| r.assignment.clone())
            .collect(),
        None => Vec::new(),
    };
    Ok(OracleResult { optimal, cost, table })
}

fn exact_cost(a: &Assignment, instance: &Instance, budget: &RoutingBudget) -> Result<Option<f64>, OracleError> {
    let mut total = 0.0;
    for robot in 0..instance.fleet.len() {
        let tasks = a.tasks_of(robot);
        let problem = RoutingProblem::new(instance, robot, &tasks);
        match route_bnb(&problem, budget) {
            Ok(out) if out.proven_optimal => total += out.route.total_energy,
            Ok(_) | Err(RoutingError::BudgetExhausted { .. }) => {
                return Err(OracleError::RouteCapHit {
                    robot,
                    assignment: format!("{:?}", a.0),
                })
            }
            Err(RoutingError::Infeasible(_)) => return Ok(None),
            Err(e) => return Err(OracleError::Routing(e)),
        }
    }
    Ok(Some(total))
}

/// Result of rerouting only the affected robots.
#[derive(Debug, Clone, PartialEq)]
pub struct DecentralizedOutcome {
    pub assignment: Assignment,
    /// Per robot, `None` where the robot has no feasible route any more.
    pub routes: Vec<Option<Route>>,
    /// Sum of route energies when every robot is feasible.
    pub cost: Option<f64>,
    /// Branch-and-bound calls made (one per affected robot).
    pub routing_calls: u64,
    /// Robot index and reason for every robot left without a route.
    pub failures: Vec<(usize, String)>,
    pub wall_seconds: f64,
}

impl DecentralizedOutcome {
    pub fn incumbent(&self) -> Option<Incumbent> {
        let cost = self.cost?;
        Some(Incumbent {
            assignment: self.assignment.clone(),
            routes: self.routes.iter().map(|r| r.clone().expect("feasible")).collect(),
            cost,
            found_at_evaluation: self.routing_calls,
            found_at_seconds: self.wall_seconds,
        })
    }
}

/// Keeps the nominal assignment, re-plans the routes of `affected` robots
/// (fleet indices) on `perturbed` and replays everyone else's nominal route
/// under the perturbed parameters.
pub fn decentralized_adapt(
    nominal: &Incumbent,
    perturbed: &Instance,
    affected: &[usize],
    budget: &RoutingBudget,
) -> DecentralizedOutcome {
    let started = Instant::now();
    let mut routes = Vec::with_capacity(perturbed.fleet.len());
    let mut failures = Vec::new();
    let mut calls = 0;
    for robot in 0..perturbed.fleet.len() {
        let tasks = nominal.assignment.tasks_of(robot);
        let problem = RoutingProblem::new(perturbed, robot, &tasks);
        let result = if affected.contains(&robot) {
            calls += 1;
            route_bnb(&problem, budget).map(|o| o.route)
        } else {
            let stops = nominal.routes.get(robot).map(|r| r.stops.as_slice()).unwrap_or(&[]);
            replay_stops(stops, &problem)
        };
        match result {
            Ok(r) => routes.push(Some(r)),
            Err(e) => {
                failures.push((robot, e.to_string()));
                routes.push(None);
            }
        }
    }
    let cost = failures
        .is_empty()
        .then(|| routes.iter().flatten().fold(0.0, |acc, r| acc + r.total_energy));
    DecentralizedOutcome {
        assignment: nominal.assignment.clone(),
        routes,
        cost,
        routing_calls: calls,
        failures,
        wall_seconds: started.elapsed().as_secs_f64(),
    }
}

/// Fleet indices of robots a perturbation touches, given the nominal plan.
///
/// Battery and payload changes touch the named robot. A spatial shift with
/// `xi > 0` touches everyone. An energy override touches robots of that type
/// whose nominal route has both endpoints of some changed entry among its
/// stops (the depot always counts as visited).
pub fn affected_robots(p: &Perturbation, nominal: &Instance, incumbent: &Incumbent) -> Result<Vec<usize>, InstanceError> {
    match p {
        Perturbation::Battery { robot, .. } | Perturbation::Payload { robot, .. } => Ok(vec![nominal.fleet.index_of(*robot)?]),
        Perturbation::Spatial { xi, .. } => Ok(if *xi > 0.0 { (0..nominal.fleet.len()).collect() } else { Vec::new() }),
        Perturbation::EnergyOverride { type_id, rows } => {
            let Some(old) = nominal.energy.get(*type_id) else {
                return Ok(Vec::new());
            };
            let mut changed = Vec::new();
            for (i, row) in rows.iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    if i < old.dim() && j < old.dim() && old.get(i, j) != v {
                        changed.push((i, j));
                    }
                }
            }
            let end = nominal.end_depot();
            Ok((0..nominal.fleet.len())
                .filter(|&r| nominal.fleet.robots[r].type_id == *type_id)
                .filter(|&r| {
                    let mut visited: BTreeSet<usize> = [0, end].into();
                    if let Some(route) = incumbent.routes.get(r) {
                        visited.extend(route.stops.iter().copied());
                    }
                    changed.iter().any(|(i, j)| visited.contains(i) && visited.contains(j))
                })
                .collect())
        }
    }
}
