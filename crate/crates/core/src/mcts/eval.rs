use super::Assignment;
use crate::instance::Instance;
use crate::par::{map_collect, ExecMode};
use crate::routing::{route_bnb, Route, RoutingBudget, RoutingProblem};
use std::collections::HashMap;
use std::sync::Arc;

/// Cost of one full assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Sum of route energies in kJ, or the infeasibility penalty.
    pub cost: f64,
    pub feasible: bool,
    /// One route per robot when feasible, empty otherwise.
    pub routes: Vec<Route>,
    /// Why routing failed, for infeasible evaluations.
    pub failure: Option<String>,
}

/// Cost charged to assignments some robot cannot route: ten times the energy
/// of serving every task as its own depot round trip on the robot for which
/// that is most expensive.
pub fn infeasible_penalty(instance: &Instance) -> f64 {
    let worst = (0..instance.fleet.len())
        .map(|r| {
            let v = instance.robot_view(r);
            instance
                .tasks
                .iter()
                .map(|t| {
                    let m = v.energy;
                    v.battery_kj * (m.get(0, t.pickup) + m.get(t.pickup, t.delivery) + m.get(t.delivery, 0))
                })
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    10.0 * worst.max(1.0)
}

/// Routes every robot over its share of `assignment` and sums the energies.
/// Robots without tasks contribute nothing.
pub fn evaluate_assignment(assignment: &Assignment, instance: &Instance, budget: &RoutingBudget) -> Evaluation {
    evaluate_with_penalty(assignment, instance, budget, infeasible_penalty(instance))
}

fn evaluate_with_penalty(assignment: &Assignment, instance: &Instance, budget: &RoutingBudget, penalty: f64) -> Evaluation {
    let mut routes = Vec::with_capacity(instance.fleet.len());
    let mut cost = 0.0;
    for robot in 0..instance.fleet.len() {
        let tasks = assignment.tasks_of(robot);
        let problem = RoutingProblem::new(instance, robot, &tasks);
        match route_bnb(&problem, budget) {
            Ok(out) => {
                cost += out.route.total_energy;
                routes.push(out.route);
            }
            Err(e) => {
                return Evaluation {
                    cost: penalty,
                    feasible: false,
                    routes: Vec::new(),
                    failure: Some(format!("robot {}: {e}", instance.fleet.robots[robot].id)),
                }
            }
        }
    }
    Evaluation {
        cost,
        feasible: true,
        routes,
        failure: None,
    }
}

/// Batch evaluator with an optional result cache.
pub struct Evaluator<'a> {
    instance: &'a Instance,
    routing: RoutingBudget,
    penalty: f64,
    exec: ExecMode,
    cache: Option<HashMap<Assignment, Arc<Evaluation>>>,
    routing_calls: u64,
}

impl<'a> Evaluator<'a> {
    /// The cache is enabled only when `memoize` is set and the routing budget
    /// has no wall-time cap, so cached and fresh results always agree.
    pub fn new(instance: &'a Instance, routing: RoutingBudget, exec: ExecMode, memoize: bool) -> Self {
        Self {
            instance,
            routing,
            penalty: infeasible_penalty(instance),
            exec,
            cache: (memoize && routing.is_deterministic()).then(HashMap::new),
            routing_calls: 0,
        }
    }

    pub fn instance(&self) -> &'a Instance {
        self.instance
    }

    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    /// Full assignments evaluated by routing (cache hits excluded).
    pub fn routing_calls(&self) -> u64 {
        self.routing_calls
    }

    /// Evaluates every assignment; output order follows the input.
    pub fn evaluate_batch(&mut self, batch: &[Assignment]) -> Vec<Arc<Evaluation>> {
        let (instance, routing, penalty) = (self.instance, self.routing, self.penalty);
        let run = |a: &Assignment| Arc::new(evaluate_with_penalty(a, instance, &routing, penalty));
        let Some(cache) = self.cache.as_mut() else {
            self.routing_calls += batch.len() as u64;
            return map_collect(self.exec, batch, run);
        };
        let mut missing: Vec<Assignment> = Vec::new();
        for a in batch {
            if !cache.contains_key(a) && !missing.contains(a) {
                missing.push(a.clone());
            }
        }
        self.routing_calls += missing.len() as u64;
        let fresh = map_collect(self.exec, &missing, run);
        for (a, e) in missing.into_iter().zip(fresh) {
            cache.insert(a, e);
        }
        batch.iter().map(|a| Arc::clone(&cache[a])).collect()
    }
}
