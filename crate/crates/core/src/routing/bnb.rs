use super::{
    has_next_move, leg_transition, successors, Leg, RobotState, Route, RoutingBudget, RoutingError,
    RoutingProblem, MAX_ROUTE_TASKS,
};
use std::time::Instant;

#[derive(Debug, Clone, Copy)]
pub struct BnbOptions {
    /// Skip branches whose partial cost already reaches the incumbent.
    pub prune: bool,
    /// Drop successors from which no further move is possible.
    pub dead_end_guard: bool,
}

impl Default for BnbOptions {
    fn default() -> Self {
        Self {
            prune: true,
            dead_end_guard: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutingOutcome {
    pub route: Route,
    /// The search finished without hitting a budget cap.
    pub proven_optimal: bool,
    pub expansions: u64,
    /// Cost of every incumbent in the order found.
    pub improvements: Vec<f64>,
}

/// Minimum-energy route for one robot, default options.
pub fn route_bnb(problem: &RoutingProblem<'_>, budget: &RoutingBudget) -> Result<RoutingOutcome, RoutingError> {
    route_bnb_with(problem, budget, BnbOptions::default())
}

/// Depth-first branch-and-bound that tries successors cheapest leg first.
///
/// A branch is cut as soon as its partial energy reaches the best complete
/// route found so far. When a cap in `budget` is hit the best route found so
/// far is returned with `proven_optimal == false`.
pub fn route_bnb_with(
    problem: &RoutingProblem<'_>,
    budget: &RoutingBudget,
    options: BnbOptions,
) -> Result<RoutingOutcome, RoutingError> {
    let k = problem.tasks.len();
    if k > MAX_ROUTE_TASKS {
        return Err(RoutingError::TooManyTasks(k));
    }
    if k == 0 {
        return Ok(RoutingOutcome {
            route: Route::empty(),
            proven_optimal: true,
            expansions: 0,
            improvements: vec![0.0],
        });
    }
    let cap = problem.robot.payload_capacity;
    if let Some(t) = problem.tasks.iter().find(|t| t.mass > cap) {
        return Err(RoutingError::Infeasible(format!(
            "task {} mass {} exceeds payload capacity {cap}",
            t.id, t.mass
        )));
    }
    let mut search = Search {
        problem,
        budget,
        options,
        started: Instant::now(),
        expansions: 0,
        exhausted: false,
        best_cost: f64::INFINITY,
        best: None,
        path: Vec::with_capacity(2 * k + 1),
        improvements: Vec::new(),
    };
    search.descend(&RobotState::start());

    match search.best {
        Some(legs) => Ok(RoutingOutcome {
            route: Route::from_legs(legs),
            proven_optimal: !search.exhausted,
            expansions: search.expansions,
            improvements: search.improvements,
        }),
        None if search.exhausted => Err(RoutingError::BudgetExhausted {
            expansions: search.expansions,
        }),
        None => {
            let far: Vec<usize> = problem
                .tasks
                .iter()
                .flat_map(|t| [t.pickup, t.delivery])
                .filter(|&node| problem.robot.energy.get(0, node) > 1.0)
                .collect();
            let detail = if far.is_empty() {
                "battery and payload limits admit no complete tour".to_string()
            } else {
                format!("nodes {far:?} lie beyond a full charge from the depot")
            };
            Err(RoutingError::Infeasible(detail))
        }
    }
}

struct Search<'p, 'a> {
    problem: &'p RoutingProblem<'a>,
    budget: &'p RoutingBudget,
    options: BnbOptions,
    started: Instant,
    expansions: u64,
    exhausted: bool,
    best_cost: f64,
    best: Option<Vec<Leg>>,
    path: Vec<Leg>,
    improvements: Vec<f64>,
}

impl Search<'_, '_> {
    fn out_of_budget(&self) -> bool {
        if let Some(cap) = self.budget.max_expansions {
            if self.expansions >= cap {
                return true;
            }
        }
        if let Some(cap) = self.budget.wall_time {
            if self.started.elapsed() >= cap {
                return true;
            }
        }
        false
    }

    fn descend(&mut self, state: &RobotState) {
        if self.out_of_budget() {
            self.exhausted = true;
            return;
        }
        self.expansions += 1;

        let problem = self.problem;
        if state.delivered == problem.full_mask() {
            if let Ok(mut leg) = leg_transition(&problem.robot, state.position, state.soc, problem.end_depot) {
                leg.load = state.load;
                let total = state.cost + leg.energy;
                if total < self.best_cost {
                    self.best_cost = total;
                    let mut legs = self.path.clone();
                    legs.push(leg);
                    self.best = Some(legs);
                    self.improvements.push(total);
                }
            }
            return;
        }

        let mut next = successors(problem, state);
        if self.options.dead_end_guard {
            next.retain(|s| has_next_move(problem, &s.next));
        }
        next.sort_by(|a, b| a.leg.energy.total_cmp(&b.leg.energy).then(a.node.cmp(&b.node)));

        for s in next {
            let branch_cost = state.cost + s.leg.energy;
            if self.options.prune && branch_cost >= self.best_cost {
                continue;
            }
            self.path.push(s.leg);
            self.descend(&s.next);
            self.path.pop();
            if self.exhausted {
                return;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{EnergyMatrix, RobotView, Task};
    use crate::routing::{route_cost, validate_route};

    fn line_problem(m: &EnergyMatrix, battery: f64, cap: f64, tasks: Vec<Task>, end: usize) -> RoutingProblem<'_> {
        RoutingProblem {
            robot: RobotView {
                battery_kj: battery,
                payload_capacity: cap,
                energy: m,
            },
            tasks,
            end_depot: end,
        }
    }

    /// Points on a line: depot at 0, pickup at x=1, delivery at x=3.
    fn one_task_matrix(b: f64) -> EnergyMatrix {
        line_matrix(&[0.0, 1.0, 3.0, 0.0], b)
    }

    fn line_matrix(xs: &[f64], b: f64) -> EnergyMatrix {
        EnergyMatrix::from_rows(
            xs.iter()
                .map(|a| xs.iter().map(|c| (a - c).abs() / b).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_task_has_one_order() {
        let m = one_task_matrix(20.0);
        let task = Task { id: 1, pickup: 1, delivery: 2, mass: 1.0 };
        let p = line_problem(&m, 20.0, 10.0, vec![task], 3);
        let out = route_bnb(&p, &RoutingBudget::unlimited()).unwrap();
        assert_eq!(out.route.stops, vec![0, 1, 2, 3]);
        let expected = 20.0 * m.get(0, 1) + 20.0 * m.get(1, 2) + 20.0 * m.get(2, 0);
        assert_eq!(out.route.total_energy, expected);
        assert!(out.proven_optimal);
        assert_eq!(route_cost(&out.route, &p).unwrap(), out.route.total_energy);
        validate_route(&out.route, &p).unwrap();
    }

    #[test]
    fn overweight_task_is_infeasible() {
        let m = one_task_matrix(20.0);
        let task = Task { id: 1, pickup: 1, delivery: 2, mass: 11.0 };
        let p = line_problem(&m, 20.0, 10.0, vec![task], 3);
        assert!(matches!(route_bnb(&p, &RoutingBudget::unlimited()), Err(RoutingError::Infeasible(_))));
    }

    #[test]
    fn empty_assignment_is_free() {
        let m = one_task_matrix(20.0);
        let p = line_problem(&m, 20.0, 10.0, vec![], 3);
        let out = route_bnb(&p, &RoutingBudget::unlimited()).unwrap();
        assert!(out.route.is_empty());
        assert_eq!(out.route.total_energy, 0.0);
        assert_eq!(route_cost(&out.route, &p).unwrap(), 0.0);
    }

    #[test]
    fn forced_recharge_costs_detour() {
        // pickup at x=2, delivery at x=-1, B = 4: after 0->1 soc is 0.5 and
        // 1->2 needs 0.75, so the robot detours 1->0->2
        let m = line_matrix(&[0.0, 2.0, -1.0, 0.0], 4.0);
        let task = Task { id: 1, pickup: 1, delivery: 2, mass: 1.0 };
        let p = line_problem(&m, 4.0, 10.0, vec![task], 3);
        let out = route_bnb(&p, &RoutingBudget::unlimited()).unwrap();
        assert_eq!(out.route.charge_events(), vec![1]);
        assert_eq!(out.route.legs[1].energy, 4.0 * (0.5 + 0.25));
        assert_eq!(out.route.legs[1].soc_after, 0.75);
        assert_eq!(out.route.total_energy, 6.0);
        assert!(out.route.charged_while_loaded());
        validate_route(&out.route, &p).unwrap();
    }

    #[test]
    fn zero_expansion_budget_exhausts() {
        let m = one_task_matrix(20.0);
        let task = Task { id: 1, pickup: 1, delivery: 2, mass: 1.0 };
        let p = line_problem(&m, 20.0, 10.0, vec![task], 3);
        assert_eq!(
            route_bnb(&p, &RoutingBudget::expansions(0)),
            Err(RoutingError::BudgetExhausted { expansions: 0 })
        );
    }
}
