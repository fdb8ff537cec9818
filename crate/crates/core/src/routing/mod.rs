//! Single-robot routing over an assigned task set.
//!
//! A robot leaves the depot fully charged and empty, serves every assigned
//! pickup before its delivery, never carries more than its payload capacity
//! and returns to the depot. Whenever a leg would drain the battery to zero or
//! below, the robot detours through the depot, recharges fully and continues;
//! the leg then costs `B * (δe_i0 + δe_0j)` instead of `B * δe_ij`.

mod bnb;

pub use bnb::{route_bnb, route_bnb_with, BnbOptions, RoutingOutcome};

use crate::instance::{Instance, RobotView, Task};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::time::Duration;
use thiserror::Error;

/// Largest task set a single route may carry (bitmask width).
pub const MAX_ROUTE_TASKS: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RoutingError {
    #[error("no feasible route: {0}")]
    Infeasible(String),
    #[error("routing budget exhausted after {expansions} expansions without a complete route")]
    BudgetExhausted { expansions: u64 },
    #[error("{0} tasks exceed the per-route limit of {MAX_ROUTE_TASKS}")]
    TooManyTasks(usize),
    #[error("route does not match problem: {0}")]
    Mismatch(String),
}

/// Why a single leg cannot be driven.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum LegInfeasible {
    #[error("charger out of reach")]
    ChargerUnreachable,
    #[error("leg longer than a full battery")]
    ExceedsFullCharge,
}

/// Anytime caps for one routing call. No caps means run to proven optimality.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RoutingBudget {
    #[serde(default, with = "opt_millis")]
    pub wall_time: Option<Duration>,
    #[serde(default)]
    pub max_expansions: Option<u64>,
}

impl RoutingBudget {
    pub fn unlimited() -> Self {
        Self::default()
    }

    pub fn expansions(cap: u64) -> Self {
        Self {
            wall_time: None,
            max_expansions: Some(cap),
        }
    }

    pub fn wall_time(cap: Duration) -> Self {
        Self {
            wall_time: Some(cap),
            max_expansions: None,
        }
    }

    pub fn is_unlimited(&self) -> bool {
        self.wall_time.is_none() && self.max_expansions.is_none()
    }

    /// Results under this budget depend only on the inputs.
    pub fn is_deterministic(&self) -> bool {
        self.wall_time.is_none()
    }
}

mod opt_millis {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Option<Duration>, s: S) -> Result<S::Ok, S::Error> {
        d.map(|d| d.as_secs_f64() * 1000.0).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Duration>, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.map(|ms| Duration::from_secs_f64(ms / 1000.0)))
    }
}

/// One robot's routing input: its parameters plus the tasks assigned to it.
#[derive(Debug, Clone)]
pub struct RoutingProblem<'a> {
    pub robot: RobotView<'a>,
    pub tasks: Vec<Task>,
    pub end_depot: usize,
}

impl<'a> RoutingProblem<'a> {
    /// `task_ids` are 1-based task ids.
    pub fn new(instance: &'a Instance, robot: usize, task_ids: &[usize]) -> Self {
        Self {
            robot: instance.robot_view(robot),
            tasks: task_ids.iter().map(|&id| instance.tasks[id - 1]).collect(),
            end_depot: instance.end_depot(),
        }
    }

    fn full_mask(&self) -> u64 {
        if self.tasks.len() == 64 {
            u64::MAX
        } else {
            (1u64 << self.tasks.len()) - 1
        }
    }

    fn task_slot(&self, node: usize) -> Option<(usize, bool)> {
        self.tasks.iter().enumerate().find_map(|(k, t)| {
            if t.pickup == node {
                Some((k, true))
            } else if t.delivery == node {
                Some((k, false))
            } else {
                None
            }
        })
    }
}

/// The state evolved along a partial route. Task bits index
/// `RoutingProblem::tasks`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotState {
    pub position: usize,
    pub soc: f64,
    pub load: f64,
    pub picked: u64,
    pub delivered: u64,
    pub cost: f64,
}

impl RobotState {
    pub fn start() -> Self {
        Self {
            position: 0,
            soc: 1.0,
            load: 0.0,
            picked: 0,
            delivered: 0,
            cost: 0.0,
        }
    }

    pub fn carrying(&self, slot: usize) -> bool {
        (self.picked & !self.delivered) >> slot & 1 == 1
    }

    /// State after serving `node` via `leg`.
    fn visit(&self, problem: &RoutingProblem<'_>, node: usize, leg: &Leg) -> Option<Self> {
        let (slot, pickup) = problem.task_slot(node)?;
        let task = &problem.tasks[slot];
        let mut next = *self;
        next.position = node;
        next.soc = leg.soc_after;
        next.cost = self.cost + leg.energy;
        if pickup {
            next.picked |= 1 << slot;
            next.load += task.mass;
        } else {
            next.delivered |= 1 << slot;
            next.load -= task.mass;
        }
        Some(next)
    }
}

/// A driven leg. `load` is the payload carried while driving it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub from: usize,
    pub to: usize,
    pub energy: f64,
    pub soc_after: f64,
    pub recharged: bool,
    pub load: f64,
}

/// Drives one leg from `from` (with state of charge `soc`) to `to`.
///
/// If `soc - δe_from,to > 0` the leg is driven directly. Otherwise the robot
/// first returns to the depot (needs `δe_from,0 <= soc`), recharges to 1 and
/// drives `0 -> to` (needs `δe_0,to <= 1`).
pub fn leg_transition(
    robot: &RobotView<'_>,
    from: usize,
    soc: f64,
    to: usize,
) -> Result<Leg, LegInfeasible> {
    debug_assert_ne!(from, to);
    let m = robot.energy;
    let direct = m.get(from, to);
    if soc - direct > 0.0 {
        return Ok(Leg {
            from,
            to,
            energy: robot.battery_kj * direct,
            soc_after: soc - direct,
            recharged: false,
            load: 0.0,
        });
    }
    let to_depot = if from == 0 { 0.0 } else { m.get(from, 0) };
    if to_depot > soc {
        return Err(LegInfeasible::ChargerUnreachable);
    }
    let from_depot = if to == 0 { 0.0 } else { m.get(0, to) };
    let soc_after = 1.0 - from_depot;
    if soc_after < 0.0 {
        return Err(LegInfeasible::ExceedsFullCharge);
    }
    Ok(Leg {
        from,
        to,
        energy: robot.battery_kj * (to_depot + from_depot),
        soc_after,
        recharged: true,
        load: 0.0,
    })
}

/// A candidate next stop together with the leg that reaches it.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Successor {
    pub node: usize,
    pub leg: Leg,
    pub next: RobotState,
}

fn candidate_nodes<'p>(problem: &'p RoutingProblem<'_>, state: &RobotState) -> impl Iterator<Item = usize> + 'p {
    let state = *state;
    let cap = problem.robot.payload_capacity;
    problem.tasks.iter().enumerate().filter_map(move |(k, t)| {
        let bit = 1u64 << k;
        if state.picked & bit == 0 {
            (state.load + t.mass <= cap).then_some(t.pickup)
        } else if state.delivered & bit == 0 {
            Some(t.delivery)
        } else {
            None
        }
    })
}

pub(crate) fn successors(problem: &RoutingProblem<'_>, state: &RobotState) -> Vec<Successor> {
    candidate_nodes(problem, state)
        .filter_map(|node| {
            let mut leg = leg_transition(&problem.robot, state.position, state.soc, node).ok()?;
            leg.load = state.load;
            let next = state.visit(problem, node, &leg)?;
            Some(Successor { node, leg, next })
        })
        .collect()
}

/// Unvisited pickups that fit the remaining capacity plus deliveries of
/// carried commodities, restricted to stops reachable under the charging
/// policy. An empty result is a dead end.
pub fn feasible_successors(problem: &RoutingProblem<'_>, state: &RobotState) -> Vec<usize> {
    successors(problem, state).into_iter().map(|s| s.node).collect()
}

/// `true` if some move is still possible from `state`: the closing leg when
/// everything is delivered, otherwise at least one reachable next stop.
pub(crate) fn has_next_move(problem: &RoutingProblem<'_>, state: &RobotState) -> bool {
    let robot = &problem.robot;
    if state.delivered == problem.full_mask() {
        return leg_transition(robot, state.position, state.soc, problem.end_depot).is_ok();
    }
    candidate_nodes(problem, state)
        .any(|node| leg_transition(robot, state.position, state.soc, node).is_ok())
}

/// A robot's tour: `stops[0] == 0`, `stops.last() == 2n+1`. An empty route
/// (no stops) means the robot stays at the depot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub stops: Vec<usize>,
    pub legs: Vec<Leg>,
    pub total_energy: f64,
}

impl Route {
    pub fn empty() -> Self {
        Self {
            stops: Vec::new(),
            legs: Vec::new(),
            total_energy: 0.0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.stops.is_empty()
    }

    pub(crate) fn from_legs(legs: Vec<Leg>) -> Self {
        let mut stops = Vec::with_capacity(legs.len() + 1);
        stops.push(0);
        stops.extend(legs.iter().map(|l| l.to));
        let total_energy = legs.iter().fold(0.0, |acc, l| acc + l.energy);
        Self {
            stops,
            legs,
            total_energy,
        }
    }

    /// Indices of legs that include a depot recharge detour.
    pub fn charge_events(&self) -> Vec<usize> {
        self.legs
            .iter()
            .enumerate()
            .filter(|(_, l)| l.recharged)
            .map(|(i, _)| i)
            .collect()
    }

    /// Some recharge detour was driven with cargo on board.
    pub fn charged_while_loaded(&self) -> bool {
        self.legs.iter().any(|l| l.recharged && l.load > 0.0)
    }
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("(idle)");
        }
        write!(f, "{}", self.stops[0])?;
        for leg in &self.legs {
            let mark = if leg.recharged { "[C] " } else { "" };
            write!(f, " -> {mark}{} ({:.3} kJ)", leg.to, leg.energy)?;
        }
        write!(f, " | total {:.3} kJ", self.total_energy)
    }
}

/// Replays `route` through the charging policy and returns its energy.
pub fn route_cost(route: &Route, problem: &RoutingProblem<'_>) -> Result<f64, RoutingError> {
    replay_stops(&route.stops, problem).map(|r| r.total_energy)
}

/// Drives `stops` through the charging policy on `problem` and rebuilds the
/// legs. Fails if the stop sequence is not a complete, feasible tour.
pub fn replay_stops(stops: &[usize], problem: &RoutingProblem<'_>) -> Result<Route, RoutingError> {
    if stops.is_empty() {
        return if problem.tasks.is_empty() {
            Ok(Route::empty())
        } else {
            Err(RoutingError::Mismatch("empty route for a non-empty task set".into()))
        };
    }
    let mismatch = |m: String| Err(RoutingError::Mismatch(m));
    if stops[0] != 0 || *stops.last().unwrap() != problem.end_depot {
        return mismatch("route must start at 0 and end at the end depot".into());
    }
    let mut state = RobotState::start();
    let mut legs = Vec::with_capacity(stops.len() - 1);
    for (i, w) in stops.windows(2).enumerate() {
        let to = w[1];
        let mut leg = leg_transition(&problem.robot, state.position, state.soc, to)
            .map_err(|e| RoutingError::Mismatch(format!("leg {i} ({} -> {to}): {e}", w[0])))?;
        leg.load = state.load;
        legs.push(leg);
        if to == problem.end_depot && i + 2 == stops.len() {
            state.cost += leg.energy;
            state.position = to;
            continue;
        }
        state = match problem.task_slot(to) {
            Some((slot, pickup)) => {
                let bit = 1u64 << slot;
                let done = if pickup { state.picked & bit } else { state.delivered & bit };
                if done != 0 {
                    return mismatch(format!("node {to} visited twice"));
                }
                if !pickup && state.picked & bit == 0 {
                    return mismatch(format!("delivery {to} before its pickup"));
                }
                let next = state.visit(problem, to, &leg).expect("slot exists");
                if next.load > problem.robot.payload_capacity {
                    return mismatch(format!("payload exceeded at node {to}"));
                }
                next
            }
            None => return mismatch(format!("node {to} is not in the assigned task set")),
        };
    }
    if state.delivered != problem.full_mask() {
        return mismatch("not every assigned task is delivered".into());
    }
    Ok(Route::from_legs(legs))
}

/// A violated route property.
#[derive(Debug, Clone, PartialEq)]
pub enum RouteViolation {
    Endpoints,
    ForeignNode(usize),
    RepeatedNode(usize),
    Unserved(usize),
    Precedence { task: usize },
    Payload { at: usize, load: f64 },
    Soc { at: usize, soc: f64 },
    LegMismatch { index: usize },
    TotalMismatch { stored: f64, replayed: f64 },
}

/// Checks depot endpoints, at-most-once visits, full service of the assigned
/// tasks, pickup-before-delivery, the payload bound, the state-of-charge range
/// at every stop and that stored legs match a fresh replay.
pub fn validate_route(route: &Route, problem: &RoutingProblem<'_>) -> Result<(), Vec<RouteViolation>> {
    let mut v = Vec::new();
    if route.is_empty() {
        if !problem.tasks.is_empty() {
            v.extend(problem.tasks.iter().map(|t| RouteViolation::Unserved(t.id)));
        }
        return if v.is_empty() { Ok(()) } else { Err(v) };
    }
    let stops = &route.stops;
    if stops[0] != 0 || *stops.last().unwrap() != problem.end_depot {
        v.push(RouteViolation::Endpoints);
    }
    let inner = &stops[1..stops.len().saturating_sub(1)];
    let mut seen = std::collections::HashSet::new();
    for &s in inner {
        if !seen.insert(s) {
            v.push(RouteViolation::RepeatedNode(s));
        }
        if problem.task_slot(s).is_none() {
            v.push(RouteViolation::ForeignNode(s));
        }
    }
    let pos = |node: usize| inner.iter().position(|&s| s == node);
    for t in &problem.tasks {
        match (pos(t.pickup), pos(t.delivery)) {
            (Some(p), Some(d)) if p > d => v.push(RouteViolation::Precedence { task: t.id }),
            (Some(_), Some(_)) => {}
            _ => v.push(RouteViolation::Unserved(t.id)),
        }
    }

    // payload and state of charge along the stops
    let robot = &problem.robot;
    let mut load = 0.0;
    let mut soc = 1.0;
    let mut total = 0.0;
    for (i, w) in stops.windows(2).enumerate() {
        let (from, to) = (w[0], w[1]);
        match leg_transition(robot, from, soc, to) {
            Ok(leg) => {
                soc = leg.soc_after;
                total += leg.energy;
                let stored = route.legs.get(i);
                if stored.map(|s| (s.energy, s.soc_after, s.recharged)) != Some((leg.energy, leg.soc_after, leg.recharged)) {
                    v.push(RouteViolation::LegMismatch { index: i });
                }
            }
            Err(_) => {
                v.push(RouteViolation::Soc { at: to, soc: f64::NEG_INFINITY });
                break;
            }
        }
        if !(0.0..=1.0).contains(&soc) {
            v.push(RouteViolation::Soc { at: to, soc });
        }
        if let Some((slot, pickup)) = problem.task_slot(to) {
            let m = problem.tasks[slot].mass;
            load += if pickup { m } else { -m };
            if load > robot.payload_capacity || load < 0.0 {
                v.push(RouteViolation::Payload { at: to, load });
            }
        }
    }
    if route.legs.len() + 1 != stops.len() {
        v.push(RouteViolation::LegMismatch { index: route.legs.len() });
    }
    if v.is_empty() && total != route.total_energy {
        v.push(RouteViolation::TotalMismatch {
            stored: route.total_energy,
            replayed: total,
        });
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}
