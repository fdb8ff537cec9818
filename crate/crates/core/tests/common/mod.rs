#![allow(dead_code)]

use fleet_core::instance::{InstanceMeta, RobotView};
use fleet_core::io::{BudgetSpec, Checkpoints, ExperimentSpec, InstanceSource, SolverSpec, WarmSpec, EXPERIMENT_FORMAT};
use fleet_core::mcts::SearchBudget;
use fleet_core::routing::RoutingProblem;
use fleet_core::{
    derive_mht_instance, energy_matrix, load_tsplib, DeriveOptions, Fleet, Instance, PointCloud, RobotType,
    ExecMode, RoutingBudget, SolverConfig, Task,
};
use rand::Rng;

pub const DESK_POINTS: usize = 13;
pub const DESK_BATTERY: f64 = 100.0;
pub const DESK_PAYLOAD: f64 = 2.0;

pub fn data_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

pub fn eil51() -> PointCloud {
    load_tsplib(&std::fs::read_to_string(data_path("eil51.tsp")).unwrap()).unwrap()
}

/// Six tasks from the first 13 eil51 points, two identical robots.
pub fn desk_instance() -> Instance {
    derive_mht_instance(
        &eil51().prefix(DESK_POINTS),
        Fleet::homogeneous(2, RobotType::new(DESK_BATTERY, DESK_PAYLOAD)),
        &DeriveOptions::default(),
    )
    .unwrap()
}

pub fn exact_config(seed: u64, iterations: u64) -> SolverConfig {
    SolverConfig {
        routing: RoutingBudget::unlimited(),
        budget: SearchBudget::iterations(iterations),
        seed,
        ..SolverConfig::default()
    }
}

/// One-robot instance with `k` tasks at random positions in a 100x100 box.
pub fn random_single_robot<R: Rng>(rng: &mut R, k: usize, battery: f64, capacity: f64) -> Instance {
    let mut coords = Vec::with_capacity(2 * k + 2);
    let depot = [rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0)];
    coords.push(depot);
    for _ in 0..2 * k {
        coords.push([rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0)]);
    }
    coords.push(depot);
    let tasks = (1..=k)
        .map(|i| Task {
            id: i,
            pickup: i,
            delivery: i + k,
            mass: rng.gen_range(1..=3) as f64,
        })
        .collect();
    let t = RobotType::new(battery, capacity);
    let inst = Instance {
        energy: vec![energy_matrix(&coords, &t)],
        source_ids: (0..coords.len() as u32).collect(),
        coords,
        tasks,
        fleet: Fleet::homogeneous(1, t),
        meta: InstanceMeta::default(),
    };
    inst.validate().unwrap();
    inst
}

/// Energy of driving `order` (then back to the end depot) with the recharge
/// rule replayed from first principles: drive directly while the battery
/// stays strictly positive, otherwise go back to the depot, refill and drive
/// out again. `None` if the order is infeasible.
pub fn replay_order(view: &RobotView<'_>, tasks: &[Task], end: usize, order: &[usize]) -> Option<f64> {
    let m = view.energy;
    let b = view.battery_kj;
    let mut soc = 1.0;
    let mut pos = 0;
    let mut load = 0.0;
    let mut cost = 0.0;
    for &node in order.iter().chain(std::iter::once(&end)) {
        let d = m.get(pos, node);
        if soc - d > 0.0 {
            soc -= d;
            cost += b * d;
        } else {
            let back = if pos == 0 { 0.0 } else { m.get(pos, 0) };
            if back > soc {
                return None;
            }
            let out = if node == 0 { 0.0 } else { m.get(0, node) };
            if 1.0 - out < 0.0 {
                return None;
            }
            soc = 1.0 - out;
            cost += b * (back + out);
        }
        if let Some(t) = tasks.iter().find(|t| t.pickup == node) {
            load += t.mass;
            if load > view.payload_capacity {
                return None;
            }
        } else if let Some(t) = tasks.iter().find(|t| t.delivery == node) {
            load -= t.mass;
        }
        pos = node;
    }
    Some(cost)
}

/// Minimum over every precedence-respecting order of all stops.
pub fn brute_force_route(problem: &RoutingProblem<'_>) -> Option<f64> {
    if problem.tasks.is_empty() {
        return Some(0.0);
    }
    let mut best: Option<f64> = None;
    let mut order = Vec::new();
    let mut picked = vec![false; problem.tasks.len()];
    let mut dropped = vec![false; problem.tasks.len()];
    permute(problem, &mut order, &mut picked, &mut dropped, &mut best);
    best
}

fn permute(
    p: &RoutingProblem<'_>,
    order: &mut Vec<usize>,
    picked: &mut [bool],
    dropped: &mut [bool],
    best: &mut Option<f64>,
) {
    if order.len() == 2 * p.tasks.len() {
        if let Some(c) = replay_order(&p.robot, &p.tasks, p.end_depot, order) {
            if best.is_none_or(|b| c < b) {
                *best = Some(c);
            }
        }
        return;
    }
    for (k, t) in p.tasks.iter().enumerate() {
        if !picked[k] {
            picked[k] = true;
            order.push(t.pickup);
            permute(p, order, picked, dropped, best);
            order.pop();
            picked[k] = false;
        } else if !dropped[k] {
            dropped[k] = true;
            order.push(t.delivery);
            permute(p, order, picked, dropped, best);
            order.pop();
            dropped[k] = false;
        }
    }
}

/// The desk instance as an experiment: 50k-evaluation nominal trees, 1000
/// evaluations per strategy, checkpoints at 10, 100 and 1000.
pub fn desk_experiment(perturbations: &[&str], repetitions: usize) -> ExperimentSpec {
    ExperimentSpec {
        format: EXPERIMENT_FORMAT.into(),
        name: Some("desk".into()),
        instance: InstanceSource {
            instance: None,
            tsplib: Some(data_path("eil51.tsp")),
            points: Some(DESK_POINTS),
            robots: 2,
            battery_kj: DESK_BATTERY,
            payload: DESK_PAYLOAD,
            mass: 1.0,
        },
        nominal: BudgetSpec {
            evaluations: Some(50_000),
            ..BudgetSpec::default()
        },
        budget: BudgetSpec {
            evaluations: Some(1000),
            ..BudgetSpec::default()
        },
        solver: SolverSpec::default(),
        warm: WarmSpec::default(),
        perturbations: perturbations.iter().map(|s| s.to_string()).collect(),
        repetitions,
        seed_base: 2024,
        checkpoints: Checkpoints {
            evaluations: vec![10, 100, 1000],
            seconds: vec![],
        },
        oracle: true,
        histogram_bins: 10,
        exec: ExecMode::Parallel,
    }
}
