mod common;

use common::{eil51, exact_config, DESK_BATTERY, DESK_PAYLOAD};
use fleet_core::mcts::{evaluate_assignment, search, search_on, Phase, SearchBudget, SearchError, SearchTree};
use fleet_core::oracle::{exhaustive_solve, OracleOptions};
use fleet_core::routing::{validate_route, RoutingProblem};
use fleet_core::{derive_mht_instance, DeriveOptions, ExecMode, Fleet, Instance, RobotType, RoutingBudget};
use proptest::prelude::*;
use std::collections::BTreeSet;

/// Four tasks from the first nine eil51 points.
fn small_instance() -> Instance {
    derive_mht_instance(
        &eil51().prefix(9),
        Fleet::homogeneous(2, RobotType::new(DESK_BATTERY, DESK_PAYLOAD)),
        &DeriveOptions::default(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn statistics_stay_consistent(seed in any::<u64>(), iterations in 1u64..120, rollouts in 1usize..6) {
        let inst = small_instance();
        let mut cfg = exact_config(seed, iterations);
        cfg.rollouts = rollouts;
        let out = search(&inst, &cfg).unwrap();
        let tree = &out.tree;
        prop_assert!(tree.check_invariants().is_ok());
        prop_assert_eq!(tree.node(0).visits, out.evaluations);
        prop_assert_eq!(out.evaluations, out.iterations * rollouts as u64);
        for n in tree.nodes() {
            let below: u64 = n.children.iter().map(|&c| tree.node(c).visits).sum();
            let below_cost: f64 = n.children.iter().map(|&c| tree.node(c).cost_sum).sum();
            prop_assert!(n.visits >= below);
            prop_assert!(n.cost_sum >= below_cost - 1e-9 * n.cost_sum.max(1.0));
        }
        let costs: Vec<f64> = out.trace.rows.iter().map(|r| r.incumbent_kj).collect();
        prop_assert!(costs.windows(2).all(|w| w[1] < w[0]));
        prop_assert!(out.trace.rows.iter().all(|r| r.phase == Phase::Search && r.evaluations <= out.evaluations));
        if let Some(inc) = out.incumbent() {
            prop_assert_eq!(Some(inc.cost), out.trace.last_cost());
            prop_assert_eq!(inc.found_at_evaluation, out.trace.rows.last().unwrap().evaluations);
            let fresh = evaluate_assignment(&inc.assignment, &inst, &RoutingBudget::unlimited());
            prop_assert_eq!(fresh.cost, inc.cost);
        }
    }
}

#[test]
fn every_terminal_is_eventually_visited() {
    let inst = small_instance();
    // N counts rollouts, so with r = 20 and the default gamma the bonus of a
    // once-visited bad branch only wins after ~e^40 parent visits
    let mut cfg = exact_config(1, 5000);
    cfg.rollouts = 1;
    cfg.gamma = 2.0;
    let out = search(&inst, &cfg).unwrap();
    let tree = &out.tree;
    let mut seen = BTreeSet::new();
    for id in 0..tree.len() {
        if tree.is_terminal(id) && tree.node(id).visits > 0 {
            let a: Vec<usize> = tree.path_assignment(id).into_iter().map(Option::unwrap).collect();
            seen.insert(a);
        }
    }
    assert_eq!(seen.len(), 16);
}

#[test]
fn small_instance_finds_oracle_optimum() {
    let inst = small_instance();
    let oracle = exhaustive_solve(&inst, &OracleOptions::default()).unwrap();
    let out = search(&inst, &exact_config(4, 500)).unwrap();
    let inc = out.incumbent().unwrap();
    assert!(oracle.is_optimal(inc.cost));
    assert!(oracle.optimal.contains(&inc.assignment));
    for (r, route) in inc.routes.iter().enumerate() {
        let tasks = inc.assignment.tasks_of(r);
        validate_route(route, &RoutingProblem::new(&inst, r, &tasks)).unwrap();
    }
}

#[test]
fn parallel_and_sequential_agree() {
    let inst = common::desk_instance();
    let mut cfg = exact_config(12, 300);
    let par = search(&inst, &cfg).unwrap();
    cfg.exec = ExecMode::Sequential;
    let seq = search(&inst, &cfg).unwrap();
    assert_eq!(par.tree.nodes(), seq.tree.nodes());
    assert_eq!(par.evaluations, seq.evaluations);
    let strip = |o: &fleet_core::mcts::SearchOutcome| {
        o.trace.rows.iter().map(|r| (r.evaluations, r.incumbent_kj, r.assignment.clone())).collect::<Vec<_>>()
    };
    assert_eq!(strip(&par), strip(&seq));
}

#[test]
fn memoization_does_not_change_results() {
    let inst = small_instance();
    let mut cfg = exact_config(8, 200);
    let cached = search(&inst, &cfg).unwrap();
    cfg.memoize = false;
    let plain = search(&inst, &cfg).unwrap();
    assert_eq!(cached.tree.nodes(), plain.tree.nodes());
    assert!(cached.routing_calls < plain.routing_calls);
}

#[test]
fn continuing_a_search_extends_the_tree() {
    let inst = small_instance();
    let first = search(&inst, &exact_config(2, 50)).unwrap();
    let before = first.tree.len();
    let more = search_on(first.tree, &inst, &exact_config(2, 50)).unwrap();
    assert!(more.tree.len() >= before);
    assert_eq!(more.tree.node(0).visits, 100 * 20);
}

#[test]
fn budget_and_topology_errors() {
    let inst = small_instance();
    let mut cfg = exact_config(0, 10);
    cfg.budget = SearchBudget::default();
    assert!(matches!(search(&inst, &cfg), Err(SearchError::Config(_))));
    cfg = exact_config(0, 10);
    cfg.gamma = -1.0;
    assert!(matches!(search(&inst, &cfg), Err(SearchError::Config(_))));
    let wrong = SearchTree::new(vec![1, 2, 3, 4], 3);
    assert!(matches!(search_on(wrong, &inst, &exact_config(0, 10)), Err(SearchError::Topology(_))));
}

#[test]
fn evaluation_budget_overshoots_by_less_than_one_batch() {
    let inst = small_instance();
    let mut cfg = exact_config(0, 0);
    cfg.budget = SearchBudget::evaluations(95);
    let out = search(&inst, &cfg).unwrap();
    assert!(out.evaluations >= 95 && out.evaluations < 95 + 20);
}

