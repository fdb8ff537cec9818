//! Acceptance checks. Runs as a plain binary so every check prints one
//! PASS/FAIL line; the process fails if any check fails.

mod common;

use common::*;
use fleet_core::instance::apply_perturbation;
use fleet_core::io::{read_snapshot, run_experiment, save_tree, trace_to_csv, Checkpoint, Strategy};
use fleet_core::mcts::{evaluate_assignment, search, ConvergenceTrace, Incumbent, SearchBudget};
use fleet_core::oracle::{affected_robots, decentralized_adapt, exhaustive_solve, OracleOptions};
use fleet_core::routing::{leg_transition, route_bnb, validate_route, RoutingProblem};
use fleet_core::warm::{rank_leaves, warm_solve, WarmConfig};
use fleet_core::{EnergyMatrix, ExecMode, Fleet, Instance, Perturbation, RobotType, RoutingBudget};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

type Check = fn() -> Result<String, String>;

fn main() {
    let checks: [(&str, Check); 9] = [
        ("routing optimality vs brute force", routing_optimality),
        ("charging policy leg formulas", charging_policy),
        ("feasibility of every emitted route", feasibility_suite),
        ("MCTS convergence on the desk instance", mcts_convergence),
        ("warm start dominates cold start", warm_dominance),
        ("decentralized baseline gap", decentralized_gap),
        ("instance construction from eil51", instance_construction),
        ("determinism and tree persistence", determinism_and_persistence),
        ("argmin invariance under scaling", scale_invariance),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {}. {name} [{secs:.2}s] {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name} [{secs:.2}s] {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_routing_instances(count: usize, seed: u64) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let k = rng.gen_range(1..=4);
            let battery = rng.gen_range(150.0..450.0);
            let cap = rng.gen_range(3..=6) as f64;
            random_single_robot(&mut rng, k, battery, cap)
        })
        .collect()
}

fn routing_optimality() -> Result<String, String> {
    let start = Instant::now();
    let instances = random_routing_instances(50, 11);
    let mut recharging = 0;
    let mut infeasible = 0;
    for (i, inst) in instances.iter().enumerate() {
        let ids: Vec<usize> = (1..=inst.n_tasks()).collect();
        let p = RoutingProblem::new(inst, 0, &ids);
        let bnb = route_bnb(&p, &RoutingBudget::unlimited()).ok().map(|o| {
            if !o.route.charge_events().is_empty() {
                recharging += 1;
            }
            o.route.total_energy
        });
        let brute = brute_force_route(&p);
        match (bnb, brute) {
            (Some(a), Some(b)) => ensure((a - b).abs() <= 1e-9, || format!("instance {i}: bnb {a} vs brute force {b}"))?,
            (None, None) => infeasible += 1,
            (a, b) => return Err(format!("instance {i}: bnb {a:?} vs brute force {b:?}")),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 10.0, || format!("took {secs:.1}s"))?;
    Ok(format!("50 instances, {recharging} with recharges, {infeasible} infeasible, {secs:.2}s"))
}

fn charging_policy() -> Result<String, String> {
    // nodes 0 depot, 1 pickup, 2 delivery, 3 end depot
    let m = EnergyMatrix::from_rows(vec![
        vec![0.0, 0.1, 0.35, 0.0],
        vec![0.1, 0.0, 0.4, 0.1],
        vec![0.35, 0.4, 0.0, 0.35],
        vec![0.0, 0.1, 0.35, 0.0],
    ])
    .unwrap();
    let view = fleet_core::instance::RobotView {
        battery_kj: 20.0,
        payload_capacity: 10.0,
        energy: &m,
    };
    let direct = leg_transition(&view, 1, 0.9, 2).map_err(|e| e.to_string())?;
    ensure(!direct.recharged && direct.soc_after == 0.9 - 0.4 && direct.energy == 20.0 * 0.4, || {
        format!("direct leg: {direct:?}")
    })?;
    let detour = leg_transition(&view, 1, 0.3, 2).map_err(|e| e.to_string())?;
    ensure(
        detour.recharged && detour.soc_after == 1.0 - 0.35 && detour.energy == 20.0 * (0.1 + 0.35),
        || format!("detour leg: {detour:?}"),
    )?;
    ensure((detour.soc_after - 0.65).abs() < 1e-15 && (detour.energy - 9.0).abs() < 1e-12, || {
        format!("detour leg: {detour:?}")
    })?;
    // landing exactly on zero is not allowed: 0.4 - 0.4 = 0 forces the detour
    let drained = leg_transition(&view, 1, 0.4, 2).map_err(|e| e.to_string())?;
    ensure(drained.recharged, || "exact drain did not recharge".into())?;
    // not enough charge to reach the depot
    ensure(leg_transition(&view, 1, 0.05, 2).is_err(), || "stranded robot accepted".into())?;
    // leaving the depot needs no return leg
    let from_depot = leg_transition(&view, 0, 0.05, 2).map_err(|e| e.to_string())?;
    ensure(from_depot.recharged && from_depot.energy == 20.0 * 0.35, || format!("depot start: {from_depot:?}"))?;
    Ok("direct, detour (0.65 / 9 kJ), exact drain, stranded and depot-start legs".into())
}

fn validate_incumbent(inst: &Instance, inc: &Incumbent) -> Result<usize, String> {
    ensure(inc.routes.len() == inst.fleet.len(), || "route count differs from fleet".into())?;
    let mut total = 0.0;
    for (r, route) in inc.routes.iter().enumerate() {
        let tasks = inc.assignment.tasks_of(r);
        let p = RoutingProblem::new(inst, r, &tasks);
        validate_route(route, &p).map_err(|v| format!("robot {r}: {v:?}"))?;
        total += route.total_energy;
    }
    ensure((total - inc.cost).abs() <= 1e-9 * total.max(1.0), || format!("cost {} vs routes {total}", inc.cost))?;
    Ok(inc.routes.len())
}

fn feasibility_suite() -> Result<String, String> {
    let mut checked = 0;
    for inst in random_routing_instances(50, 11) {
        let ids: Vec<usize> = (1..=inst.n_tasks()).collect();
        let p = RoutingProblem::new(&inst, 0, &ids);
        if let Ok(o) = route_bnb(&p, &RoutingBudget::unlimited()) {
            validate_route(&o.route, &p).map_err(|v| format!("bnb route: {v:?}"))?;
            checked += 1;
        }
    }
    let desk = desk_instance();
    let perturbed: Vec<Instance> = ["battery robot=2 B=80", "payload robot=2 Q=1", "spatial xi=0.04 seed=7", "battery robot=1 B=85"]
        .iter()
        .map(|p| apply_perturbation(&desk, &p.parse().unwrap()).unwrap())
        .collect();
    let oracle = exhaustive_solve(&desk, &OracleOptions::default()).map_err(|e| e.to_string())?;
    for a in &oracle.optimal {
        let e = evaluate_assignment(a, &desk, &RoutingBudget::unlimited());
        for (r, route) in e.routes.iter().enumerate() {
            let tasks = a.tasks_of(r);
            validate_route(route, &RoutingProblem::new(&desk, r, &tasks)).map_err(|v| format!("oracle route: {v:?}"))?;
            checked += 1;
        }
    }
    for seed in 0..5 {
        let nominal = search(&desk, &exact_config(seed, 300)).map_err(|e| e.to_string())?;
        let inc = nominal.incumbent().ok_or("no nominal incumbent")?;
        checked += validate_incumbent(&desk, inc)?;
        for (pi, (text, inst)) in
            ["battery robot=2 B=80", "payload robot=2 Q=1", "spatial xi=0.04 seed=7", "battery robot=1 B=85"]
                .iter()
                .zip(&perturbed)
                .enumerate()
        {
            let p: Perturbation = text.parse().unwrap();
            let cold = search(inst, &exact_config(seed, 100)).map_err(|e| e.to_string())?;
            if let Some(i) = cold.incumbent() {
                checked += validate_incumbent(inst, i).map_err(|e| format!("cold p{pi}: {e}"))?;
            }
            let w = WarmConfig {
                resume: SearchBudget::iterations(50),
                ..WarmConfig::default()
            };
            let warm = warm_solve(&nominal.tree, inst, &w, &exact_config(seed, 0)).map_err(|e| e.to_string())?;
            if let Some(i) = warm.search.incumbent() {
                checked += validate_incumbent(inst, i).map_err(|e| format!("warm p{pi}: {e}"))?;
            }
            let affected = affected_robots(&p, &desk, inc).map_err(|e| e.to_string())?;
            let dec = decentralized_adapt(inc, inst, &affected, &RoutingBudget::unlimited());
            if let Some(i) = dec.incumbent() {
                checked += validate_incumbent(inst, &i).map_err(|e| format!("decentralized p{pi}: {e}"))?;
            }
        }
    }
    Ok(format!("{checked} routes, 0 violations"))
}

fn mcts_convergence() -> Result<String, String> {
    let desk = desk_instance();
    let t = Instant::now();
    let oracle = exhaustive_solve(&desk, &OracleOptions::default()).map_err(|e| e.to_string())?;
    let oracle_secs = t.elapsed().as_secs_f64();
    ensure(oracle.table.len() == 64 && oracle_secs < 60.0, || format!("oracle: {} rows in {oracle_secs:.1}s", oracle.table.len()))?;
    let opt = oracle.cost.ok_or("desk instance has no feasible assignment")?;
    let mut hits = 0;
    let mut worst_gap: f64 = 0.0;
    for seed in 0..25 {
        let out = search(&desk, &exact_config(seed, 2000)).map_err(|e| e.to_string())?;
        let cost = out.incumbent().ok_or_else(|| format!("seed {seed}: no incumbent"))?.cost;
        if oracle.is_optimal(cost) {
            hits += 1;
        }
        worst_gap = worst_gap.max(oracle.gap(cost).unwrap());
    }
    ensure(hits * 100 >= 90 * 25 && worst_gap <= 0.05, || {
        format!("{hits}/25 optimal, worst gap {:.3}%", 100.0 * worst_gap)
    })?;
    Ok(format!("optimum {opt:.3} kJ, {hits}/25 runs optimal, worst gap {:.3}%", 100.0 * worst_gap))
}

fn warm_dominance() -> Result<String, String> {
    let perts = ["battery robot=2 B=80", "payload robot=2 Q=1", "spatial xi=0.04 seed=7"];
    let spec = desk_experiment(&perts, 25);
    let desk = spec.load_instance(std::path::Path::new(".")).map_err(|e| e.to_string())?;
    let report = run_experiment(&spec, &desk).map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    let mut problems = Vec::new();
    for (pi, name) in perts.iter().enumerate() {
        let mut medians = Vec::new();
        for &cp in &[10u64, 100, 1000] {
            let c = Checkpoint::Evaluations(cp);
            let cold = report.summary_at(pi, Strategy::Cold, c).unwrap().median;
            let warm = report.summary_at(pi, Strategy::Warm, c).unwrap().median;
            medians.push(format!("{cp}:{warm:.1}/{cold:.1}"));
            if warm > cold {
                problems.push(format!("{name} @{cp}: warm median {warm:.3} > cold {cold:.3}"));
            }
        }
        for rep in 0..spec.repetitions {
            let leaves = report.nominal[rep].leaves;
            let limit = ((0.05 * leaves as f64).ceil() as u64).max(1) * spec.solver.rollouts as u64;
            let cell = report.cell(rep, pi, Strategy::Warm).unwrap();
            match &cell.outcome {
                Ok(d) => match d.trace.first_feasible() {
                    Some(row) if row.evaluations <= limit => {}
                    Some(row) => problems.push(format!("{name} rep {rep}: first feasible at {} > {limit}", row.evaluations)),
                    None => problems.push(format!("{name} rep {rep}: warm start found nothing")),
                },
                Err(e) => problems.push(format!("{name} rep {rep}: {e}")),
            }
        }
        notes.push(format!("{name} warm/cold medians {}", medians.join(" ")));
    }
    if problems.is_empty() {
        Ok(notes.join("; "))
    } else {
        Err(format!("{} | {}", problems.join("; "), notes.join("; ")))
    }
}

fn decentralized_gap() -> Result<String, String> {
    let desk = desk_instance();
    let nominal_oracle = exhaustive_solve(&desk, &OracleOptions::default()).map_err(|e| e.to_string())?;
    // the nominal plan where robot 1 serves everything
    let plan = nominal_oracle.optimal[0].clone();
    let e = evaluate_assignment(&plan, &desk, &RoutingBudget::unlimited());
    let nominal = Incumbent {
        assignment: plan,
        routes: e.routes,
        cost: e.cost,
        found_at_evaluation: 0,
        found_at_seconds: 0.0,
    };
    let p = Perturbation::battery(1, 85.0);
    let perturbed = apply_perturbation(&desk, &p).map_err(|e| e.to_string())?;
    let affected = affected_robots(&p, &desk, &nominal).map_err(|e| e.to_string())?;
    let dec = decentralized_adapt(&nominal, &perturbed, &affected, &RoutingBudget::unlimited());
    ensure(dec.routing_calls == affected.len() as u64 && affected == vec![0], || {
        format!("{} routing calls for affected {affected:?}", dec.routing_calls)
    })?;
    let oracle = exhaustive_solve(&perturbed, &OracleOptions::default()).map_err(|e| e.to_string())?;
    let opt = oracle.cost.ok_or("perturbed instance infeasible")?;
    let dec_cost = dec.cost.ok_or("decentralized plan infeasible")?;
    ensure(dec_cost > opt + 1e-9 * opt, || format!("decentralized {dec_cost} not above optimum {opt}"))?;

    let cold = search(&perturbed, &exact_config(5, 2000)).map_err(|e| e.to_string())?;
    let cold_cost = cold.incumbent().ok_or("cold found nothing")?.cost;
    let nominal_tree = search(&desk, &exact_config(5, 2000)).map_err(|e| e.to_string())?.tree;
    let w = WarmConfig {
        resume: SearchBudget::iterations(2000),
        ..WarmConfig::default()
    };
    let warm = warm_solve(&nominal_tree, &perturbed, &w, &exact_config(5, 0)).map_err(|e| e.to_string())?;
    let warm_cost = warm.search.incumbent().ok_or("warm found nothing")?.cost;
    ensure(oracle.is_optimal(cold_cost) && oracle.is_optimal(warm_cost), || {
        format!("cold {cold_cost}, warm {warm_cost}, optimum {opt}")
    })?;
    Ok(format!(
        "battery robot 1 -> 85 kJ: decentralized {dec_cost:.3} kJ in {} call ({:.4}s), optimum {opt:.3} kJ reached by cold and warm",
        dec.routing_calls, dec.wall_seconds
    ))
}

fn instance_construction() -> Result<String, String> {
    let cloud = eil51();
    let inst = fleet_core::derive_mht_instance(
        &cloud,
        Fleet::homogeneous(2, RobotType::new(20.0, 10.0)),
        &fleet_core::DeriveOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    ensure(inst.n_tasks() == 25, || format!("{} tasks", inst.n_tasks()))?;
    let n = cloud.points.len() as f64;
    let cx = cloud.points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = cloud.points.iter().map(|p| p.y).sum::<f64>() / n;
    let mut ranked: Vec<_> = cloud.points.clone();
    ranked.sort_by(|a, b| {
        let da = ((a.x - cx).powi(2) + (a.y - cy).powi(2)).sqrt();
        let db = ((b.x - cx).powi(2) + (b.y - cy).powi(2)).sqrt();
        da.partial_cmp(&db).unwrap().then(a.id.cmp(&b.id))
    });
    let ids: Vec<u32> = ranked.iter().map(|p| p.id).collect();
    ensure(inst.source_ids[0] == ids[0] && inst.source_ids[51] == ids[0], || {
        format!("depot {} / {}, expected {}", inst.source_ids[0], inst.source_ids[51], ids[0])
    })?;
    for t in &inst.tasks {
        // task i pairs rank i+1 with rank 52-i (ranks 1-based)
        let (p, d) = (ids[t.id], ids[51 - t.id]);
        ensure(inst.source_ids[t.pickup] == p && inst.source_ids[t.delivery] == d, || {
            format!(
                "task {}: ({}, {}), expected ({p}, {d})",
                t.id, inst.source_ids[t.pickup], inst.source_ids[t.delivery]
            )
        })?;
        ensure(t.pickup == t.id && t.delivery == t.id + 25, || format!("task {} node layout", t.id))?;
    }
    for (node, &sid) in inst.source_ids.iter().enumerate() {
        let pt = cloud.points.iter().find(|p| p.id == sid).unwrap();
        ensure(inst.coords[node] == [pt.x, pt.y], || format!("node {node} coordinates"))?;
    }
    Ok(format!(
        "25 tasks, depot point {}, first pair ({}, {}), last pair ({}, {})",
        ids[0], ids[1], ids[50], ids[25], ids[26]
    ))
}

fn strip_wall(trace: &ConvergenceTrace) -> Vec<(String, u64, f64, String)> {
    trace
        .rows
        .iter()
        .map(|r| (r.phase.to_string(), r.evaluations, r.incumbent_kj, r.assignment.clone()))
        .collect()
}

fn determinism_and_persistence() -> Result<String, String> {
    let desk = desk_instance();
    let mut cfg = exact_config(77, 400);
    let a = search(&desk, &cfg).map_err(|e| e.to_string())?;
    let b = search(&desk, &cfg).map_err(|e| e.to_string())?;
    cfg.exec = ExecMode::Sequential;
    let c = search(&desk, &cfg).map_err(|e| e.to_string())?;
    ensure(strip_wall(&a.trace) == strip_wall(&b.trace) && strip_wall(&a.trace) == strip_wall(&c.trace), || {
        "traces differ between identical runs".into()
    })?;
    ensure(a.tree.nodes() == b.tree.nodes() && a.tree.nodes() == c.tree.nodes(), || "trees differ".into())?;

    let p = apply_perturbation(&desk, &"battery robot=2 B=80".parse().unwrap()).unwrap();
    let w = WarmConfig {
        resume: SearchBudget::iterations(100),
        ..WarmConfig::default()
    };
    let w1 = warm_solve(&a.tree, &p, &w, &exact_config(3, 0)).map_err(|e| e.to_string())?;
    let w2 = warm_solve(&a.tree, &p, &w, &exact_config(3, 0)).map_err(|e| e.to_string())?;
    ensure(strip_wall(&w1.search.trace) == strip_wall(&w2.search.trace), || "warm traces differ".into())?;
    let csv = |t: &ConvergenceTrace| {
        trace_to_csv(t)
            .lines()
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                format!("{},{},{},{}", f[0], f[1], f[3], f[4])
            })
            .collect::<Vec<_>>()
    };
    ensure(csv(&w1.search.trace) == csv(&w2.search.trace), || "trace CSVs differ".into())?;

    let text = save_tree(&a.tree, &desk);
    let snap = read_snapshot(&text).map_err(|e| e.to_string())?;
    snap.check_instance(&p).map_err(|e| e.to_string())?;
    let loaded = snap.tree;
    ensure(loaded == a.tree, || "loaded tree differs".into())?;
    for (x, y) in loaded.nodes().iter().zip(a.tree.nodes()) {
        ensure(x.visits == y.visits && x.cost_sum.to_bits() == y.cost_sum.to_bits(), || "N or J changed".into())?;
        ensure(
            x.average_cost().map(f64::to_bits) == y.average_cost().map(f64::to_bits),
            || "J/N changed".into(),
        )?;
    }
    let r1 = rank_leaves(&a.tree).map_err(|e| e.to_string())?;
    let r2 = rank_leaves(&loaded).map_err(|e| e.to_string())?;
    ensure(r1 == r2, || "leaf ranking changed".into())?;
    Ok(format!("{} trace rows reproduced, {}-node tree round-tripped", a.trace.rows.len(), loaded.len()))
}

fn scale_invariance() -> Result<String, String> {
    let desk = desk_instance();
    let big = desk.scaled(3.0).map_err(|e| e.to_string())?;
    let o1 = exhaustive_solve(&desk, &OracleOptions::default()).map_err(|e| e.to_string())?;
    let o3 = exhaustive_solve(&big, &OracleOptions::default()).map_err(|e| e.to_string())?;
    ensure(o1.optimal == o3.optimal, || format!("argmin {:?} vs {:?}", o1.optimal, o3.optimal))?;
    let ratio = o3.cost.unwrap() / o1.cost.unwrap();
    ensure((ratio - 3.0).abs() < 1e-9, || format!("cost ratio {ratio}"))?;
    let mut cfg = exact_config(9, 500);
    cfg.record_selections = true;
    let s1 = search(&desk, &cfg).map_err(|e| e.to_string())?;
    let s3 = search(&big, &cfg).map_err(|e| e.to_string())?;
    ensure(s1.selections == s3.selections, || "selection sequences differ".into())?;
    Ok(format!(
        "{} optimal assignments kept, {} descents identical",
        o1.optimal.len(),
        s1.selections.map_or(0, |s| s.len())
    ))
}
