//! `fleet`: derive instances, solve, perturb, warm-restart and run experiments.
//!
//! Exit status is 0 on success, 1 when no feasible plan was found and 2 for
//! usage, input or configuration errors.

use clap::{Args, Parser, Subcommand};
use fleet_core::instance::apply_perturbation;
use fleet_core::io::{
    load_tree, oracle_to_csv, read_snapshot, run_experiment, save_tree, trace_to_csv, write_bundle, ExperimentSpec,
};
use fleet_core::mcts::{search, Phase, SearchBudget, SearchOutcome, TraceRow};
use fleet_core::oracle::{affected_robots, decentralized_adapt, exhaustive_solve, OracleOptions, DEFAULT_ORACLE_CAP};
use fleet_core::warm::{warm_solve, WarmConfig};
use fleet_core::{
    derive_mht_instance, load_tsplib, ConvergenceTrace, DeriveOptions, ExecMode, Fleet, Incumbent, Instance,
    Perturbation, RobotType, RoutingBudget, SolverConfig,
};
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

#[derive(Debug, Parser)]
#[command(name = "fleet", version, about = "Energy-aware task assignment for robot fleets")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Base seed for every random stream [default: 0, or the experiment's seed_base].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Search iterations (descents). Defaults to 1000 when no budget is given.
    #[arg(long, global = true)]
    budget_iters: Option<u64>,
    /// Search wall-time budget in seconds.
    #[arg(long, global = true)]
    budget_seconds: Option<f64>,
    /// Wall-time cap per routing call in milliseconds; 0 removes the cap.
    #[arg(long, global = true)]
    routing_cap_ms: Option<f64>,
    /// LCB exploration constant.
    #[arg(long, global = true, allow_negative_numbers = true)]
    gamma: Option<f64>,
    /// Rollouts per evaluation.
    #[arg(long, global = true)]
    rollouts: Option<usize>,
    /// Fraction of nominal leaves re-evaluated on a warm restart.
    #[arg(long, global = true)]
    k: Option<f64>,
    /// Run every loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build an instance from a TSPLIB point file.
    Derive {
        tsplib: PathBuf,
        /// Use only the first N points.
        #[arg(long)]
        points: Option<usize>,
        #[arg(long, default_value_t = 2)]
        robots: usize,
        #[arg(long, default_value_t = 20.0)]
        battery_kj: f64,
        #[arg(long, default_value_t = 10.0)]
        payload: f64,
        /// Mass of every task.
        #[arg(long, default_value_t = 1.0)]
        mass: f64,
        /// Instance file to write; stdout when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Search an instance from scratch.
    Solve {
        instance: PathBuf,
        /// Where to save the search tree.
        #[arg(long)]
        tree: Option<PathBuf>,
        /// Where to write the convergence trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Apply perturbations to an instance. Each SPEC is one line of the
    /// perturbation grammar, e.g. "battery robot=2 B=16"; `@file` reads one
    /// per line.
    Perturb {
        instance: PathBuf,
        #[arg(required = true)]
        spec: Vec<String>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Warm-restart a saved nominal tree on a perturbed instance.
    Warm {
        tree: PathBuf,
        instance: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Where to save the updated tree.
        #[arg(long)]
        out_tree: Option<PathBuf>,
    },
    /// Enumerate every assignment of a small instance.
    Oracle {
        instance: PathBuf,
        /// Per-assignment table CSV.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_ORACLE_CAP)]
        cap: u64,
    },
    /// Reroute only the robots a perturbation touches, keeping the nominal
    /// assignment from a saved tree.
    Baseline {
        nominal: PathBuf,
        tree: PathBuf,
        perturbed: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run a TOML experiment spec and write the result bundle.
    Experiment {
        spec: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
enum Failure {
    /// Bad input, arguments or configuration.
    Usage(String),
    /// The run finished without a feasible plan.
    Infeasible(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "error: {m}"),
            Failure::Infeasible(m) => write!(f, "infeasible: {m}"),
        }
    }
}

fn usage(e: impl fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, body: &str) -> Result<(), Failure> {
    std::fs::write(path, body).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

fn emit(path: Option<&Path>, body: &str) -> Result<(), Failure> {
    match path {
        Some(p) => write(p, body),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn load_instance(path: &Path) -> Result<Instance, Failure> {
    Instance::from_json(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

impl Global {
    fn exec(&self) -> ExecMode {
        if self.sequential {
            ExecMode::Sequential
        } else {
            ExecMode::Parallel
        }
    }

    fn budget(&self) -> SearchBudget {
        let mut b = SearchBudget {
            iterations: self.budget_iters,
            evaluations: None,
            wall_time: self.budget_seconds.map(Duration::from_secs_f64),
        };
        if !b.is_bounded() {
            b.iterations = Some(1000);
        }
        b
    }

    fn routing(&self) -> Option<RoutingBudget> {
        self.routing_cap_ms.map(|ms| {
            if ms > 0.0 {
                RoutingBudget::wall_time(Duration::from_secs_f64(ms / 1000.0))
            } else {
                RoutingBudget::unlimited()
            }
        })
    }

    fn check(&self) -> Result<(), Failure> {
        if self.budget_seconds.is_some_and(|s| !(s >= 0.0 && s.is_finite())) {
            return Err(usage("--budget-seconds must be a finite number >= 0"));
        }
        if self.routing_cap_ms.is_some_and(|ms| !(ms >= 0.0 && ms.is_finite())) {
            return Err(usage("--routing-cap-ms must be a finite number >= 0"));
        }
        Ok(())
    }

    fn solver(&self) -> Result<SolverConfig, Failure> {
        self.check()?;
        let d = SolverConfig::default();
        let cfg = SolverConfig {
            gamma: self.gamma.unwrap_or(d.gamma),
            rollouts: self.rollouts.unwrap_or(d.rollouts),
            routing: self.routing().unwrap_or(d.routing),
            budget: self.budget(),
            seed: self.seed.unwrap_or(0),
            exec: self.exec(),
            ..d
        };
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }
}

fn report_incumbent(inc: Option<&Incumbent>, instance: &Instance) {
    match inc {
        Some(i) => println!(
            "incumbent {:.6} kJ  assignment {}  found at evaluation {}",
            i.cost,
            i.assignment.labels(&instance.fleet),
            i.found_at_evaluation
        ),
        None => println!("no incumbent"),
    }
}

fn report_search(out: &SearchOutcome, instance: &Instance) {
    println!(
        "{} iterations, {} evaluations, {} routing calls, {} tree nodes, {:.3} s",
        out.iterations,
        out.evaluations,
        out.routing_calls,
        out.tree.len(),
        out.wall_seconds
    );
    report_incumbent(out.incumbent(), instance);
}

fn perturbation_lines(specs: &[String]) -> Result<Vec<Perturbation>, Failure> {
    let mut out = Vec::new();
    for s in specs {
        let lines = match s.strip_prefix('@') {
            Some(path) => read(Path::new(path))?,
            None => s.clone(),
        };
        for line in lines.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            out.push(line.parse().map_err(|e| usage(format!("perturbation {line:?}: {e}")))?);
        }
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let g = &cli.global;
    match cli.command {
        Command::Derive {
            tsplib,
            points,
            robots,
            battery_kj,
            payload,
            mass,
            out,
        } => {
            let mut cloud = load_tsplib(&read(&tsplib)?).map_err(usage)?;
            if let Some(n) = points {
                if n > cloud.len() {
                    return Err(usage(format!("--points {n} exceeds the {} points in the file", cloud.len())));
                }
                cloud = cloud.prefix(n);
            }
            let fleet = Fleet::homogeneous(robots, RobotType::new(battery_kj, payload));
            let options = DeriveOptions {
                task_mass: mass,
                masses: None,
            };
            let inst = derive_mht_instance(&cloud, fleet, &options).map_err(usage)?;
            eprintln!("{} tasks, depot at point {}", inst.n_tasks(), inst.source_ids[0]);
            emit(out.as_deref(), &inst.to_json())
        }
        Command::Solve { instance, tree, trace } => {
            let inst = load_instance(&instance)?;
            let cfg = g.solver()?;
            let out = search(&inst, &cfg).map_err(usage)?;
            if let Some(p) = &tree {
                write(p, &save_tree(&out.tree, &inst))?;
            }
            if let Some(p) = &trace {
                write(p, &trace_to_csv(&out.trace))?;
            }
            report_search(&out, &inst);
            if out.incumbent().is_none() {
                if out.evaluations == 0 {
                    eprintln!("warning: empty budget, no incumbent");
                } else {
                    return Err(Failure::Infeasible("no feasible assignment found".into()));
                }
            }
            Ok(())
        }
        Command::Perturb { instance, spec, out } => {
            let mut inst = load_instance(&instance)?;
            for p in perturbation_lines(&spec)? {
                inst = apply_perturbation(&inst, &p).map_err(usage)?;
            }
            emit(out.as_deref(), &inst.to_json())
        }
        Command::Warm {
            tree,
            instance,
            trace,
            out_tree,
        } => {
            let inst = load_instance(&instance)?;
            let nominal = load_tree(&read(&tree)?, &inst).map_err(usage)?;
            let cfg = g.solver()?;
            let d = WarmConfig::default();
            let wconfig = WarmConfig {
                k: g.k.unwrap_or(d.k),
                resume: cfg.budget,
                ..d
            };
            let out = warm_solve(&nominal, &inst, &wconfig, &cfg).map_err(usage)?;
            if let Some(p) = &trace {
                write(p, &trace_to_csv(&out.search.trace))?;
            }
            if let Some(p) = &out_tree {
                write(p, &save_tree(&out.search.tree, &inst))?;
            }
            println!(
                "re-evaluated {} leaves ({} evaluations), resumed for {} evaluations",
                out.reevaluated.len(),
                out.reeval_evaluations,
                out.resume_evaluations
            );
            report_search(&out.search, &inst);
            match out.search.incumbent() {
                Some(_) => Ok(()),
                None => Err(Failure::Infeasible("no feasible assignment found".into())),
            }
        }
        Command::Oracle { instance, table, cap } => {
            let inst = load_instance(&instance)?;
            let options = OracleOptions {
                cap,
                route_expansions: None,
                exec: g.exec(),
            };
            let res = exhaustive_solve(&inst, &options).map_err(usage)?;
            if let Some(p) = &table {
                write(p, &oracle_to_csv(&res, &inst.fleet))?;
            }
            let feasible = res.table.iter().filter(|r| r.cost.is_some()).count();
            println!("{} assignments, {feasible} feasible", res.table.len());
            match res.cost {
                Some(c) => {
                    println!("optimum {c:.6} kJ");
                    for a in &res.optimal {
                        println!("  {}", a.labels(&inst.fleet));
                    }
                    Ok(())
                }
                None => Err(Failure::Infeasible("no assignment is feasible".into())),
            }
        }
        Command::Baseline {
            nominal,
            tree,
            perturbed,
            trace,
        } => {
            let nom = load_instance(&nominal)?;
            let target = load_instance(&perturbed)?;
            if target.lineage_root() != nom.lineage_root() {
                return Err(usage("perturbed instance does not descend from the nominal instance"));
            }
            let snap = read_snapshot(&read(&tree)?).map_err(usage)?;
            snap.check_instance(&nom).map_err(usage)?;
            let inc = snap
                .tree
                .incumbent()
                .ok_or_else(|| usage("tree has no incumbent to adapt"))?;
            // replay the perturbation chain to collect every touched robot
            let mut affected = Vec::new();
            let mut step = nom.clone();
            let done = nom.meta.perturbations.len();
            for p in target.meta.perturbations.iter().skip(done) {
                affected.extend(affected_robots(p, &step, inc).map_err(usage)?);
                step = apply_perturbation(&step, p).map_err(usage)?;
            }
            affected.sort_unstable();
            affected.dedup();
            let routing = g.routing().unwrap_or_else(RoutingBudget::unlimited);
            let out = decentralized_adapt(inc, &target, &affected, &routing);
            let labels: Vec<String> = affected.iter().map(|&r| target.fleet.robots[r].id.to_string()).collect();
            println!("rerouted robots [{}] with {} routing calls", labels.join(", "), out.routing_calls);
            for (r, why) in &out.failures {
                println!("robot {} has no feasible route: {why}", target.fleet.robots[*r].id);
            }
            if let Some(p) = &trace {
                let mut t = ConvergenceTrace::default();
                if let Some(c) = out.cost {
                    t.push(TraceRow {
                        phase: Phase::Reroute,
                        evaluations: out.routing_calls,
                        wall_seconds: out.wall_seconds,
                        incumbent_kj: c,
                        assignment: out.assignment.labels(&target.fleet),
                    });
                }
                write(p, &trace_to_csv(&t))?;
            }
            match out.incumbent() {
                Some(i) => {
                    report_incumbent(Some(&i), &target);
                    Ok(())
                }
                None => Err(Failure::Infeasible("nominal assignment cannot be rerouted".into())),
            }
        }
        Command::Experiment { spec, out } => {
            g.check()?;
            let mut s = ExperimentSpec::from_toml(&read(&spec)?).map_err(usage)?;
            if let Some(seed) = g.seed {
                s.seed_base = seed;
            }
            if g.budget_iters.is_some() || g.budget_seconds.is_some() {
                s.budget.iterations = g.budget_iters;
                s.budget.evaluations = None;
                s.budget.seconds = g.budget_seconds;
            }
            if let Some(v) = g.gamma {
                s.solver.gamma = v;
            }
            if let Some(v) = g.rollouts {
                s.solver.rollouts = v;
            }
            if let Some(v) = g.routing_cap_ms {
                s.solver.routing_cap_ms = (v > 0.0).then_some(v);
            }
            if let Some(v) = g.k {
                s.warm.k = v;
            }
            if g.sequential {
                s.exec = ExecMode::Sequential;
            }
            s.validate().map_err(usage)?;
            let base = spec.parent().unwrap_or(Path::new("."));
            let inst = s.load_instance(base).map_err(usage)?;
            let report = run_experiment(&s, &inst).map_err(usage)?;
            let files = write_bundle(&report, &out).map_err(usage)?;
            let failed = report.cells.iter().filter(|c| c.outcome.is_err()).count();
            println!("{} files written to {}, {failed} failed cells", files.len(), out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            match f {
                Failure::Infeasible(_) => ExitCode::from(1),
                Failure::Usage(_) => ExitCode::from(2),
            }
        }
    }
}
