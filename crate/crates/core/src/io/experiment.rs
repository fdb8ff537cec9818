//! Paired-strategy experiments: a nominal search per repetition, then cold
//! search, warm restart and decentralized rerouting on every perturbation.

use super::tables::{oracle_to_csv, trace_to_csv};
use crate::instance::{
    apply_perturbation, derive_mht_instance, load_tsplib, DeriveOptions, Fleet, Instance, Perturbation, RobotType,
};
use crate::mcts::{search, ConvergenceTrace, Phase, SearchBudget, SolverConfig, TraceRow};
use crate::oracle::{affected_robots, decentralized_adapt, exhaustive_solve, OracleOptions, OracleResult};
use crate::par::{map_collect, ExecMode};
use crate::rng::split;
use crate::routing::RoutingBudget;
use crate::warm::{warm_solve, WarmConfig};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;
use thiserror::Error;

pub const EXPERIMENT_FORMAT: &str = "fleet-experiment/1";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("experiment spec: {0}")]
    Spec(String),
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

fn spec_err(m: impl Into<String>) -> ExperimentError {
    ExperimentError::Spec(m.into())
}

/// Where the nominal instance comes from. Relative paths resolve against the
/// spec file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSource {
    /// A saved instance file; takes precedence over `tsplib`.
    #[serde(default)]
    pub instance: Option<PathBuf>,
    #[serde(default)]
    pub tsplib: Option<PathBuf>,
    /// Use only the first `points` coordinates of the TSPLIB file.
    #[serde(default)]
    pub points: Option<usize>,
    #[serde(default = "default_robots")]
    pub robots: usize,
    #[serde(default = "default_battery")]
    pub battery_kj: f64,
    #[serde(default = "default_payload")]
    pub payload: f64,
    #[serde(default = "default_mass")]
    pub mass: f64,
}

fn default_robots() -> usize {
    2
}
fn default_battery() -> f64 {
    20.0
}
fn default_payload() -> f64 {
    10.0
}
fn default_mass() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSpec {
    #[serde(default)]
    pub iterations: Option<u64>,
    #[serde(default)]
    pub evaluations: Option<u64>,
    #[serde(default)]
    pub seconds: Option<f64>,
}

impl BudgetSpec {
    pub fn to_budget(self) -> SearchBudget {
        SearchBudget {
            iterations: self.iterations,
            evaluations: self.evaluations,
            wall_time: self.seconds.map(Duration::from_secs_f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_rollouts")]
    pub rollouts: usize,
    /// Wall-time cap per routing call. Leave unset for reproducible runs.
    #[serde(default)]
    pub routing_cap_ms: Option<f64>,
    #[serde(default)]
    pub routing_expansions: Option<u64>,
    #[serde(default = "default_true")]
    pub memoize: bool,
}

fn default_gamma() -> f64 {
    0.5f64.sqrt()
}
fn default_rollouts() -> usize {
    20
}
fn default_true() -> bool {
    true
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            gamma: default_gamma(),
            rollouts: default_rollouts(),
            routing_cap_ms: None,
            routing_expansions: None,
            memoize: true,
        }
    }
}

impl SolverSpec {
    pub fn routing_budget(&self) -> RoutingBudget {
        RoutingBudget {
            wall_time: self.routing_cap_ms.map(|ms| Duration::from_secs_f64(ms / 1000.0)),
            max_expansions: self.routing_expansions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarmSpec {
    #[serde(default = "default_k")]
    pub k: f64,
    #[serde(default)]
    pub rollouts: Option<usize>,
}

fn default_k() -> f64 {
    0.05
}

impl Default for WarmSpec {
    fn default() -> Self {
        Self {
            k: default_k(),
            rollouts: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoints {
    #[serde(default)]
    pub evaluations: Vec<u64>,
    #[serde(default)]
    pub seconds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub format: String,
    #[serde(default)]
    pub name: Option<String>,
    pub instance: InstanceSource,
    /// Budget of the nominal search that builds the prior tree.
    pub nominal: BudgetSpec,
    /// Budget given to each strategy after the perturbation. Warm restart
    /// spends part of it on re-evaluation.
    pub budget: BudgetSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub warm: WarmSpec,
    /// Perturbations in the one-line text grammar, e.g. `battery robot=2 B=16`.
    pub perturbations: Vec<String>,
    pub repetitions: usize,
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default)]
    pub checkpoints: Checkpoints,
    /// Solve each perturbed instance exhaustively to report optimality gaps.
    #[serde(default)]
    pub oracle: bool,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    #[serde(default)]
    pub exec: ExecMode,
}

fn default_bins() -> usize {
    10
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let spec: Self = toml::from_str(text).map_err(|e| spec_err(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.format != EXPERIMENT_FORMAT {
            return Err(spec_err(format!(
                "unsupported format {:?}, expected {EXPERIMENT_FORMAT:?}",
                self.format
            )));
        }
        if self.repetitions == 0 {
            return Err(spec_err("repetitions must be >= 1"));
        }
        if self.instance.instance.is_none() && self.instance.tsplib.is_none() {
            return Err(spec_err("instance needs `instance` or `tsplib`"));
        }
        if !self.checkpoints.evaluations.windows(2).all(|w| w[0] < w[1]) {
            return Err(spec_err("evaluation checkpoints must be ascending"));
        }
        if !self.checkpoints.seconds.windows(2).all(|w| w[0] < w[1]) {
            return Err(spec_err("time checkpoints must be ascending"));
        }
        if self.histogram_bins == 0 {
            return Err(spec_err("histogram_bins must be >= 1"));
        }
        for p in &self.perturbations {
            p.parse::<Perturbation>().map_err(|e| spec_err(format!("perturbation {p:?}: {e}")))?;
        }
        for (what, b) in [("nominal", self.nominal), ("budget", self.budget)] {
            if !b.to_budget().is_bounded() {
                return Err(spec_err(format!("[{what}] needs iterations, evaluations or seconds")));
            }
        }
        WarmConfig {
            k: self.warm.k,
            rollouts: self.warm.rollouts,
            ..WarmConfig::default()
        }
        .validate()
        .map_err(|e| spec_err(e.to_string()))?;
        self.solver_config(0, SearchBudget::iterations(0), ExecMode::Sequential)
            .validate()
            .map_err(|e| spec_err(e.to_string()))
    }

    pub fn parsed_perturbations(&self) -> Vec<Perturbation> {
        self.perturbations
            .iter()
            .map(|p| p.parse().expect("validated"))
            .collect()
    }

    pub fn solver_config(&self, seed: u64, budget: SearchBudget, exec: ExecMode) -> SolverConfig {
        SolverConfig {
            gamma: self.solver.gamma,
            rollouts: self.solver.rollouts,
            routing: self.solver.routing_budget(),
            budget,
            seed,
            exec,
            memoize: self.solver.memoize,
            record_selections: false,
        }
    }

    /// Builds the nominal instance; relative paths resolve against `base`.
    pub fn load_instance(&self, base: &Path) -> Result<Instance, ExperimentError> {
        let src = &self.instance;
        let read = |p: &Path| {
            let path = base.join(p);
            std::fs::read_to_string(&path).map_err(|source| ExperimentError::Read { path, source })
        };
        if let Some(p) = &src.instance {
            return Instance::from_json(&read(p)?).map_err(|e| spec_err(e.to_string()));
        }
        let p = src.tsplib.as_ref().expect("validated");
        let mut cloud = load_tsplib(&read(p)?).map_err(|e| spec_err(e.to_string()))?;
        if let Some(n) = src.points {
            cloud = cloud.prefix(n);
        }
        let fleet = Fleet::homogeneous(src.robots, RobotType::new(src.battery_kj, src.payload));
        let options = DeriveOptions {
            task_mass: src.mass,
            masses: None,
        };
        derive_mht_instance(&cloud, fleet, &options).map_err(|e| spec_err(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Cold,
    Warm,
    Decentralized,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Cold, Strategy::Warm, Strategy::Decentralized];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Cold => "cold",
            Strategy::Warm => "warm",
            Strategy::Decentralized => "decentralized",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellData {
    pub trace: ConvergenceTrace,
    pub final_cost: Option<f64>,
    pub evaluations: u64,
    pub wall_seconds: f64,
    /// Set when the strategy finished without a feasible plan.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub repetition: usize,
    pub perturbation: usize,
    pub strategy: Strategy,
    pub outcome: Result<CellData, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NominalRun {
    pub repetition: usize,
    pub trace: ConvergenceTrace,
    pub cost: Option<f64>,
    pub leaves: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Checkpoint {
    Evaluations(u64),
    Seconds(f64),
}

impl Checkpoint {
    fn kind(self) -> &'static str {
        match self {
            Checkpoint::Evaluations(_) => "evaluations",
            Checkpoint::Seconds(_) => "seconds",
        }
    }

    fn value(self) -> String {
        match self {
            Checkpoint::Evaluations(e) => e.to_string(),
            Checkpoint::Seconds(s) => s.to_string(),
        }
    }

    fn read(self, cell: &CellData) -> Option<f64> {
        match self {
            Checkpoint::Evaluations(e) => cell.trace.incumbent_at(e),
            Checkpoint::Seconds(s) => cell.trace.incumbent_at_time(s),
        }
    }
}

/// Order statistics of incumbent costs at one checkpoint. Runs without an
/// incumbent count as infinitely expensive.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub perturbation: usize,
    pub strategy: Strategy,
    pub checkpoint: Checkpoint,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub with_incumbent: usize,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub perturbation: usize,
    pub checkpoint: Checkpoint,
    /// `true` when bins are relative gaps to the oracle optimum, in percent.
    pub gap_percent: bool,
    /// `(lo, hi, counts per strategy in `Strategy::ALL` order)`.
    pub bins: Vec<(f64, f64, [usize; 3])>,
    /// Runs without an incumbent, per strategy.
    pub missing: [usize; 3],
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub perturbations: Vec<Perturbation>,
    pub nominal: Vec<NominalRun>,
    pub cells: Vec<Cell>,
    pub oracles: Vec<Option<OracleResult>>,
    pub perturbed: Vec<Instance>,
    pub summary: Vec<SummaryRow>,
    pub histograms: Vec<Histogram>,
}

impl ExperimentReport {
    pub fn cell(&self, repetition: usize, perturbation: usize, strategy: Strategy) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.repetition == repetition && c.perturbation == perturbation && c.strategy == strategy)
    }

    pub fn summary_at(&self, perturbation: usize, strategy: Strategy, checkpoint: Checkpoint) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|s| s.perturbation == perturbation && s.strategy == strategy && s.checkpoint == checkpoint)
    }
}

fn derived_seed(base: u64, repetition: usize, role: u64) -> u64 {
    split(base, &[repetition as u64, role]).gen()
}

const ROLE_NOMINAL: u64 = 1;
const ROLE_PERTURBED: u64 = 2;

/// Runs every repetition; repetitions run in parallel when `spec.exec` allows.
/// Strategy failures are recorded per cell and never abort the run.
pub fn run_experiment(spec: &ExperimentSpec, nominal: &Instance) -> Result<ExperimentReport, ExperimentError> {
    spec.validate()?;
    let perturbations = spec.parsed_perturbations();
    let perturbed: Vec<Result<Instance, String>> = perturbations
        .iter()
        .map(|p| apply_perturbation(nominal, p).map_err(|e| e.to_string()))
        .collect();
    let oracles: Vec<Option<OracleResult>> = perturbed
        .iter()
        .map(|inst| match (spec.oracle, inst) {
            (true, Ok(i)) => exhaustive_solve(
                i,
                &OracleOptions {
                    exec: spec.exec,
                    ..OracleOptions::default()
                },
            )
            .ok(),
            _ => None,
        })
        .collect();

    // nested loops stay sequential while repetitions run in parallel
    let inner = if spec.exec.is_parallel() { ExecMode::Sequential } else { spec.exec };
    let reps: Vec<usize> = (0..spec.repetitions).collect();
    let results = map_collect(spec.exec, &reps, |&rep| run_repetition(spec, rep, nominal, &perturbations, &perturbed, inner));

    let mut nominal_runs = Vec::new();
    let mut cells = Vec::new();
    for (run, mut c) in results {
        nominal_runs.push(run);
        cells.append(&mut c);
    }
    let mut checkpoints: Vec<Checkpoint> = spec.checkpoints.evaluations.iter().map(|&e| Checkpoint::Evaluations(e)).collect();
    checkpoints.extend(spec.checkpoints.seconds.iter().map(|&s| Checkpoint::Seconds(s)));
    let summary = summarize(&cells, perturbations.len(), &checkpoints);
    let histograms = histograms(&cells, perturbations.len(), &checkpoints, &oracles, spec.histogram_bins);
    Ok(ExperimentReport {
        spec: spec.clone(),
        perturbations,
        nominal: nominal_runs,
        cells,
        oracles,
        perturbed: perturbed.into_iter().map(|p| p.unwrap_or_else(|_| nominal.clone())).collect(),
        summary,
        histograms,
    })
}

fn run_repetition(
    spec: &ExperimentSpec,
    rep: usize,
    nominal: &Instance,
    perturbations: &[Perturbation],
    perturbed: &[Result<Instance, String>],
    exec: ExecMode,
) -> (NominalRun, Vec<Cell>) {
    let nominal_cfg = spec.solver_config(derived_seed(spec.seed_base, rep, ROLE_NOMINAL), spec.nominal.to_budget(), exec);
    let run_cfg = spec.solver_config(derived_seed(spec.seed_base, rep, ROLE_PERTURBED), spec.budget.to_budget(), exec);
    let nominal_out = search(nominal, &nominal_cfg);
    let nominal_run = NominalRun {
        repetition: rep,
        trace: nominal_out.as_ref().map(|o| o.trace.clone()).unwrap_or_default(),
        cost: nominal_out.as_ref().ok().and_then(|o| o.incumbent().map(|i| i.cost)),
        leaves: nominal_out.as_ref().map(|o| o.tree.leaves().count()).unwrap_or(0),
    };

    let mut cells = Vec::new();
    for (pi, (p, inst)) in perturbations.iter().zip(perturbed).enumerate() {
        let cell = |strategy, outcome| Cell {
            repetition: rep,
            perturbation: pi,
            strategy,
            outcome,
        };
        let inst = match inst {
            Ok(i) => i,
            Err(e) => {
                for s in Strategy::ALL {
                    cells.push(cell(s, Err(format!("perturbation failed: {e}"))));
                }
                continue;
            }
        };

        let cold = search(inst, &run_cfg).map_err(|e| e.to_string()).map(|o| CellData {
            final_cost: o.incumbent().map(|i| i.cost),
            note: None,
            evaluations: o.evaluations,
            wall_seconds: o.wall_seconds,
            trace: o.trace,
        });
        cells.push(cell(Strategy::Cold, cold));

        let warm = match &nominal_out {
            Ok(nom) => {
                let wconfig = WarmConfig {
                    k: spec.warm.k,
                    rollouts: spec.warm.rollouts,
                    resume: spec.budget.to_budget(),
                    shared_budget: true,
                };
                warm_solve(&nom.tree, inst, &wconfig, &run_cfg)
                    .map_err(|e| e.to_string())
                    .map(|o| CellData {
                        final_cost: o.search.incumbent().map(|i| i.cost),
                        note: None,
                        evaluations: o.search.evaluations,
                        wall_seconds: o.search.wall_seconds,
                        trace: o.search.trace,
                    })
            }
            Err(e) => Err(format!("nominal search failed: {e}")),
        };
        cells.push(cell(Strategy::Warm, warm));

        let nominal_inc = nominal_out.as_ref().ok().and_then(|o| o.incumbent());
        let dec = match nominal_inc {
            None => Err("nominal search produced no incumbent".to_string()),
            Some(inc) => affected_robots(p, nominal, inc).map_err(|e| e.to_string()).map(|affected| {
                let out = decentralized_adapt(inc, inst, &affected, &spec.solver.routing_budget());
                let mut trace = ConvergenceTrace::default();
                if let Some(c) = out.cost {
                    trace.push(TraceRow {
                        phase: Phase::Reroute,
                        evaluations: out.routing_calls,
                        wall_seconds: out.wall_seconds,
                        incumbent_kj: c,
                        assignment: out.assignment.labels(&inst.fleet),
                    });
                }
                let note = (!out.failures.is_empty()).then(|| {
                    out.failures
                        .iter()
                        .map(|(r, m)| format!("robot {}: {m}", inst.fleet.robots[*r].id))
                        .collect::<Vec<_>>()
                        .join("; ")
                });
                CellData {
                    trace,
                    final_cost: out.cost,
                    evaluations: out.routing_calls,
                    wall_seconds: out.wall_seconds,
                    note,
                }
            }),
        };
        cells.push(cell(Strategy::Decentralized, dec));
    }
    (nominal_run, cells)
}

/// Median with the mean of the two middle values for even counts.
pub fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        let (a, b) = (sorted[n / 2 - 1], sorted[n / 2]);
        if a == b {
            a
        } else {
            (a + b) / 2.0
        }
    }
}

fn checkpoint_values(cells: &[Cell], pi: usize, s: Strategy, cp: Checkpoint) -> Vec<Option<f64>> {
    cells
        .iter()
        .filter(|c| c.perturbation == pi && c.strategy == s)
        .map(|c| c.outcome.as_ref().ok().and_then(|d| cp.read(d)))
        .collect()
}

fn summarize(cells: &[Cell], n_pert: usize, checkpoints: &[Checkpoint]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for pi in 0..n_pert {
        for s in Strategy::ALL {
            for &cp in checkpoints {
                let vals = checkpoint_values(cells, pi, s, cp);
                let mut v: Vec<f64> = vals.iter().map(|x| x.unwrap_or(f64::INFINITY)).collect();
                v.sort_by(f64::total_cmp);
                out.push(SummaryRow {
                    perturbation: pi,
                    strategy: s,
                    checkpoint: cp,
                    min: v.first().copied().unwrap_or(f64::NAN),
                    median: median(&v),
                    max: v.last().copied().unwrap_or(f64::NAN),
                    with_incumbent: vals.iter().filter(|x| x.is_some()).count(),
                    runs: vals.len(),
                });
            }
        }
    }
    out
}

fn histograms(
    cells: &[Cell],
    n_pert: usize,
    checkpoints: &[Checkpoint],
    oracles: &[Option<OracleResult>],
    bins: usize,
) -> Vec<Histogram> {
    let mut out = Vec::new();
    for pi in 0..n_pert {
        let oracle = oracles.get(pi).and_then(|o| o.as_ref()).filter(|o| o.cost.is_some());
        for &cp in checkpoints {
            let per: Vec<Vec<Option<f64>>> = Strategy::ALL
                .iter()
                .map(|&s| {
                    checkpoint_values(cells, pi, s, cp)
                        .into_iter()
                        .map(|v| v.map(|c| oracle.and_then(|o| o.gap(c)).map_or(c, |g| 100.0 * g)))
                        .collect()
                })
                .collect();
            let finite: Vec<f64> = per.iter().flatten().flatten().copied().collect();
            let lo = if oracle.is_some() { 0.0 } else { finite.iter().copied().fold(f64::INFINITY, f64::min) };
            let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut table = Vec::new();
            let mut missing = [0; 3];
            if !finite.is_empty() {
                let count = if hi > lo { bins } else { 1 };
                let width = if hi > lo { (hi - lo) / bins as f64 } else { 0.0 };
                for b in 0..count {
                    let b_lo = lo + width * b as f64;
                    let b_hi = if b + 1 == count { hi } else { lo + width * (b + 1) as f64 };
                    table.push((b_lo, b_hi, [0; 3]));
                }
                for (si, vals) in per.iter().enumerate() {
                    for v in vals.iter().flatten() {
                        let idx = if width > 0.0 { (((v - lo) / width) as usize).min(count - 1) } else { 0 };
                        table[idx].2[si] += 1;
                    }
                }
            }
            for (si, vals) in per.iter().enumerate() {
                missing[si] = vals.iter().filter(|v| v.is_none()).count();
            }
            out.push(Histogram {
                perturbation: pi,
                checkpoint: cp,
                gap_percent: oracle.is_some(),
                bins: table,
                missing,
            });
        }
    }
    out
}

fn num(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        v.to_string()
    }
}

/// Writes the report under `dir`:
///
/// ```text
/// spec.toml  perturbations.txt  summary.csv  failures.csv
/// nominal/rep_000.csv ...
/// traces/p0/{cold,warm,decentralized}/rep_000.csv ...
/// histograms/p0_evaluations_100.csv ...
/// oracle/p0.csv            (when the oracle ran)
/// ```
///
/// Every file is produced from the finished report on the calling thread.
pub fn write_bundle(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let mut written = Vec::new();
    let mut put = |rel: String, body: String| -> Result<(), ExperimentError> {
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|source| ExperimentError::Write {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        std::fs::write(&path, body).map_err(|source| ExperimentError::Write {
            path: path.clone(),
            source,
        })?;
        written.push(path);
        Ok(())
    };

    put("spec.toml".into(), report.spec.to_toml())?;
    let mut pert = String::new();
    for (i, p) in report.perturbations.iter().enumerate() {
        let _ = writeln!(pert, "p{i}\t{p}");
    }
    put("perturbations.txt".into(), pert)?;

    for run in &report.nominal {
        put(format!("nominal/rep_{:03}.csv", run.repetition), trace_to_csv(&run.trace))?;
    }
    let mut failures = String::from("repetition,perturbation,strategy,error\n");
    for c in &report.cells {
        match &c.outcome {
            Ok(d) => {
                let rel = format!("traces/p{}/{}/rep_{:03}.csv", c.perturbation, c.strategy.as_str(), c.repetition);
                put(rel, trace_to_csv(&d.trace))?;
                if let Some(note) = &d.note {
                    let _ = writeln!(failures, "{},p{},{},\"{}\"", c.repetition, c.perturbation, c.strategy.as_str(), note.replace('"', "'"));
                }
            }
            Err(e) => {
                let _ = writeln!(failures, "{},p{},{},\"{}\"", c.repetition, c.perturbation, c.strategy.as_str(), e.replace('"', "'"));
            }
        }
    }
    put("failures.csv".into(), failures)?;

    let mut summary = String::from("perturbation,strategy,checkpoint_kind,checkpoint,min_kJ,median_kJ,max_kJ,with_incumbent,runs\n");
    for s in &report.summary {
        let _ = writeln!(
            summary,
            "p{},{},{},{},{},{},{},{},{}",
            s.perturbation,
            s.strategy.as_str(),
            s.checkpoint.kind(),
            s.checkpoint.value(),
            num(s.min),
            num(s.median),
            num(s.max),
            s.with_incumbent,
            s.runs
        );
    }
    put("summary.csv".into(), summary)?;

    for h in &report.histograms {
        let unit = if h.gap_percent { "gap_percent" } else { "kJ" };
        let mut t = format!("bin_lo_{unit},bin_hi_{unit},cold,warm,decentralized\n");
        for (lo, hi, c) in &h.bins {
            let _ = writeln!(t, "{lo},{hi},{},{},{}", c[0], c[1], c[2]);
        }
        let _ = writeln!(t, "none,none,{},{},{}", h.missing[0], h.missing[1], h.missing[2]);
        put(
            format!("histograms/p{}_{}_{}.csv", h.perturbation, h.checkpoint.kind(), h.checkpoint.value()),
            t,
        )?;
    }
    for (i, o) in report.oracles.iter().enumerate() {
        if let Some(o) = o {
            put(format!("oracle/p{i}.csv"), oracle_to_csv(o, &report.perturbed[i].fleet))?;
        }
    }
    Ok(written)
}
