use super::eval::{Evaluation, Evaluator};
use super::tree::{SearchTree, ROOT};
use super::{Assignment, ConvergenceTrace, Incumbent, Phase, SearchBudget, SearchError, SolverConfig, TraceRow};
use crate::instance::Instance;
use crate::rng::{split, STREAM_ROLLOUT, STREAM_SELECT};
use rand::Rng;
use std::sync::Arc;
use std::time::Instant;

/// Fills the unassigned entries of `prefix` with uniformly drawn robots, in
/// task-id order. A complete prefix consumes no randomness.
pub fn rollout_assignment<R: Rng + ?Sized>(prefix: &[Option<usize>], fleet_size: usize, rng: &mut R) -> Assignment {
    Assignment(
        prefix
            .iter()
            .map(|slot| slot.unwrap_or_else(|| rng.gen_range(0..fleet_size)))
            .collect(),
    )
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub tree: SearchTree,
    pub trace: ConvergenceTrace,
    pub iterations: u64,
    /// Rollout evaluations, terminal evaluations counted `r` times.
    pub evaluations: u64,
    /// Assignments actually routed (cache hits excluded).
    pub routing_calls: u64,
    pub wall_seconds: f64,
    /// Node path of every descent, when requested.
    pub selections: Option<Vec<Vec<usize>>>,
}

impl SearchOutcome {
    pub fn incumbent(&self) -> Option<&Incumbent> {
        self.tree.incumbent()
    }
}

/// Cold-start search from a root-only tree with tasks in ascending id order.
pub fn search(instance: &Instance, config: &SolverConfig) -> Result<SearchOutcome, SearchError> {
    let tree = SearchTree::new((1..=instance.n_tasks()).collect(), instance.fleet.len());
    search_on(tree, instance, config)
}

/// Continues searching `tree` on `instance` under `config.budget`.
pub fn search_on(tree: SearchTree, instance: &Instance, config: &SolverConfig) -> Result<SearchOutcome, SearchError> {
    config.validate()?;
    if instance.fleet.is_empty() {
        return Err(SearchError::Config("fleet is empty".into()));
    }
    let mut engine = Engine::new(tree, instance, config, 0, Phase::Search)?;
    engine.run(&config.budget)?;
    Ok(engine.finish())
}

/// The single-writer search loop shared by cold search, re-evaluation and
/// resumed search. Counters and the clock persist across phases.
pub(crate) struct Engine<'a> {
    pub tree: SearchTree,
    config: &'a SolverConfig,
    evaluator: Evaluator<'a>,
    pub iterations: u64,
    pub evaluations: u64,
    pub trace: ConvergenceTrace,
    pub phase: Phase,
    /// Rollouts per non-terminal evaluation, weight of a terminal one.
    pub rollouts: usize,
    /// Separates random streams of different phases on the same seed.
    stream: u64,
    started: Instant,
    selections: Option<Vec<Vec<usize>>>,
}

impl<'a> Engine<'a> {
    pub fn new(
        tree: SearchTree,
        instance: &'a Instance,
        config: &'a SolverConfig,
        stream: u64,
        phase: Phase,
    ) -> Result<Self, SearchError> {
        check_fit(&tree, instance)?;
        Ok(Self {
            tree,
            config,
            evaluator: Evaluator::new(instance, config.routing, config.exec, config.memoize),
            iterations: 0,
            evaluations: 0,
            trace: ConvergenceTrace::default(),
            phase,
            rollouts: config.rollouts,
            stream,
            started: Instant::now(),
            selections: config.record_selections.then(Vec::new),
        })
    }

    pub fn elapsed(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }

    pub fn set_stream(&mut self, stream: u64) {
        self.stream = stream;
    }

    /// Runs iterations until a cap in `budget`, counted from now, is reached.
    pub fn run(&mut self, budget: &SearchBudget) -> Result<(), SearchError> {
        let (it0, ev0) = (self.iterations, self.evaluations);
        let t0 = Instant::now();
        loop {
            if budget.iterations.is_some_and(|cap| self.iterations - it0 >= cap)
                || budget.evaluations.is_some_and(|cap| self.evaluations - ev0 >= cap)
                || budget.wall_time.is_some_and(|cap| t0.elapsed() >= cap)
            {
                return Ok(());
            }
            self.step()?;
        }
    }

    /// One descent plus one evaluation batch.
    pub fn step(&mut self) -> Result<(), SearchError> {
        let it = self.iterations;
        self.iterations += 1;
        let mut rng = split(self.config.seed, &[STREAM_SELECT, self.stream, it]);
        let mut node = ROOT;
        let mut path = vec![ROOT];
        while !self.tree.node(node).is_leaf() {
            node = self.tree.lcb_select(node, self.config.gamma, &mut rng)?;
            path.push(node);
        }
        if !self.tree.is_terminal(node) && self.tree.node(node).visits > 0 {
            let kids = self.tree.expand(node)?;
            node = kids[rng.gen_range(0..kids.len())];
            path.push(node);
        }
        if let Some(log) = self.selections.as_mut() {
            log.push(path);
        }
        self.evaluate_node(node, &[STREAM_ROLLOUT, self.stream, it]);
        Ok(())
    }

    /// Evaluates `node`: one weighted evaluation for a terminal node, `r`
    /// random completions otherwise. `stream` prefixes the rollout generators.
    pub fn evaluate_node(&mut self, node: usize, stream: &[u64]) {
        let r = self.rollouts;
        let prefix = self.tree.path_assignment(node);
        let fleet_size = self.tree.fleet_size();
        if self.tree.is_terminal(node) {
            let a = Assignment(prefix.iter().map(|s| s.expect("terminal path fixes every task")).collect());
            let e = self.evaluator.evaluate_batch(std::slice::from_ref(&a));
            self.offer(&a, &e[0], self.evaluations + 1);
            self.evaluations += r as u64;
            self.tree.backpropagate(node, &vec![e[0].cost; r]);
            return;
        }
        let batch: Vec<Assignment> = (0..r as u64)
            .map(|j| {
                let mut path = stream.to_vec();
                path.push(j);
                rollout_assignment(&prefix, fleet_size, &mut split(self.config.seed, &path))
            })
            .collect();
        let evals = self.evaluator.evaluate_batch(&batch);
        let costs: Vec<f64> = evals.iter().map(|e| e.cost).collect();
        for (j, (a, e)) in batch.iter().zip(&evals).enumerate() {
            self.offer(a, e, self.evaluations + j as u64 + 1);
        }
        self.evaluations += r as u64;
        self.tree.backpropagate(node, &costs);
    }

    fn offer(&mut self, a: &Assignment, e: &Arc<Evaluation>, at: u64) {
        if !e.feasible || self.tree.incumbent().is_some_and(|inc| inc.cost <= e.cost) {
            return;
        }
        let secs = self.elapsed();
        let fleet = &self.evaluator.instance().fleet;
        self.trace.push(TraceRow {
            phase: self.phase,
            evaluations: at,
            wall_seconds: secs,
            incumbent_kj: e.cost,
            assignment: a.labels(fleet),
        });
        self.tree.set_incumbent(Incumbent {
            assignment: a.clone(),
            routes: e.routes.clone(),
            cost: e.cost,
            found_at_evaluation: at,
            found_at_seconds: secs,
        });
    }

    pub fn finish(self) -> SearchOutcome {
        let wall_seconds = self.elapsed();
        SearchOutcome {
            routing_calls: self.evaluator.routing_calls(),
            tree: self.tree,
            trace: self.trace,
            iterations: self.iterations,
            evaluations: self.evaluations,
            wall_seconds,
            selections: self.selections,
        }
    }
}

fn check_fit(tree: &SearchTree, instance: &Instance) -> Result<(), SearchError> {
    if tree.fleet_size() != instance.fleet.len() {
        return Err(SearchError::Topology(format!(
            "tree branches over {} robots, instance has {}",
            tree.fleet_size(),
            instance.fleet.len()
        )));
    }
    if tree.n_tasks() != instance.n_tasks() {
        return Err(SearchError::Topology(format!(
            "tree assigns {} tasks, instance has {}",
            tree.n_tasks(),
            instance.n_tasks()
        )));
    }
    Ok(())
}
