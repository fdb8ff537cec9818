//! Warm restart after a perturbation.
//!
//! The nominal tree's leaves are ranked by their nominal average cost. A
//! zeroed copy of the topology is built, the cheapest fraction `k` of leaves is
//! re-evaluated on the perturbed instance in that order, and the search then
//! resumes on the copy.

use crate::instance::Instance;
use crate::mcts::{Engine, Phase, SearchBudget, SearchError, SearchOutcome, SearchTree, SolverConfig};
use crate::rng::STREAM_REEVAL;
use std::cmp::Ordering;
use std::time::Duration;

/// Leaves of a tree, cheapest nominal average first. Leaves never evaluated
/// (`None`) come last by node id.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafRanking {
    pub entries: Vec<(usize, Option<f64>)>,
}

impl LeafRanking {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn node_ids(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.0).collect()
    }
}

pub fn rank_leaves(tree: &SearchTree) -> Result<LeafRanking, SearchError> {
    let mut entries: Vec<(usize, Option<f64>)> = tree.leaves().map(|id| (id, tree.node(id).average_cost())).collect();
    if !entries.iter().any(|e| e.1.is_some()) {
        return Err(SearchError::Contract("tree has no evaluated leaf to rank".into()));
    }
    entries.sort_by(|a, b| match (a.1, b.1) {
        (Some(x), Some(y)) => x.total_cmp(&y).then(a.0.cmp(&b.0)),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.0.cmp(&b.0),
    });
    Ok(LeafRanking { entries })
}

/// Same topology with every statistic reset. The input is not modified.
pub fn clone_topology(tree: &SearchTree) -> SearchTree {
    tree.zeroed_clone()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarmConfig {
    /// Fraction of ranked leaves to re-evaluate, in `(0, 1]`.
    pub k: f64,
    /// Rollouts per re-evaluated leaf; `None` uses the solver's setting.
    pub rollouts: Option<usize>,
    /// Budget for the resumed search after re-evaluation.
    pub resume: SearchBudget,
    /// Charge the re-evaluation work (leaves as iterations, evaluations and
    /// wall time) against `resume`, so `resume` bounds the whole warm start.
    pub shared_budget: bool,
}

impl Default for WarmConfig {
    fn default() -> Self {
        Self {
            k: 0.05,
            rollouts: None,
            resume: SearchBudget::iterations(1000),
            shared_budget: false,
        }
    }
}

impl WarmConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if !(self.k > 0.0 && self.k <= 1.0) {
            return Err(SearchError::Config(format!("k must lie in (0, 1], got {}", self.k)));
        }
        if self.rollouts == Some(0) {
            return Err(SearchError::Config("rollouts must be >= 1".into()));
        }
        if !self.resume.is_bounded() {
            return Err(SearchError::Config("resume budget needs a cap".into()));
        }
        Ok(())
    }

    /// `ceil(k * leaves)`, at least one and at most `leaves`.
    pub fn leaves_to_reevaluate(&self, leaves: usize) -> usize {
        ((self.k * leaves as f64).ceil() as usize).clamp(1, leaves.max(1))
    }
}

#[derive(Debug, Clone)]
pub struct WarmOutcome {
    /// Tree, trace and counters covering both phases.
    pub search: SearchOutcome,
    /// Leaves re-evaluated, in order.
    pub reevaluated: Vec<usize>,
    pub reeval_evaluations: u64,
    pub resume_evaluations: u64,
}

/// Re-evaluates the first `ceil(k * |ranking|)` leaves of `ranking` on `clone`
/// under `perturbed`, in ranking order.
pub fn reevaluate_leaves(
    clone: SearchTree,
    ranking: &LeafRanking,
    k: f64,
    perturbed: &Instance,
    config: &SolverConfig,
) -> Result<WarmOutcome, SearchError> {
    let wconfig = WarmConfig {
        k,
        resume: SearchBudget::iterations(0),
        ..WarmConfig::default()
    };
    run_warm(clone, ranking, perturbed, &wconfig, config)
}

/// Rank, clone, re-evaluate, then resume searching under `wconfig.resume`.
/// The returned trace holds the `reeval` rows followed by the `resume` rows.
pub fn warm_solve(
    nominal: &SearchTree,
    perturbed: &Instance,
    wconfig: &WarmConfig,
    config: &SolverConfig,
) -> Result<WarmOutcome, SearchError> {
    if nominal.fleet_size() != perturbed.fleet.len() {
        return Err(SearchError::Topology(format!(
            "nominal tree branches over {} robots, perturbed instance has {}",
            nominal.fleet_size(),
            perturbed.fleet.len()
        )));
    }
    let ranking = rank_leaves(nominal)?;
    run_warm(clone_topology(nominal), &ranking, perturbed, wconfig, config)
}

fn run_warm(
    clone: SearchTree,
    ranking: &LeafRanking,
    perturbed: &Instance,
    wconfig: &WarmConfig,
    config: &SolverConfig,
) -> Result<WarmOutcome, SearchError> {
    config.validate()?;
    wconfig.validate()?;
    if ranking.entries.iter().any(|&(id, _)| id >= clone.len() || !clone.node(id).is_leaf()) {
        return Err(SearchError::Topology("ranking does not match the tree".into()));
    }
    let mut engine = Engine::new(clone, perturbed, config, 0, Phase::Reeval)?;
    engine.rollouts = wconfig.rollouts.unwrap_or(config.rollouts);
    let count = wconfig.leaves_to_reevaluate(ranking.len());
    let reevaluated: Vec<usize> = ranking.entries.iter().take(count).map(|e| e.0).collect();
    for (rank, &leaf) in reevaluated.iter().enumerate() {
        engine.evaluate_node(leaf, &[STREAM_REEVAL, rank as u64]);
    }
    let reeval_evaluations = engine.evaluations;

    engine.phase = Phase::Resume;
    engine.rollouts = config.rollouts;
    engine.set_stream(1);
    let resume = if wconfig.shared_budget {
        let r = wconfig.resume;
        SearchBudget {
            iterations: r.iterations.map(|c| c.saturating_sub(reevaluated.len() as u64)),
            evaluations: r.evaluations.map(|c| c.saturating_sub(reeval_evaluations)),
            wall_time: r.wall_time.map(|c| c.saturating_sub(Duration::from_secs_f64(engine.elapsed()))),
        }
    } else {
        wconfig.resume
    };
    engine.run(&resume)?;
    let resume_evaluations = engine.evaluations - reeval_evaluations;
    Ok(WarmOutcome {
        search: engine.finish(),
        reevaluated,
        reeval_evaluations,
        resume_evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcts::ROOT;

    fn tree_with_leaf_costs(costs: &[f64]) -> SearchTree {
        let mut t = SearchTree::new(vec![1], costs.len());
        let kids = t.expand(ROOT).unwrap();
        for (&c, &id) in costs.iter().zip(&kids) {
            t.backpropagate(id, &[c]);
        }
        t
    }

    #[test]
    fn leaves_sort_by_average() {
        let t = tree_with_leaf_costs(&[9.0, 3.0, 5.0]);
        let r = rank_leaves(&t).unwrap();
        let avgs: Vec<f64> = r.entries.iter().map(|e| e.1.unwrap()).collect();
        assert_eq!(avgs, vec![3.0, 5.0, 9.0]);
    }

    #[test]
    fn ties_go_to_lower_id_and_unvisited_last() {
        let mut t = SearchTree::new(vec![1], 3);
        let kids = t.expand(ROOT).unwrap();
        t.backpropagate(kids[2], &[4.0]);
        t.backpropagate(kids[1], &[4.0]);
        let r = rank_leaves(&t).unwrap();
        assert_eq!(r.node_ids(), vec![kids[1], kids[2], kids[0]]);
        assert_eq!(r.entries[2].1, None);
    }

    #[test]
    fn root_only_tree_ranks_itself() {
        let mut t = SearchTree::new(vec![1, 2], 2);
        t.backpropagate(ROOT, &[7.0]);
        assert_eq!(rank_leaves(&t).unwrap().node_ids(), vec![ROOT]);
        assert!(rank_leaves(&SearchTree::new(vec![1], 2)).is_err());
    }

    #[test]
    fn percentile_count_uses_ceiling() {
        let w = WarmConfig::default();
        assert_eq!(w.leaves_to_reevaluate(200), 10);
        assert_eq!(w.leaves_to_reevaluate(3), 1);
        assert_eq!(WarmConfig { k: 1.0, ..w.clone() }.leaves_to_reevaluate(7), 7);
        assert_eq!(WarmConfig { k: 0.001, ..w }.leaves_to_reevaluate(7), 1);
    }

    #[test]
    fn clone_leaves_nominal_alone() {
        let t = tree_with_leaf_costs(&[1.0, 2.0]);
        let before = t.clone();
        let c = clone_topology(&t);
        assert_eq!(t, before);
        assert_eq!(c.len(), t.len());
        assert_eq!(c.nodes().iter().map(|n| n.visits).sum::<u64>(), 0);
    }
}
