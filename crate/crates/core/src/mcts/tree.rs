use super::{Incumbent, SearchError};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// One task-assignment decision. The root (depth 0) has assigned nothing; a
/// node at depth `d` fixes robots for the first `d` tasks of the task order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub parent: Option<usize>,
    pub depth: usize,
    /// Robot index chosen for task `task_order[depth - 1]`.
    pub branch: Option<usize>,
    /// Empty, or one child per robot with `children[r]` the branch for robot `r`.
    pub children: Vec<usize>,
    pub visits: u64,
    pub cost_sum: f64,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn average_cost(&self) -> Option<f64> {
        (self.visits > 0).then(|| self.cost_sum / self.visits as f64)
    }
}

/// Arena-backed assignment tree. Node ids are arena indices; the root is 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchTree {
    pub(crate) nodes: Vec<TreeNode>,
    pub(crate) task_order: Vec<usize>,
    pub(crate) fleet_size: usize,
    pub(crate) j_max: Option<f64>,
    pub(crate) incumbent: Option<Incumbent>,
}

pub const ROOT: usize = 0;

impl SearchTree {
    /// Root-only tree. `task_order` lists 1-based task ids, assigned in that order.
    pub fn new(task_order: Vec<usize>, fleet_size: usize) -> Self {
        Self {
            nodes: vec![TreeNode {
                parent: None,
                depth: 0,
                branch: None,
                children: Vec::new(),
                visits: 0,
                cost_sum: 0.0,
            }],
            task_order,
            fleet_size,
            j_max: None,
            incumbent: None,
        }
    }

    /// Rebuilds a tree from stored parts, checking structural consistency.
    pub fn from_parts(
        nodes: Vec<TreeNode>,
        task_order: Vec<usize>,
        fleet_size: usize,
        j_max: Option<f64>,
        incumbent: Option<Incumbent>,
    ) -> Result<Self, SearchError> {
        let tree = Self {
            nodes,
            task_order,
            fleet_size,
            j_max,
            incumbent,
        };
        tree.check_structure().map_err(SearchError::Contract)?;
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn task_order(&self) -> &[usize] {
        &self.task_order
    }

    pub fn fleet_size(&self) -> usize {
        self.fleet_size
    }

    pub fn n_tasks(&self) -> usize {
        self.task_order.len()
    }

    pub fn j_max(&self) -> Option<f64> {
        self.j_max
    }

    pub fn incumbent(&self) -> Option<&Incumbent> {
        self.incumbent.as_ref()
    }

    pub fn is_terminal(&self, id: usize) -> bool {
        self.nodes[id].depth == self.task_order.len()
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.is_leaf())
            .map(|(i, _)| i)
    }

    /// Robot per task (indexed by task id - 1) fixed on the path to `id`.
    pub fn path_assignment(&self, id: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; self.task_order.len()];
        let mut cur = id;
        while let Some(parent) = self.nodes[cur].parent {
            let node = &self.nodes[cur];
            let task = self.task_order[node.depth - 1];
            out[task - 1] = node.branch;
            cur = parent;
        }
        out
    }

    /// Lower-confidence-bound child choice:
    ///
    /// `argmin J(c) / (N(c) J_max) - gamma * sqrt(ln N(s) / N(c))`.
    ///
    /// Unvisited children go first, picked uniformly at random. Exact score
    /// ties resolve to the lowest robot index.
    pub fn lcb_select<R: Rng + ?Sized>(&self, id: usize, gamma: f64, rng: &mut R) -> Result<usize, SearchError> {
        let node = &self.nodes[id];
        if node.children.is_empty() {
            return Err(SearchError::Contract(format!("selection on childless node {id}")));
        }
        let unvisited: Vec<usize> = node
            .children
            .iter()
            .copied()
            .filter(|&c| self.nodes[c].visits == 0)
            .collect();
        if !unvisited.is_empty() {
            return Ok(unvisited[rng.gen_range(0..unvisited.len())]);
        }
        let ln_parent = (node.visits.max(1) as f64).ln();
        let norm = self.j_max.filter(|&j| j > 0.0);
        let mut best = node.children[0];
        let mut best_score = f64::INFINITY;
        for &c in &node.children {
            let s = lcb_score(&self.nodes[c], ln_parent, norm, gamma);
            if s < best_score {
                best_score = s;
                best = c;
            }
        }
        Ok(best)
    }

    /// Adds one child per robot under a childless non-terminal node.
    pub fn expand(&mut self, id: usize) -> Result<Vec<usize>, SearchError> {
        if self.is_terminal(id) {
            return Err(SearchError::Contract(format!("cannot expand terminal node {id}")));
        }
        if !self.nodes[id].children.is_empty() {
            return Err(SearchError::Contract(format!("node {id} is already expanded")));
        }
        let depth = self.nodes[id].depth + 1;
        let first = self.nodes.len();
        for r in 0..self.fleet_size {
            self.nodes.push(TreeNode {
                parent: Some(id),
                depth,
                branch: Some(r),
                children: Vec::new(),
                visits: 0,
                cost_sum: 0.0,
            });
        }
        let kids: Vec<usize> = (first..first + self.fleet_size).collect();
        self.nodes[id].children = kids.clone();
        Ok(kids)
    }

    /// Adds `costs.len()` visits and `sum(costs)` to every node from `id` up to
    /// the root, and raises `J_max` to the largest cost.
    pub fn backpropagate(&mut self, id: usize, costs: &[f64]) {
        if costs.is_empty() {
            return;
        }
        let count = costs.len() as u64;
        let total: f64 = costs.iter().sum();
        let mut cur = Some(id);
        while let Some(c) = cur {
            let node = &mut self.nodes[c];
            node.visits += count;
            node.cost_sum += total;
            cur = node.parent;
        }
        let hi = costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.j_max = Some(self.j_max.map_or(hi, |j| j.max(hi)));
    }

    pub(crate) fn set_incumbent(&mut self, inc: Incumbent) {
        self.incumbent = Some(inc);
    }

    /// Same nodes, branches and task order; every statistic zeroed, `J_max`
    /// unset and no incumbent.
    pub fn zeroed_clone(&self) -> Self {
        Self {
            nodes: self
                .nodes
                .iter()
                .map(|n| TreeNode {
                    visits: 0,
                    cost_sum: 0.0,
                    ..n.clone()
                })
                .collect(),
            task_order: self.task_order.clone(),
            fleet_size: self.fleet_size,
            j_max: None,
            incumbent: None,
        }
    }

    fn check_structure(&self) -> Result<(), String> {
        if self.nodes.is_empty() || self.nodes[ROOT].parent.is_some() || self.nodes[ROOT].depth != 0 {
            return Err("missing or malformed root".into());
        }
        let mut order = self.task_order.clone();
        order.sort_unstable();
        if order != (1..=self.task_order.len()).collect::<Vec<_>>() {
            return Err("task order is not a permutation of task ids".into());
        }
        for (id, n) in self.nodes.iter().enumerate() {
            if n.depth > self.task_order.len() {
                return Err(format!("node {id} deeper than the task count"));
            }
            if !n.children.is_empty() && n.children.len() != self.fleet_size {
                return Err(format!("node {id} has a partial child set"));
            }
            for (r, &c) in n.children.iter().enumerate() {
                let child = self.nodes.get(c).ok_or_else(|| format!("node {id} has dangling child {c}"))?;
                if child.parent != Some(id) || child.depth != n.depth + 1 || child.branch != Some(r) {
                    return Err(format!("edge {id} -> {c} is inconsistent"));
                }
            }
            if id != ROOT {
                let p = n.parent.ok_or_else(|| format!("node {id} has no parent"))?;
                if self.nodes.get(p).map(|pn| pn.children.get(n.branch.unwrap_or(usize::MAX)) != Some(&id)).unwrap_or(true) {
                    return Err(format!("node {id} is not listed under its parent {p}"));
                }
            }
        }
        Ok(())
    }

    /// Structural checks plus statistic aggregation: a node carries at least
    /// the visits and cost of its children combined.
    pub fn check_invariants(&self) -> Result<(), String> {
        self.check_structure()?;
        for (id, n) in self.nodes.iter().enumerate() {
            let kids_n: u64 = n.children.iter().map(|&c| self.nodes[c].visits).sum();
            let kids_j: f64 = n.children.iter().map(|&c| self.nodes[c].cost_sum).sum();
            if kids_n > n.visits {
                return Err(format!("node {id}: children visits {kids_n} exceed {}", n.visits));
            }
            if kids_j > n.cost_sum * (1.0 + 1e-12) + 1e-9 {
                return Err(format!("node {id}: children cost {kids_j} exceeds {}", n.cost_sum));
            }
            if n.cost_sum < 0.0 {
                return Err(format!("node {id}: negative cost sum"));
            }
        }
        Ok(())
    }
}

pub(crate) fn lcb_score(child: &TreeNode, ln_parent: f64, j_max: Option<f64>, gamma: f64) -> f64 {
    let n = child.visits as f64;
    let exploit = match j_max {
        Some(j) => child.cost_sum / (n * j),
        None => 0.0,
    };
    exploit - gamma * (ln_parent / n).sqrt()
}
