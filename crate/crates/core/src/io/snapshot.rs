//! Line-based tree snapshots.
//!
//! ```text
//! fleet-tree/1
//! instance <lineage hash>
//! fleet <robots>
//! task_order <id> <id> ...
//! jmax <kJ | ->
//! incumbent <kJ> <evaluation> <seconds> <robot index per task, comma separated>
//! route <robot> <legs>
//! leg <from> <to> <energy> <soc after> <recharged 0|1> <load>
//! nodes <count>
//! <id> <parent | -> <branch | -> <depth> <visits> <cost sum>
//! end
//! ```
//!
//! `incumbent` and its `route`/`leg` lines are omitted when there is none.
//! Floats are written in shortest round-trip form, so a load reproduces every
//! value bit for bit.

use crate::instance::Instance;
use crate::mcts::{Assignment, Incumbent, SearchError, SearchTree, TreeNode};
use crate::routing::{Leg, Route};
use std::fmt::Write as _;
use std::str::FromStr;
use thiserror::Error;

pub const TREE_FORMAT: &str = "fleet-tree/1";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SnapshotError {
    #[error("snapshot parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("unsupported snapshot version {found:?}, expected {TREE_FORMAT:?}")]
    Version { found: String },
    #[error("snapshot belongs to instance {found}, not {expected}")]
    InstanceMismatch { expected: String, found: String },
    #[error("snapshot describes an invalid tree: {0}")]
    Invalid(String),
}

/// A parsed snapshot: the tree plus the lineage hash it was saved against.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeSnapshot {
    pub instance_hash: String,
    pub tree: SearchTree,
}

impl TreeSnapshot {
    /// Refuses the snapshot unless it was saved for `instance` or an instance
    /// sharing its unperturbed ancestor.
    pub fn check_instance(&self, instance: &Instance) -> Result<(), SnapshotError> {
        let expected = instance.lineage_root();
        if expected != self.instance_hash {
            return Err(SnapshotError::InstanceMismatch {
                expected,
                found: self.instance_hash.clone(),
            });
        }
        Ok(())
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

pub fn save_tree(tree: &SearchTree, instance: &Instance) -> String {
    write_snapshot(tree, &instance.lineage_root())
}

pub fn write_snapshot(tree: &SearchTree, instance_hash: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{TREE_FORMAT}");
    let _ = writeln!(s, "instance {instance_hash}");
    let _ = writeln!(s, "fleet {}", tree.fleet_size());
    let order: Vec<String> = tree.task_order().iter().map(|t| t.to_string()).collect();
    let _ = writeln!(s, "task_order {}", order.join(" "));
    let _ = writeln!(s, "jmax {}", opt(tree.j_max()));
    if let Some(inc) = tree.incumbent() {
        let a: Vec<String> = inc.assignment.0.iter().map(|r| r.to_string()).collect();
        let _ = writeln!(
            s,
            "incumbent {} {} {} {}",
            inc.cost,
            inc.found_at_evaluation,
            inc.found_at_seconds,
            a.join(",")
        );
        for (r, route) in inc.routes.iter().enumerate() {
            let _ = writeln!(s, "route {r} {}", route.legs.len());
            for l in &route.legs {
                let _ = writeln!(
                    s,
                    "leg {} {} {} {} {} {}",
                    l.from,
                    l.to,
                    l.energy,
                    l.soc_after,
                    u8::from(l.recharged),
                    l.load
                );
            }
        }
    }
    let _ = writeln!(s, "nodes {}", tree.len());
    for (id, n) in tree.nodes().iter().enumerate() {
        let _ = writeln!(
            s,
            "{id} {} {} {} {} {}",
            opt(n.parent),
            opt(n.branch),
            n.depth,
            n.visits,
            n.cost_sum
        );
    }
    s.push_str("end\n");
    s
}

struct Lines<'t> {
    text: &'t str,
    pos: usize,
    line_start: usize,
}

impl<'t> Lines<'t> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, SnapshotError> {
        Err(SnapshotError::Parse {
            offset: self.line_start,
            message: message.into(),
        })
    }

    fn next_line(&mut self) -> Result<&'t str, SnapshotError> {
        if self.pos >= self.text.len() {
            self.line_start = self.pos;
            return self.err("unexpected end of file");
        }
        self.line_start = self.pos;
        let rest = &self.text[self.pos..];
        match rest.find('\n') {
            Some(i) => {
                self.pos += i + 1;
                Ok(&rest[..i])
            }
            None => {
                self.pos = self.text.len();
                Ok(rest)
            }
        }
    }

    fn peek_keyword(&self) -> Option<&'t str> {
        self.text[self.pos..].split_whitespace().next()
    }

    /// Next line, which must start with `key`; returns the remaining fields.
    fn keyed(&mut self, key: &str) -> Result<Vec<&'t str>, SnapshotError> {
        let line = self.next_line()?;
        let mut f = line.split_whitespace();
        if f.next() != Some(key) {
            return self.err(format!("expected `{key}` line, found {line:?}"));
        }
        Ok(f.collect())
    }

    fn num<T: FromStr>(&self, field: Option<&&str>, what: &str) -> Result<T, SnapshotError> {
        match field {
            Some(v) => v.parse().or_else(|_| self.err(format!("bad {what} {v:?}"))),
            None => self.err(format!("missing {what}")),
        }
    }

    fn opt_num<T: FromStr>(&self, field: Option<&&str>, what: &str) -> Result<Option<T>, SnapshotError> {
        match field {
            Some(&"-") => Ok(None),
            other => self.num(other, what).map(Some),
        }
    }
}

/// Parses a snapshot without checking which instance it belongs to.
pub fn read_snapshot(text: &str) -> Result<TreeSnapshot, SnapshotError> {
    let mut p = Lines {
        text,
        pos: 0,
        line_start: 0,
    };
    let version = p.next_line()?.trim();
    if version != TREE_FORMAT {
        return Err(SnapshotError::Version {
            found: version.to_string(),
        });
    }
    let f = p.keyed("instance")?;
    let instance_hash = match f.as_slice() {
        [h] => h.to_string(),
        _ => return p.err("expected one instance hash"),
    };
    let f = p.keyed("fleet")?;
    let fleet: usize = p.num(f.first(), "fleet size")?;
    let f = p.keyed("task_order")?;
    let task_order = f
        .iter()
        .map(|t| p.num(Some(t), "task id"))
        .collect::<Result<Vec<usize>, _>>()?;
    let f = p.keyed("jmax")?;
    let j_max: Option<f64> = p.opt_num(f.first(), "jmax")?;

    let mut incumbent = None;
    if p.peek_keyword() == Some("incumbent") {
        let f = p.keyed("incumbent")?;
        let cost: f64 = p.num(f.first(), "incumbent cost")?;
        let at: u64 = p.num(f.get(1), "evaluation count")?;
        let secs: f64 = p.num(f.get(2), "seconds")?;
        let robots = match f.get(3) {
            Some(list) => list
                .split(',')
                .map(|r| p.num(Some(&r), "robot index"))
                .collect::<Result<Vec<usize>, _>>()?,
            None => Vec::new(),
        };
        let mut routes = Vec::with_capacity(fleet);
        while p.peek_keyword() == Some("route") {
            let f = p.keyed("route")?;
            let r: usize = p.num(f.first(), "route robot")?;
            if r != routes.len() {
                return p.err(format!("route {r} out of order"));
            }
            let count: usize = p.num(f.get(1), "leg count")?;
            let mut legs = Vec::with_capacity(count);
            for _ in 0..count {
                let f = p.keyed("leg")?;
                legs.push(Leg {
                    from: p.num(f.first(), "leg start")?,
                    to: p.num(f.get(1), "leg end")?,
                    energy: p.num(f.get(2), "leg energy")?,
                    soc_after: p.num(f.get(3), "state of charge")?,
                    recharged: p.num::<u8>(f.get(4), "recharge flag")? == 1,
                    load: p.num(f.get(5), "load")?,
                });
            }
            routes.push(if legs.is_empty() { Route::empty() } else { Route::from_legs(legs) });
        }
        incumbent = Some(Incumbent {
            assignment: Assignment(robots),
            routes,
            cost,
            found_at_evaluation: at,
            found_at_seconds: secs,
        });
    }

    let f = p.keyed("nodes")?;
    let count: usize = p.num(f.first(), "node count")?;
    let mut nodes: Vec<TreeNode> = Vec::with_capacity(count);
    for id in 0..count {
        let line = p.next_line()?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 6 {
            return p.err(format!("node row needs 6 fields, found {}", f.len()));
        }
        let row_id: usize = p.num(f.first(), "node id")?;
        if row_id != id {
            return p.err(format!("node {row_id} out of order, expected {id}"));
        }
        let parent: Option<usize> = p.opt_num(f.get(1), "parent")?;
        if parent.is_some_and(|q| q >= id) {
            return p.err("parent must precede its child");
        }
        nodes.push(TreeNode {
            parent,
            branch: p.opt_num(f.get(2), "branch")?,
            depth: p.num(f.get(3), "depth")?,
            children: Vec::new(),
            visits: p.num(f.get(4), "visits")?,
            cost_sum: p.num(f.get(5), "cost sum")?,
        });
    }
    if p.next_line()?.trim() != "end" {
        return p.err("expected `end`");
    }

    for id in 0..nodes.len() {
        if let (Some(parent), Some(branch)) = (nodes[id].parent, nodes[id].branch) {
            let kids = &mut nodes[parent].children;
            if kids.is_empty() {
                kids.resize(fleet, usize::MAX);
            }
            match kids.get_mut(branch) {
                Some(slot) if *slot == usize::MAX => *slot = id,
                _ => return Err(SnapshotError::Invalid(format!("node {id}: bad branch {branch}"))),
            }
        }
    }
    if nodes.iter().any(|n| n.children.contains(&usize::MAX)) {
        return Err(SnapshotError::Invalid("some node has a partial child set".into()));
    }
    let tree = SearchTree::from_parts(nodes, task_order, fleet, j_max, incumbent).map_err(|e| match e {
        SearchError::Contract(m) | SearchError::Config(m) | SearchError::Topology(m) => SnapshotError::Invalid(m),
    })?;
    Ok(TreeSnapshot { instance_hash, tree })
}

/// Parses a snapshot and checks it against `instance`.
pub fn load_tree(text: &str, instance: &Instance) -> Result<SearchTree, SnapshotError> {
    let snap = read_snapshot(text)?;
    snap.check_instance(instance)?;
    if snap.tree.fleet_size() != instance.fleet.len() || snap.tree.n_tasks() != instance.n_tasks() {
        return Err(SnapshotError::Invalid("tree shape does not fit the instance".into()));
    }
    Ok(snap.tree)
}
