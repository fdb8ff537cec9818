//! Problem data: locations, paired tasks, typed robots and per-type energy
//! matrices.
//!
//! Node numbering follows the usual pickup-and-delivery layout. For `n` tasks,
//! node `0` is the depot at the start of every tour, nodes `1..=n` are pickups,
//! `n+1..=2n` the paired deliveries and `2n+1` the depot again at the end of a
//! tour. The depot is also the only charger.

mod perturb;
mod tsplib;

pub use perturb::{apply_perturbation, Perturbation, SpatialOptions};
pub use tsplib::{load_tsplib, Point, PointCloud};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use thiserror::Error;

/// Version tag written into every instance file.
pub const INSTANCE_FORMAT: &str = "fleet-instance/1";

#[derive(Debug, Error, PartialEq)]
pub enum InstanceError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid instance: {0}")]
    Validation(String),
    #[error("unknown robot id {0}")]
    UnknownRobot(u32),
    #[error("unknown robot type {0}")]
    UnknownType(usize),
    #[error("malformed instance file: {0}")]
    Format(String),
}

fn invalid(msg: impl Into<String>) -> InstanceError {
    InstanceError::Validation(msg.into())
}

/// Battery size in kJ and payload capacity in commodity units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotType {
    pub battery_kj: f64,
    pub payload_capacity: f64,
}

impl RobotType {
    pub fn new(battery_kj: f64, payload_capacity: f64) -> Self {
        Self {
            battery_kj,
            payload_capacity,
        }
    }

    fn validate(&self) -> Result<(), InstanceError> {
        if !(self.battery_kj > 0.0 && self.battery_kj.is_finite()) {
            return Err(invalid(format!("battery must be > 0, got {}", self.battery_kj)));
        }
        if !(self.payload_capacity > 0.0 && self.payload_capacity.is_finite()) {
            return Err(invalid(format!(
                "payload capacity must be > 0, got {}",
                self.payload_capacity
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Robot {
    pub id: u32,
    pub type_id: usize,
}

/// Robots are addressed by their position in `robots` everywhere inside the
/// solver; `Robot::id` is the user-facing label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fleet {
    pub types: Vec<RobotType>,
    pub robots: Vec<Robot>,
}

impl Fleet {
    /// `count` robots of one type, labelled `1..=count`.
    pub fn homogeneous(count: usize, robot_type: RobotType) -> Self {
        Self {
            types: vec![robot_type],
            robots: (1..=count as u32).map(|id| Robot { id, type_id: 0 }).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.robots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.robots.is_empty()
    }

    pub fn index_of(&self, id: u32) -> Result<usize, InstanceError> {
        self.robots
            .iter()
            .position(|r| r.id == id)
            .ok_or(InstanceError::UnknownRobot(id))
    }

    pub fn robot_type(&self, robot: usize) -> &RobotType {
        &self.types[self.robots[robot].type_id]
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        for t in &self.types {
            t.validate()?;
        }
        let mut ids: Vec<u32> = self.robots.iter().map(|r| r.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("duplicate robot id"));
        }
        if let Some(r) = self.robots.iter().find(|r| r.type_id >= self.types.len()) {
            return Err(InstanceError::UnknownType(r.type_id));
        }
        Ok(())
    }
}

/// A paired pickup/delivery job. `id` is 1-based; `pickup == id` and
/// `delivery == id + n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: usize,
    pub pickup: usize,
    pub delivery: usize,
    pub mass: f64,
}

/// Square matrix of edge energies as a fraction of one full battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyMatrix {
    dim: usize,
    rows: Vec<Vec<f64>>,
}

impl EnergyMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, InstanceError> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(invalid("energy matrix must be square"));
        }
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if i != j && !(v >= 0.0 && v.is_finite()) {
                    return Err(invalid(format!("energy entry ({i},{j}) = {v} must be >= 0")));
                }
            }
        }
        Ok(Self { dim, rows })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            rows: self
                .rows
                .iter()
                .map(|r| r.iter().map(|v| v * factor).collect())
                .collect(),
        }
    }
}

/// `δe_ij = d(i, j) / B`: one distance unit costs one kJ.
pub fn energy_matrix(coords: &[[f64; 2]], robot_type: &RobotType) -> EnergyMatrix {
    let b = robot_type.battery_kj;
    let rows = coords
        .iter()
        .map(|a| {
            coords
                .iter()
                .map(|c| (a[0] - c[0]).hypot(a[1] - c[1]) / b)
                .collect()
        })
        .collect();
    EnergyMatrix {
        dim: coords.len(),
        rows,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    /// Hash of the point cloud the instance was derived from.
    pub source_hash: String,
    /// Fingerprint of the unperturbed instance this one descends from; `None`
    /// for an unperturbed instance.
    pub origin: Option<String>,
    /// Perturbations applied since the origin, oldest first.
    pub perturbations: Vec<Perturbation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    /// Coordinates of nodes `0..=2n+1`.
    pub coords: Vec<[f64; 2]>,
    /// Original point-cloud id of every node.
    pub source_ids: Vec<u32>,
    pub tasks: Vec<Task>,
    pub fleet: Fleet,
    /// One matrix per robot type, indexed like `fleet.types`.
    pub energy: Vec<EnergyMatrix>,
    pub meta: InstanceMeta,
}

/// The robot-specific slice of an instance that routing needs.
#[derive(Debug, Clone, Copy)]
pub struct RobotView<'a> {
    pub battery_kj: f64,
    pub payload_capacity: f64,
    pub energy: &'a EnergyMatrix,
}

impl Instance {
    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn end_depot(&self) -> usize {
        2 * self.tasks.len() + 1
    }

    pub fn robot_view(&self, robot: usize) -> RobotView<'_> {
        let r = &self.fleet.robots[robot];
        let t = &self.fleet.types[r.type_id];
        RobotView {
            battery_kj: t.battery_kj,
            payload_capacity: t.payload_capacity,
            energy: &self.energy[r.type_id],
        }
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        self.fleet.validate()?;
        let n = self.tasks.len();
        let nodes = 2 * n + 2;
        if self.coords.len() != nodes || self.source_ids.len() != nodes {
            return Err(invalid(format!("expected {nodes} nodes for {n} tasks")));
        }
        for (k, t) in self.tasks.iter().enumerate() {
            if t.id != k + 1 || t.pickup != k + 1 || t.delivery != k + 1 + n {
                return Err(invalid(format!("task {} is not paired as (i, i+n)", t.id)));
            }
            if !(t.mass > 0.0 && t.mass.is_finite()) {
                return Err(invalid(format!("task {} mass must be > 0", t.id)));
            }
        }
        if self.energy.len() != self.fleet.types.len() {
            return Err(invalid("one energy matrix per robot type required"));
        }
        if self.energy.iter().any(|m| m.dim() != nodes) {
            return Err(invalid(format!("energy matrices must be {nodes}x{nodes}")));
        }
        Ok(())
    }

    /// Canonical, versioned JSON text. Serializing a parsed file reproduces it
    /// byte for byte.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct File<'a> {
            format: &'a str,
            #[serde(flatten)]
            instance: &'a Instance,
        }
        let mut s = serde_json::to_string_pretty(&File {
            format: INSTANCE_FORMAT,
            instance: self,
        })
        .expect("instance serialization cannot fail");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, InstanceError> {
        #[derive(Deserialize)]
        struct File {
            format: String,
            #[serde(flatten)]
            instance: Instance,
        }
        let file: File =
            serde_json::from_str(text).map_err(|e| InstanceError::Format(e.to_string()))?;
        if file.format != INSTANCE_FORMAT {
            return Err(InstanceError::Format(format!(
                "unsupported format {:?}, expected {INSTANCE_FORMAT:?}",
                file.format
            )));
        }
        file.instance.validate()?;
        Ok(file.instance)
    }

    /// SHA-256 of the canonical JSON text.
    pub fn fingerprint(&self) -> String {
        sha256_hex(self.to_json().as_bytes())
    }

    /// Fingerprint of the unperturbed ancestor (or of `self` when unperturbed).
    /// Tree snapshots are keyed on this.
    pub fn lineage_root(&self) -> String {
        self.meta.origin.clone().unwrap_or_else(|| self.fingerprint())
    }

    /// Coordinates and batteries multiplied by `factor`: every energy in kJ
    /// scales by `factor` while the normalized matrices stay put.
    pub fn scaled(&self, factor: f64) -> Result<Self, InstanceError> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(invalid("scale factor must be > 0"));
        }
        let mut out = self.clone();
        for c in &mut out.coords {
            c[0] *= factor;
            c[1] *= factor;
        }
        for t in &mut out.fleet.types {
            t.battery_kj *= factor;
        }
        out.energy = out
            .fleet
            .types
            .iter()
            .map(|t| energy_matrix(&out.coords, t))
            .collect();
        Ok(out)
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(s, "{b:02x}");
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeriveOptions {
    /// Mass of every task unless `masses` overrides it.
    pub task_mass: f64,
    /// Per-task masses in task-id order.
    pub masses: Option<Vec<f64>>,
}

impl Default for DeriveOptions {
    fn default() -> Self {
        Self {
            task_mass: 1.0,
            masses: None,
        }
    }
}

/// Builds a benchmark instance from a point cloud:
///
/// 1. take the centroid of all points,
/// 2. rank points by distance to it (ties by ascending id),
/// 3. the closest point becomes the depot,
/// 4. with `N` points ranked `1..=N`, pair ranks `(2, N), (3, N-1), ...` into
///    `(N-1)/2` pickup/delivery tasks.
pub fn derive_mht_instance(
    cloud: &PointCloud,
    fleet: Fleet,
    options: &DeriveOptions,
) -> Result<Instance, InstanceError> {
    let count = cloud.points.len();
    if count < 3 {
        return Err(invalid(format!("need at least 3 points, got {count}")));
    }
    if count.is_multiple_of(2) {
        return Err(invalid(format!(
            "point count must be odd (depot + paired tasks), got {count}"
        )));
    }
    cloud.validate()?;
    fleet.validate()?;
    if fleet.is_empty() {
        return Err(invalid("fleet is empty"));
    }

    let inv = 1.0 / count as f64;
    let cx = cloud.points.iter().map(|p| p.x).sum::<f64>() * inv;
    let cy = cloud.points.iter().map(|p| p.y).sum::<f64>() * inv;
    let mut ranked: Vec<(f64, &Point)> = cloud
        .points
        .iter()
        .map(|p| ((p.x - cx).hypot(p.y - cy), p))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)));
    let ranked: Vec<&Point> = ranked.into_iter().map(|(_, p)| p).collect();

    let n = (count - 1) / 2;
    let masses = match &options.masses {
        Some(m) if m.len() != n => {
            return Err(invalid(format!("{} masses given for {n} tasks", m.len())))
        }
        Some(m) => m.clone(),
        None => vec![options.task_mass; n],
    };

    // rank r (1-based) lives at ranked[r - 1]
    let depot = ranked[0];
    let mut nodes: Vec<&Point> = Vec::with_capacity(2 * n + 2);
    nodes.push(depot);
    nodes.extend(&ranked[1..=n]);
    for i in 1..=n {
        nodes.push(ranked[count - i]);
    }
    nodes.push(depot);

    let coords: Vec<[f64; 2]> = nodes.iter().map(|p| [p.x, p.y]).collect();
    let source_ids = nodes.iter().map(|p| p.id).collect();
    let tasks = (1..=n)
        .map(|i| Task {
            id: i,
            pickup: i,
            delivery: i + n,
            mass: masses[i - 1],
        })
        .collect();
    let energy = fleet
        .types
        .iter()
        .map(|t| energy_matrix(&coords, t))
        .collect();
    let instance = Instance {
        coords,
        source_ids,
        tasks,
        fleet,
        energy,
        meta: InstanceMeta {
            source_hash: cloud.hash(),
            origin: None,
            perturbations: Vec::new(),
        },
    };
    instance.validate()?;
    Ok(instance)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(points: &[(u32, f64, f64)]) -> PointCloud {
        PointCloud {
            name: None,
            points: points
                .iter()
                .map(|&(id, x, y)| Point { id, x, y })
                .collect(),
        }
    }

    fn fleet2() -> Fleet {
        Fleet::homogeneous(2, RobotType::new(20.0, 10.0))
    }

    #[test]
    fn energy_matrix_is_distance_over_battery() {
        let coords = [[0.0, 0.0], [6.0, 8.0], [6.0, 8.0]];
        let m = energy_matrix(&coords, &RobotType::new(20.0, 1.0));
        assert_eq!(m.get(0, 1), 0.5);
        assert_eq!(m.get(1, 0), 0.5);
        assert_eq!(m.get(1, 2), 0.0);
        let m16 = energy_matrix(&[[0.0, 0.0], [20.0, 0.0]], &RobotType::new(16.0, 1.0));
        assert_eq!(m16.get(0, 1), 1.25);
    }

    #[test]
    fn doubling_battery_halves_entries() {
        let coords = [[1.5, 2.0], [7.25, -3.0], [0.1, 9.9]];
        let a = energy_matrix(&coords, &RobotType::new(13.0, 1.0));
        let b = energy_matrix(&coords, &RobotType::new(26.0, 1.0));
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(a.get(i, j) / 2.0, b.get(i, j));
            }
        }
    }

    #[test]
    fn five_points_give_two_tasks() {
        let c = cloud(&[(1, 0.0, 0.0), (2, 10.0, 0.0), (3, 0.0, 10.0), (4, -10.0, 1.0), (5, 1.0, -12.0)]);
        let inst = derive_mht_instance(&c, fleet2(), &DeriveOptions::default()).unwrap();
        assert_eq!(inst.n_tasks(), 2);
        assert_eq!(inst.coords.len(), 6);
        // centroid (0.2, -0.2): ranks 1,2,3,4,5 -> ids 1,2,3,4,5 by distance
        // pairs (2<5), (3<4)
        assert_eq!(inst.source_ids, vec![1, 2, 3, 5, 4, 1]);
        assert_eq!(inst.tasks[0].pickup, 1);
        assert_eq!(inst.tasks[0].delivery, 3);
        assert_eq!(inst.coords[0], inst.coords[5]);
    }

    #[test]
    fn ties_break_by_ascending_id() {
        // ids 3 and 2 are both at distance 5 from the centroid (0,0)
        let c = cloud(&[(1, 0.0, 0.0), (3, 5.0, 0.0), (2, -5.0, 0.0)]);
        let inst = derive_mht_instance(&c, fleet2(), &DeriveOptions::default()).unwrap();
        assert_eq!(inst.source_ids, vec![1, 2, 3, 1]);
    }

    #[test]
    fn even_point_count_rejected() {
        let c = cloud(&[(1, 0.0, 0.0), (2, 1.0, 0.0), (3, 0.0, 1.0), (4, 1.0, 1.0)]);
        assert!(matches!(
            derive_mht_instance(&c, fleet2(), &DeriveOptions::default()),
            Err(InstanceError::Validation(_))
        ));
    }

    #[test]
    fn json_round_trip_is_byte_stable() {
        let c = cloud(&[(1, 0.5, 0.0), (2, 10.0, 0.3), (3, 0.0, 10.7), (4, -10.0, 1.0), (5, 1.0, -12.0)]);
        let inst = derive_mht_instance(&c, fleet2(), &DeriveOptions::default()).unwrap();
        let text = inst.to_json();
        let back = Instance::from_json(&text).unwrap();
        assert_eq!(back, inst);
        assert_eq!(back.to_json(), text);
        assert_eq!(back.fingerprint(), inst.fingerprint());
    }

    #[test]
    fn wrong_format_tag_rejected() {
        let c = cloud(&[(1, 0.0, 0.0), (2, 1.0, 0.0), (3, 0.0, 1.0)]);
        let inst = derive_mht_instance(&c, fleet2(), &DeriveOptions::default()).unwrap();
        let text = inst.to_json().replace(INSTANCE_FORMAT, "fleet-instance/99");
        assert!(matches!(Instance::from_json(&text), Err(InstanceError::Format(_))));
    }

    #[test]
    fn custom_masses_respected() {
        let c = cloud(&[(1, 0.0, 0.0), (2, 1.0, 0.0), (3, 0.0, 1.0)]);
        let opts = DeriveOptions {
            task_mass: 1.0,
            masses: Some(vec![3.5]),
        };
        let inst = derive_mht_instance(&c, fleet2(), &opts).unwrap();
        assert_eq!(inst.tasks[0].mass, 3.5);
    }
}
