use super::{energy_matrix, EnergyMatrix, Instance, InstanceError, RobotType};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// A change to the instance parameters. Never changes the task count or the
/// fleet size.
///
/// Text form, one perturbation per line:
///
/// ```text
/// battery robot=2 B=16
/// payload robot=2 Q=8
/// spatial xi=0.04 seed=7
/// spatial xi=0.04 seed=7 depot=true
/// energy type=0 rows=0,0.5;0.5,0
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    Battery { robot: u32, battery_kj: f64 },
    Payload { robot: u32, capacity: f64 },
    Spatial { xi: f64, seed: u64, include_depot: bool },
    EnergyOverride { type_id: usize, rows: Vec<Vec<f64>> },
}

/// Knobs for [`Perturbation::spatial`].
#[derive(Debug, Clone, Copy, Default)]
pub struct SpatialOptions {
    pub include_depot: bool,
}

impl Perturbation {
    pub fn battery(robot: u32, battery_kj: f64) -> Self {
        Perturbation::Battery { robot, battery_kj }
    }

    pub fn payload(robot: u32, capacity: f64) -> Self {
        Perturbation::Payload { robot, capacity }
    }

    pub fn spatial(xi: f64, seed: u64, options: SpatialOptions) -> Self {
        Perturbation::Spatial {
            xi,
            seed,
            include_depot: options.include_depot,
        }
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        let bad = |m: String| Err(InstanceError::Validation(m));
        match *self {
            Perturbation::Battery { battery_kj, .. } if !(battery_kj > 0.0 && battery_kj.is_finite()) => {
                bad(format!("battery must be > 0, got {battery_kj}"))
            }
            Perturbation::Payload { capacity, .. } if !(capacity > 0.0 && capacity.is_finite()) => {
                bad(format!("payload capacity must be > 0, got {capacity}"))
            }
            Perturbation::Spatial { xi, .. } if !(0.0..1.0).contains(&xi) => {
                bad(format!("xi must lie in [0, 1), got {xi}"))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Perturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Perturbation::Battery { robot, battery_kj } => write!(f, "battery robot={robot} B={battery_kj}"),
            Perturbation::Payload { robot, capacity } => write!(f, "payload robot={robot} Q={capacity}"),
            Perturbation::Spatial {
                xi,
                seed,
                include_depot,
            } => {
                write!(f, "spatial xi={xi} seed={seed}")?;
                if *include_depot {
                    write!(f, " depot=true")?;
                }
                Ok(())
            }
            Perturbation::EnergyOverride { type_id, rows } => {
                write!(f, "energy type={type_id} rows=")?;
                for (i, row) in rows.iter().enumerate() {
                    if i > 0 {
                        f.write_str(";")?;
                    }
                    for (j, v) in row.iter().enumerate() {
                        if j > 0 {
                            f.write_str(",")?;
                        }
                        write!(f, "{v}")?;
                    }
                }
                Ok(())
            }
        }
    }
}

impl FromStr for Perturbation {
    type Err = InstanceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |m: String| InstanceError::Parse { line: 1, message: m };
        let mut words = s.split_whitespace();
        let kind = words.next().ok_or_else(|| err("empty perturbation".into()))?;
        let mut pairs = Vec::new();
        for w in words {
            let (k, v) = w
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got {w:?}")))?;
            pairs.push((k, v));
        }
        let get = |key: &str| -> Result<&str, InstanceError> {
            pairs
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| err(format!("{kind}: missing `{key}=`")))
        };
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T, InstanceError> {
            v.parse().map_err(|_| InstanceError::Parse {
                line: 1,
                message: format!("bad value for {key}: {v:?}"),
            })
        }
        let allowed: &[&str] = match kind {
            "battery" => &["robot", "B"],
            "payload" => &["robot", "Q"],
            "spatial" => &["xi", "seed", "depot"],
            "energy" => &["type", "rows"],
            other => return Err(err(format!("unknown perturbation kind {other:?}"))),
        };
        if let Some((k, _)) = pairs.iter().find(|(k, _)| !allowed.contains(k)) {
            return Err(err(format!("{kind}: unexpected key {k:?}")));
        }
        let p = match kind {
            "battery" => Perturbation::Battery {
                robot: num("robot", get("robot")?)?,
                battery_kj: num("B", get("B")?)?,
            },
            "payload" => Perturbation::Payload {
                robot: num("robot", get("robot")?)?,
                capacity: num("Q", get("Q")?)?,
            },
            "spatial" => Perturbation::Spatial {
                xi: num("xi", get("xi")?)?,
                seed: num("seed", get("seed")?)?,
                include_depot: match pairs.iter().find(|(k, _)| *k == "depot") {
                    Some((_, v)) => num("depot", v)?,
                    None => false,
                },
            },
            _ => {
                let rows = get("rows")?
                    .split(';')
                    .map(|row| row.split(',').map(|v| num("rows", v)).collect())
                    .collect::<Result<Vec<Vec<f64>>, _>>()?;
                Perturbation::EnergyOverride {
                    type_id: num("type", get("type")?)?,
                    rows,
                }
            }
        };
        p.validate()?;
        Ok(p)
    }
}

/// Returns a perturbed copy of `instance`; the input is left untouched.
///
/// Battery and payload changes apply to one robot only: when its type is
/// shared with other robots the type is split off first. A battery change
/// rescales that robot's matrix by `old_B / new_B`. Spatial changes shift every
/// task location (and optionally the depot) by a uniform draw within
/// `±xi * range` per axis and rebuild all matrices from the new coordinates.
pub fn apply_perturbation(instance: &Instance, p: &Perturbation) -> Result<Instance, InstanceError> {
    p.validate()?;
    let mut out = instance.clone();
    out.meta.origin = Some(instance.lineage_root());
    out.meta.perturbations.push(p.clone());

    match p {
        Perturbation::Battery { robot, battery_kj } => {
            let idx = out.fleet.index_of(*robot)?;
            let old = *out.fleet.robot_type(idx);
            let type_id = isolate_type(&mut out, idx);
            out.fleet.types[type_id] = RobotType::new(*battery_kj, old.payload_capacity);
            out.energy[type_id] = out.energy[type_id].scaled(old.battery_kj / battery_kj);
        }
        Perturbation::Payload { robot, capacity } => {
            let idx = out.fleet.index_of(*robot)?;
            let type_id = isolate_type(&mut out, idx);
            out.fleet.types[type_id].payload_capacity = *capacity;
        }
        Perturbation::Spatial {
            xi,
            seed,
            include_depot,
        } => {
            if *xi == 0.0 {
                return Ok(out);
            }
            let range = |axis: usize| {
                let (lo, hi) = out
                    .coords
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
                        (lo.min(c[axis]), hi.max(c[axis]))
                    });
                hi - lo
            };
            let (bx, by) = (xi * range(0), xi * range(1));
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let draw = |rng: &mut ChaCha8Rng| [rng.gen_range(-bx..=bx), rng.gen_range(-by..=by)];
            let last = out.coords.len() - 1;
            if *include_depot {
                let d = draw(&mut rng);
                for node in [0, last] {
                    out.coords[node][0] += d[0];
                    out.coords[node][1] += d[1];
                }
            }
            for node in 1..last {
                let d = draw(&mut rng);
                out.coords[node][0] += d[0];
                out.coords[node][1] += d[1];
            }
            out.energy = out
                .fleet
                .types
                .iter()
                .map(|t| energy_matrix(&out.coords, t))
                .collect();
        }
        Perturbation::EnergyOverride { type_id, rows } => {
            if *type_id >= out.fleet.types.len() {
                return Err(InstanceError::UnknownType(*type_id));
            }
            let m = EnergyMatrix::from_rows(rows.clone())?;
            if m.dim() != out.coords.len() {
                return Err(InstanceError::Validation(format!(
                    "override is {0}x{0}, instance needs {1}x{1}",
                    m.dim(),
                    out.coords.len()
                )));
            }
            out.energy[*type_id] = m;
        }
    }
    out.validate()?;
    Ok(out)
}

/// Gives `robot` a type of its own (copying its current type and matrix) when
/// the type is shared; returns the type id now owned by `robot`.
fn isolate_type(instance: &mut Instance, robot: usize) -> usize {
    let type_id = instance.fleet.robots[robot].type_id;
    let shared = instance
        .fleet
        .robots
        .iter()
        .enumerate()
        .any(|(i, r)| i != robot && r.type_id == type_id);
    if !shared {
        return type_id;
    }
    instance.fleet.types.push(instance.fleet.types[type_id]);
    instance.energy.push(instance.energy[type_id].clone());
    let new_id = instance.fleet.types.len() - 1;
    instance.fleet.robots[robot].type_id = new_id;
    new_id
}
