use super::{sha256_hex, InstanceError};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub id: u32,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointCloud {
    pub name: Option<String>,
    pub points: Vec<Point>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        let mut seen = HashSet::with_capacity(self.points.len());
        for p in &self.points {
            if !seen.insert(p.id) {
                return Err(InstanceError::Validation(format!("duplicate point id {}", p.id)));
            }
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(InstanceError::Validation(format!(
                    "point {} has non-finite coordinates",
                    p.id
                )));
            }
        }
        Ok(())
    }

    /// The first `count` points in file order.
    pub fn prefix(&self, count: usize) -> PointCloud {
        PointCloud {
            name: self.name.clone(),
            points: self.points.iter().take(count).copied().collect(),
        }
    }

    /// SHA-256 over `id x y` lines, independent of the file's header layout.
    pub fn hash(&self) -> String {
        let mut s = String::new();
        for p in &self.points {
            let _ = writeln!(s, "{} {} {}", p.id, p.x, p.y);
        }
        sha256_hex(s.as_bytes())
    }
}

/// Reads the `NODE_COORD_SECTION` of a TSPLIB file.
///
/// Header lines (`NAME`, `TYPE`, `COMMENT`, ...) are accepted and ignored,
/// except `DIMENSION`, which must match the number of coordinates read.
/// The `EOF` marker is optional.
pub fn load_tsplib(text: &str) -> Result<PointCloud, InstanceError> {
    let mut name = None;
    let mut dimension: Option<usize> = None;
    let mut in_coords = false;
    let mut saw_section = false;
    let mut points = Vec::new();
    let mut ids = HashSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line == "EOF" {
            break;
        }
        if in_coords {
            let mut parts = line.split_whitespace();
            let first = parts.next().unwrap_or_default();
            let Ok(id) = first.parse::<u32>() else {
                // a new keyword section ends the coordinates
                if first.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
                    in_coords = false;
                    continue;
                }
                return Err(InstanceError::Parse {
                    line: line_no,
                    message: format!("bad node id {first:?}"),
                });
            };
            let coord = |tok: Option<&str>| -> Result<f64, InstanceError> {
                let tok = tok.ok_or_else(|| InstanceError::Parse {
                    line: line_no,
                    message: "expected `id x y`".into(),
                })?;
                tok.parse::<f64>().map_err(|_| InstanceError::Parse {
                    line: line_no,
                    message: format!("bad coordinate {tok:?}"),
                })
            };
            let x = coord(parts.next())?;
            let y = coord(parts.next())?;
            if !ids.insert(id) {
                return Err(InstanceError::Validation(format!("duplicate point id {id}")));
            }
            points.push(Point { id, x, y });
            continue;
        }
        if line.starts_with("NODE_COORD_SECTION") {
            in_coords = true;
            saw_section = true;
            continue;
        }
        if let Some((key, value)) = line.split_once(':') {
            let value = value.trim();
            match key.trim() {
                "NAME" => name = Some(value.to_string()),
                "DIMENSION" => {
                    dimension = Some(value.parse().map_err(|_| InstanceError::Parse {
                        line: line_no,
                        message: format!("bad DIMENSION {value:?}"),
                    })?)
                }
                _ => {}
            }
        }
    }

    if !saw_section {
        return Err(InstanceError::Parse {
            line: text.lines().count(),
            message: "missing NODE_COORD_SECTION".into(),
        });
    }
    if let Some(d) = dimension {
        if d != points.len() {
            return Err(InstanceError::Validation(format!(
                "DIMENSION {d} but {} coordinates",
                points.len()
            )));
        }
    }
    Ok(PointCloud { name, points })
}
