//! Tracks and the JSON track file format.
//!
//! ```json
//! {
//!   "name": "circle",
//!   "world_bounds": { "min": [-30, -30, -5], "max": [30, 30, 15] },
//!   "v_max": 30.0, "a_max": 15.0,
//!   "gates": [
//!     { "id": "g0", "index": 0, "position": [20, 0, 2],
//!       "yaw_deg": 90, "pitch_deg": 0, "roll_deg": 0,
//!       "inner": [2, 2], "outer": [3, 3] }
//!   ]
//! }
//! ```
//!
//! `v_max`/`a_max` are optional per-track planning limits (default 30 m/s and
//! 15 m/s²). Gates may appear in any order in the file; they are sorted by
//! `index`, which must cover `0..N` exactly once.

use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Aabb, Gate, GeometryError, Pose, Vec3};

pub const DEFAULT_V_MAX: f64 = 30.0;
pub const DEFAULT_A_MAX: f64 = 15.0;
/// Distance behind gate 0 where missions start, m.
pub const START_LEAD: f64 = 8.0;
/// Distance past the last gate where missions end, m.
pub const EXIT_DISTANCE: f64 = 5.0;

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("track needs at least 2 gates, got {0}")]
    TooFewGates(usize),
    #[error("duplicate gate index {0}")]
    DuplicateIndex(usize),
    #[error("gate indices must be 0..{n} without gaps, missing {missing}")]
    MissingIndex { n: usize, missing: usize },
    #[error("gate {0} lies outside world_bounds")]
    OutsideBounds(String),
    #[error("invalid planning limits: v_max and a_max must be positive")]
    InvalidLimits,
    #[error(transparent)]
    Gate(#[from] GeometryError),
    #[error("malformed track file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("track file I/O: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub name: String,
    /// Sorted by index; `gates[i].index == i`.
    pub gates: Vec<Gate>,
    pub world_bounds: Aabb,
    pub v_max: f64,
    pub a_max: f64,
}

impl Track {
    pub fn new(name: impl Into<String>, mut gates: Vec<Gate>, world_bounds: Aabb) -> Result<Self, TrackError> {
        if gates.len() < 2 {
            return Err(TrackError::TooFewGates(gates.len()));
        }
        let mut seen = BTreeSet::new();
        for g in &gates {
            g.validate()?;
            if !seen.insert(g.index) {
                return Err(TrackError::DuplicateIndex(g.index));
            }
        }
        if let Some(missing) = (0..gates.len()).find(|i| !seen.contains(i)) {
            return Err(TrackError::MissingIndex {
                n: gates.len(),
                missing,
            });
        }
        gates.sort_by_key(|g| g.index);
        if let Some(g) = gates.iter().find(|g| !world_bounds.contains(&g.center())) {
            return Err(TrackError::OutsideBounds(g.id.clone()));
        }
        Ok(Self {
            name: name.into(),
            gates,
            world_bounds,
            v_max: DEFAULT_V_MAX,
            a_max: DEFAULT_A_MAX,
        })
    }

    pub fn with_limits(mut self, v_max: f64, a_max: f64) -> Result<Self, TrackError> {
        if !(v_max > 0.0 && a_max > 0.0) {
            return Err(TrackError::InvalidLimits);
        }
        self.v_max = v_max;
        self.a_max = a_max;
        Ok(self)
    }

    pub fn gate_centers(&self) -> Vec<Vec3> {
        self.gates.iter().map(Gate::center).collect()
    }

    /// Start point [`START_LEAD`] behind gate 0 along its normal.
    pub fn start_point(&self) -> Vec3 {
        let g = &self.gates[0];
        g.center() - g.normal() * START_LEAD
    }

    /// Start, every gate centre, then an exit point past the last gate.
    pub fn mission_waypoints(&self) -> Vec<Vec3> {
        let last = self.gates.last().unwrap();
        let mut w = vec![self.start_point()];
        w.extend(self.gate_centers());
        w.push(last.center() + last.normal() * EXIT_DISTANCE);
        w
    }

    /// Copy of the track with gate poses replaced (e.g. noisy API poses).
    pub fn with_gate_poses(&self, poses: &[Pose]) -> Track {
        let mut t = self.clone();
        for (g, p) in t.gates.iter_mut().zip(poses) {
            g.pose = *p;
        }
        t
    }

    pub fn parse(text: &str) -> Result<Self, TrackError> {
        let file: TrackFile = serde_json::from_str(text)?;
        file.into_track()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrackError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&TrackFile::from(self)).expect("track serializes")
    }

    /// `n` gates equally spaced on a horizontal circle of radius `radius`
    /// centred at the origin at height `z`, spanning `sweep` radians
    /// counterclockwise from +X. Gate normals follow the direction of travel.
    pub fn circle(name: &str, radius: f64, n: usize, sweep: f64, z: f64, inner: (f64, f64), outer: (f64, f64)) -> Result<Self, TrackError> {
        let full = (sweep - TAU).abs() < 1e-12;
        let step = if full { sweep / n as f64 } else { sweep / (n.max(2) - 1) as f64 };
        let gates = (0..n)
            .map(|i| {
                let a = step * i as f64;
                let pos = Vec3::new(radius * a.cos(), radius * a.sin(), z);
                let pose = Pose::from_position_ypr(pos, a + std::f64::consts::FRAC_PI_2, 0.0, 0.0);
                Gate::new(format!("gate{i}"), i, pose, inner, outer)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let m = radius + 20.0;
        Track::new(
            name,
            gates,
            Aabb::new(Vec3::new(-m, -m, z - 10.0), Vec3::new(m, m, z + 20.0)),
        )
    }

    /// `n` gates along +X spaced `spacing` metres apart at height `z`.
    pub fn straight(name: &str, n: usize, spacing: f64, z: f64, inner: (f64, f64), outer: (f64, f64)) -> Result<Self, TrackError> {
        let gates = (0..n)
            .map(|i| {
                let pose = Pose::from_position_ypr(Vec3::new(spacing * i as f64, 0.0, z), 0.0, 0.0, 0.0);
                Gate::new(format!("gate{i}"), i, pose, inner, outer)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let len = spacing * n as f64;
        Track::new(
            name,
            gates,
            Aabb::new(Vec3::new(-20.0, -20.0, z - 10.0), Vec3::new(len + 20.0, 20.0, z + 20.0)),
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackFile {
    name: String,
    world_bounds: Aabb,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    v_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    a_max: Option<f64>,
    gates: Vec<GateRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GateRecord {
    id: String,
    index: usize,
    position: [f64; 3],
    #[serde(default)]
    yaw_deg: f64,
    #[serde(default)]
    pitch_deg: f64,
    #[serde(default)]
    roll_deg: f64,
    inner: [f64; 2],
    outer: [f64; 2],
}

impl TrackFile {
    fn into_track(self) -> Result<Track, TrackError> {
        let gates = self
            .gates
            .into_iter()
            .map(|g| {
                let pose = Pose::from_position_ypr(
                    Vec3::from(g.position),
                    g.yaw_deg.to_radians(),
                    g.pitch_deg.to_radians(),
                    g.roll_deg.to_radians(),
                );
                Gate::new(g.id, g.index, pose, (g.inner[0], g.inner[1]), (g.outer[0], g.outer[1]))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Track::new(self.name, gates, self.world_bounds)?.with_limits(
            self.v_max.unwrap_or(DEFAULT_V_MAX),
            self.a_max.unwrap_or(DEFAULT_A_MAX),
        )
    }
}

impl From<&Track> for TrackFile {
    fn from(t: &Track) -> Self {
        let gates = t
            .gates
            .iter()
            .map(|g| {
                let (roll, pitch, yaw) = g.pose.orientation.euler_angles();
                GateRecord {
                    id: g.id.clone(),
                    index: g.index,
                    position: [g.pose.position.x, g.pose.position.y, g.pose.position.z],
                    yaw_deg: yaw.to_degrees(),
                    pitch_deg: pitch.to_degrees(),
                    roll_deg: roll.to_degrees(),
                    inner: [g.inner_width, g.inner_height],
                    outer: [g.outer_width, g.outer_height],
                }
            })
            .collect();
        Self {
            name: t.name.clone(),
            world_bounds: t.world_bounds,
            v_max: Some(t.v_max),
            a_max: Some(t.a_max),
            gates,
        }
    }
}
