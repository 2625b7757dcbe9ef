//! Shared geometric value types.
//!
//! World frame is right-handed with Z up and gravity along −Z. Gates use
//! their local +X axis as the pass-through normal; local Y is the gate's
//! width direction and local Z its height direction.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Quat = UnitQuaternion<f64>;

/// Standard gravity magnitude in m/s².
pub const GRAVITY: f64 = 9.81;

/// Gravity vector in the Z-up world frame.
pub fn gravity() -> Vec3 {
    Vec3::new(0.0, 0.0, -GRAVITY)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("gate {id}: {reason}")]
    InvalidGate { id: String, reason: String },
}

/// Rigid pose: rotation followed by translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: Quat,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            position: Vec3::zeros(),
            orientation: Quat::identity(),
        }
    }

    pub fn new(position: Vec3, orientation: Quat) -> Self {
        Self {
            position,
            orientation,
        }
    }

    /// Pose from Z-Y-X Euler angles (yaw about Z, then pitch about Y, then roll about X).
    pub fn from_position_ypr(position: Vec3, yaw: f64, pitch: f64, roll: f64) -> Self {
        Self {
            position,
            orientation: Quat::from_euler_angles(roll, pitch, yaw),
        }
    }

    pub fn yaw(&self) -> f64 {
        self.orientation.euler_angles().2
    }

    /// Maps a point from the pose's local frame into the parent frame.
    pub fn transform_point(&self, p_local: &Vec3) -> Vec3 {
        self.orientation * p_local + self.position
    }

    pub fn inverse_transform_point(&self, p_world: &Vec3) -> Vec3 {
        self.orientation.inverse() * (p_world - self.position)
    }

    pub fn rotate(&self, v_local: &Vec3) -> Vec3 {
        self.orientation * v_local
    }

    pub fn inverse_rotate(&self, v_world: &Vec3) -> Vec3 {
        self.orientation.inverse() * v_world
    }

    /// Composition `self ∘ other`: `other` expressed in `self`'s frame.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            position: self.transform_point(&other.position),
            orientation: self.orientation * other.orientation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.orientation.inverse();
        Pose {
            position: -(inv * self.position),
            orientation: inv,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|c| c.is_finite())
            && self.orientation.coords.iter().all(|c| c.is_finite())
    }
}

/// Free function form of [`Pose::transform_point`].
pub fn transform_point(pose: &Pose, p_local: &Vec3) -> Vec3 {
    pose.transform_point(p_local)
}

/// Kinematic state of one racer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidState {
    pub pose: Pose,
    /// World-frame linear velocity, m/s.
    pub velocity: Vec3,
    /// Body-frame angular velocity, rad/s.
    pub angular_velocity: Vec3,
    pub timestamp: f64,
}

impl RigidState {
    pub fn at_rest(position: Vec3, yaw: f64) -> Self {
        Self {
            pose: Pose::from_position_ypr(position, yaw, 0.0, 0.0),
            velocity: Vec3::zeros(),
            angular_velocity: Vec3::zeros(),
            timestamp: 0.0,
        }
    }

    pub fn position(&self) -> Vec3 {
        self.pose.position
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self {
            min: [min.x, min.y, min.z],
            max: [max.x, max.y, max.z],
        }
    }

    pub fn min_v(&self) -> Vec3 {
        Vec3::from(self.min)
    }

    pub fn max_v(&self) -> Vec3 {
        Vec3::from(self.max)
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    pub fn extent(&self) -> Vec3 {
        self.max_v() - self.min_v()
    }
}

/// A rectangular racing gate. The inner rectangle is the opening, the band
/// between inner and outer rectangles is the solid frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub id: String,
    pub index: usize,
    pub pose: Pose,
    pub inner_width: f64,
    pub inner_height: f64,
    pub outer_width: f64,
    pub outer_height: f64,
}

impl Gate {
    pub fn new(
        id: impl Into<String>,
        index: usize,
        pose: Pose,
        inner: (f64, f64),
        outer: (f64, f64),
    ) -> Result<Self, GeometryError> {
        let gate = Self {
            id: id.into(),
            index,
            pose,
            inner_width: inner.0,
            inner_height: inner.1,
            outer_width: outer.0,
            outer_height: outer.1,
        };
        gate.validate()?;
        Ok(gate)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |reason: &str| GeometryError::InvalidGate {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if !self.pose.is_finite() {
            return Err(GeometryError::NonFinite("gate pose"));
        }
        if !(self.inner_width > 0.0 && self.inner_height > 0.0) {
            return Err(bad("inner dimensions must be positive"));
        }
        if !(self.outer_width >= self.inner_width && self.outer_height >= self.inner_height) {
            return Err(bad("outer dimensions must not be smaller than inner"));
        }
        Ok(())
    }

    pub fn center(&self) -> Vec3 {
        self.pose.position
    }

    /// Pass-through direction (local +X) in world frame.
    pub fn normal(&self) -> Vec3 {
        self.pose.rotate(&Vec3::x())
    }

    fn dims(&self, use_inner: bool) -> (f64, f64) {
        if use_inner {
            (self.inner_width, self.inner_height)
        } else {
            (self.outer_width, self.outer_height)
        }
    }

    /// Rectangle corners in the gate's local frame (x = 0), ordered
    /// top-left, bottom-left, bottom-right, top-right as seen by a viewer
    /// looking along +X. With Z up that viewer's left is local +Y.
    pub fn corners_local(&self, use_inner: bool) -> [Vec3; 4] {
        let (w, h) = self.dims(use_inner);
        let (hw, hh) = (0.5 * w, 0.5 * h);
        [
            Vec3::new(0.0, hw, hh),
            Vec3::new(0.0, hw, -hh),
            Vec3::new(0.0, -hw, -hh),
            Vec3::new(0.0, -hw, hh),
        ]
    }

    pub fn corners_world(&self, use_inner: bool) -> [Vec3; 4] {
        self.corners_local(use_inner)
            .map(|c| self.pose.transform_point(&c))
    }

    /// True if the local in-plane coordinates `(y, z)` fall strictly inside the opening.
    pub fn inside_inner(&self, y: f64, z: f64) -> bool {
        y.abs() < 0.5 * self.inner_width && z.abs() < 0.5 * self.inner_height
    }

    /// True if `(y, z)` lies on the solid frame band (inside outer, not strictly inside inner).
    pub fn on_frame_band(&self, y: f64, z: f64) -> bool {
        y.abs() <= 0.5 * self.outer_width
            && z.abs() <= 0.5 * self.outer_height
            && !self.inside_inner(y, z)
    }
}

/// Free function form of [`Gate::corners_world`].
pub fn gate_corners_world(gate: &Gate, use_inner: bool) -> [Vec3; 4] {
    gate.corners_world(use_inner)
}
