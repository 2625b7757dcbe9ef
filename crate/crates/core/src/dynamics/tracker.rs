//! Pure-pursuit trajectory tracking.

use std::sync::Arc;

use super::{step, CascadeGains, ControlCommand, DynamicsError, VehicleParams};
use crate::geometry::{RigidState, Vec3};
use crate::spline::{plan_min_jerk_vel_constraints, PiecewiseSpline, SplineRequest, SplineSample, YAW_HOLD_SPEED};

/// Extra time flown after the reference ends.
const SETTLE_TIME: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerGains {
    pub kp_cross: f64,
    pub kd_cross: f64,
    pub kp_along: f64,
    pub kd_along: f64,
    pub kp_z: f64,
    pub kd_z: f64,
    pub lookahead_time: f64,
}

impl Default for TrackerGains {
    fn default() -> Self {
        Self {
            kp_cross: 4.0,
            kd_cross: 2.8,
            kp_along: 4.0,
            kd_along: 2.8,
            kp_z: 4.0,
            kd_z: 2.8,
            lookahead_time: 0.1,
        }
    }
}

impl TrackerGains {
    pub fn uniform(kp: f64, kd: f64, lookahead_time: f64) -> Self {
        Self {
            kp_cross: kp,
            kd_cross: kd,
            kp_along: kp,
            kd_along: kd,
            kp_z: kp,
            kd_z: kd,
            lookahead_time,
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.kp_cross, self.kd_cross, self.kp_along, self.kd_along, self.kp_z, self.kd_z, self.lookahead_time]
            .iter()
            .all(|g| g.is_finite() && *g >= 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerOutput {
    pub accel: Vec3,
    pub yaw: f64,
    pub reference: SplineSample,
    /// Along-track, cross-track and vertical unit axes.
    pub axes: [Vec3; 3],
}

/// Along-track (horizontal tangent), cross-track (`z × along`) and world z.
/// Falls back to the heading `yaw` when the horizontal speed is too small.
pub fn tracking_axes(velocity: &Vec3, yaw: f64) -> [Vec3; 3] {
    let h = Vec3::new(velocity.x, velocity.y, 0.0);
    let along = if h.norm() > YAW_HOLD_SPEED {
        h.normalize()
    } else {
        Vec3::new(yaw.cos(), yaw.sin(), 0.0)
    };
    [along, Vec3::z().cross(&along), Vec3::z()]
}

pub fn pure_pursuit_track(state: &RigidState, spline: &PiecewiseSpline, gains: &TrackerGains, t_now: f64) -> TrackerOutput {
    let t_ref = (t_now + gains.lookahead_time).min(spline.total_duration());
    let reference = spline.sample_clamped(t_ref);
    let yaw = spline.yaw(t_ref);
    let axes = tracking_axes(&reference.velocity, yaw);
    let ep = reference.position - state.pose.position;
    let ev = reference.velocity - state.velocity;
    let kp = [gains.kp_along, gains.kp_cross, gains.kp_z];
    let kd = [gains.kd_along, gains.kd_cross, gains.kd_z];
    let mut accel = reference.acceleration;
    for i in 0..3 {
        accel += axes[i] * (kp[i] * ep.dot(&axes[i]) + kd[i] * ev.dot(&axes[i]));
    }
    TrackerOutput {
        accel,
        yaw,
        reference,
        axes,
    }
}

/// Plans `req`, then flies it closed-loop from `initial` until the reference
/// has ended plus a one second settle. Returns every state, initial included.
pub fn run_spline_mission(
    initial: &RigidState,
    req: &SplineRequest,
    gains: &TrackerGains,
    params: &VehicleParams,
    dt: f64,
) -> Result<Vec<RigidState>, DynamicsError> {
    let spline = Arc::new(plan_min_jerk_vel_constraints(req)?);
    let n = ((spline.total_duration() + SETTLE_TIME) / dt).ceil() as usize;
    let cmd = ControlCommand::TrackTrajectory {
        spline,
        gains: *gains,
        start_time: initial.timestamp,
    };
    let cascade = CascadeGains::default();
    let mut states = Vec::with_capacity(n + 1);
    states.push(*initial);
    for _ in 0..n {
        let next = step(states.last().unwrap(), &cmd, params, &cascade, dt)?;
        states.push(next);
    }
    Ok(states)
}
