//! Point-mass quadrotor with a lagged attitude and a layered control API.
//!
//! Control levels, lowest first:
//!
//! * [`ControlCommand::AngleRatesThrust`]: body rates and a thrust fraction.
//! * [`ControlCommand::AnglesThrust`]: roll/pitch/yaw and a thrust fraction.
//! * [`ControlCommand::Velocity`]: P loop to an acceleration.
//! * [`ControlCommand::Position`]: PD loop to a velocity setpoint.
//! * [`ControlCommand::TrackTrajectory`]: pure pursuit on a spline.
//!
//! Acceleration-level commands are turned into a thrust vector, clipped to a
//! tilt-aware envelope, and realised through the attitude lag.

mod tracker;

use std::io::Write;
use std::sync::Arc;

use nalgebra::{Matrix3, Rotation3};
use thiserror::Error;

use crate::geometry::{gravity, Pose, Quat, RigidState, Vec3, GRAVITY};
use crate::spline::{PiecewiseSpline, PlanError, SplineRequest};

pub use tracker::{pure_pursuit_track, run_spline_mission, tracking_axes, TrackerGains, TrackerOutput};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("dt must be in (0, 0.02] s, got {0}")]
    InvalidDt(f64),
    #[error("command contains non-finite values")]
    NonFiniteCommand,
    #[error("thrust fraction {0} outside [0, 1]")]
    ThrustOutOfRange(f64),
    #[error("invalid vehicle parameter: {0}")]
    InvalidParams(&'static str),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

/// Largest integration step accepted by [`step`].
pub const MAX_DT: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    pub mass: f64,
    /// Linear drag, 1/s.
    pub drag_coeff: f64,
    pub max_thrust_accel: f64,
    pub attitude_time_constant: f64,
    pub rate_time_constant: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            drag_coeff: 0.1,
            max_thrust_accel: 4.0 * GRAVITY,
            attitude_time_constant: 0.15,
            rate_time_constant: 0.05,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.mass) {
            return Err(DynamicsError::InvalidParams("mass"));
        }
        if !(self.drag_coeff.is_finite() && self.drag_coeff >= 0.0) {
            return Err(DynamicsError::InvalidParams("drag_coeff"));
        }
        if !pos(self.max_thrust_accel) {
            return Err(DynamicsError::InvalidParams("max_thrust_accel"));
        }
        if !pos(self.attitude_time_constant) {
            return Err(DynamicsError::InvalidParams("attitude_time_constant"));
        }
        if !pos(self.rate_time_constant) {
            return Err(DynamicsError::InvalidParams("rate_time_constant"));
        }
        Ok(())
    }

    /// Sets the attitude lag from an angle-level proportional gain (τ = 1/kp).
    pub fn set_angle_level_gains(&mut self, kp: f64) {
        self.attitude_time_constant = 1.0 / kp;
    }

    /// Sets the rate lag from an angle-rate proportional gain (τ = 1/kp).
    pub fn set_angle_rate_gains(&mut self, kp: f64) {
        self.rate_time_constant = 1.0 / kp;
    }
}

/// Gains of the position and velocity stages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeGains {
    pub position_kp: f64,
    pub position_kd: f64,
    pub velocity_kp: f64,
}

impl Default for CascadeGains {
    fn default() -> Self {
        Self {
            position_kp: 2.0,
            position_kd: 0.0,
            velocity_kp: 4.0,
        }
    }
}

impl CascadeGains {
    pub fn set_position_gains(&mut self, kp: f64, kd: f64) {
        self.position_kp = kp;
        self.position_kd = kd;
    }

    pub fn set_velocity_gains(&mut self, kp: f64) {
        self.velocity_kp = kp;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlCommand {
    /// Body rates (rad/s) and thrust as a fraction of `max_thrust_accel`.
    AngleRatesThrust { rates: Vec3, thrust: f64 },
    AnglesThrust { roll: f64, pitch: f64, yaw: f64, thrust: f64 },
    Velocity { velocity: Vec3, yaw: f64 },
    Position { position: Vec3, yaw: f64 },
    /// Follow `spline`, whose t = 0 corresponds to state time `start_time`.
    TrackTrajectory { spline: Arc<PiecewiseSpline>, gains: TrackerGains, start_time: f64 },
}

impl ControlCommand {
    pub fn is_finite(&self) -> bool {
        match self {
            Self::AngleRatesThrust { rates, thrust } => rates.iter().all(|v| v.is_finite()) && thrust.is_finite(),
            Self::AnglesThrust { roll, pitch, yaw, thrust } => [roll, pitch, yaw, thrust].iter().all(|v| v.is_finite()),
            Self::Velocity { velocity: v, yaw } | Self::Position { position: v, yaw } => {
                v.iter().all(|x| x.is_finite()) && yaw.is_finite()
            }
            Self::TrackTrajectory { gains, start_time, .. } => gains.is_valid() && start_time.is_finite(),
        }
    }
}

/// What the upper control stages asked for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Actuation {
    Rates { rates: Vec3, thrust_accel: f64 },
    Attitude { attitude: Quat, thrust_accel: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeOutput {
    /// Position-stage output, when the position stage ran.
    pub velocity_setpoint: Option<Vec3>,
    /// Desired kinematic acceleration, when an acceleration stage ran.
    pub accel_command: Option<Vec3>,
    pub actuation: Actuation,
}

/// Runs the upper stages of the cascade down to an attitude or rate command.
pub fn resolve_cascade(
    state: &RigidState,
    cmd: &ControlCommand,
    params: &VehicleParams,
    gains: &CascadeGains,
) -> Result<CascadeOutput, DynamicsError> {
    if !cmd.is_finite() {
        return Err(DynamicsError::NonFiniteCommand);
    }
    let fraction = |t: f64| {
        if (0.0..=1.0).contains(&t) {
            Ok(t * params.max_thrust_accel)
        } else {
            Err(DynamicsError::ThrustOutOfRange(t))
        }
    };
    let (velocity_setpoint, accel, yaw) = match cmd {
        ControlCommand::AngleRatesThrust { rates, thrust } => {
            return Ok(CascadeOutput {
                velocity_setpoint: None,
                accel_command: None,
                actuation: Actuation::Rates { rates: *rates, thrust_accel: fraction(*thrust)? },
            });
        }
        ControlCommand::AnglesThrust { roll, pitch, yaw, thrust } => {
            return Ok(CascadeOutput {
                velocity_setpoint: None,
                accel_command: None,
                actuation: Actuation::Attitude {
                    attitude: Quat::from_euler_angles(*roll, *pitch, *yaw),
                    thrust_accel: fraction(*thrust)?,
                },
            });
        }
        ControlCommand::Velocity { velocity, yaw } => {
            (None, gains.velocity_kp * (velocity - state.velocity), *yaw)
        }
        ControlCommand::Position { position, yaw } => {
            let v_sp = gains.position_kp * (position - state.pose.position) - gains.position_kd * state.velocity;
            (Some(v_sp), gains.velocity_kp * (v_sp - state.velocity), *yaw)
        }
        ControlCommand::TrackTrajectory { spline, gains: tg, start_time } => {
            let t = (state.timestamp - start_time).clamp(0.0, spline.total_duration());
            let out = pure_pursuit_track(state, spline, tg, t);
            (None, out.accel, out.yaw)
        }
    };
    let thrust = thrust_envelope(accel - gravity() + params.drag_coeff * state.velocity, params.max_thrust_accel);
    Ok(CascadeOutput {
        velocity_setpoint,
        accel_command: Some(accel),
        actuation: Actuation::Attitude {
            attitude: attitude_from_thrust(&thrust, yaw),
            thrust_accel: thrust.norm(),
        },
    })
}

/// Clips a thrust vector: vertical part to `[0, max]`, then the horizontal
/// part to whatever magnitude remains.
pub fn thrust_envelope(f: Vec3, max: f64) -> Vec3 {
    let fz = f.z.clamp(0.0, max);
    let h = Vec3::new(f.x, f.y, 0.0);
    let h_max = (max * max - fz * fz).max(0.0).sqrt();
    let hn = h.norm();
    let h = if hn > h_max { h * (h_max / hn) } else { h };
    Vec3::new(h.x, h.y, fz)
}

/// Attitude whose body z axis is along `thrust` and whose heading is `yaw`.
pub fn attitude_from_thrust(thrust: &Vec3, yaw: f64) -> Quat {
    let z = if thrust.norm() > 1e-9 { thrust.normalize() } else { Vec3::z() };
    let heading = Vec3::new(yaw.cos(), yaw.sin(), 0.0);
    let mut y = z.cross(&heading);
    if y.norm() < 1e-9 {
        y = z.cross(&Vec3::new(-yaw.sin(), yaw.cos(), 0.0).cross(&z));
    }
    let y = y.normalize();
    let x = y.cross(&z);
    let m = Matrix3::from_columns(&[x, y, z]);
    Quat::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m))
}

/// Advances the vehicle by one semi-implicit Euler step.
pub fn step(
    state: &RigidState,
    cmd: &ControlCommand,
    params: &VehicleParams,
    gains: &CascadeGains,
    dt: f64,
) -> Result<RigidState, DynamicsError> {
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(DynamicsError::InvalidDt(dt));
    }
    params.validate()?;
    let out = resolve_cascade(state, cmd, params, gains)?;
    let q0 = state.pose.orientation;
    let (q1, omega, thrust_accel) = match out.actuation {
        Actuation::Attitude { attitude, thrust_accel } => {
            let alpha = (dt / params.attitude_time_constant).min(1.0);
            let q1 = q0.try_slerp(&attitude, alpha, 1e-12).unwrap_or(attitude);
            let omega = (q0.inverse() * q1).scaled_axis() / dt;
            (q1, omega, thrust_accel)
        }
        Actuation::Rates { rates, thrust_accel } => {
            let alpha = (dt / params.rate_time_constant).min(1.0);
            let omega = state.angular_velocity + (rates - state.angular_velocity) * alpha;
            (q0 * Quat::from_scaled_axis(omega * dt), omega, thrust_accel)
        }
    };
    let f = q1 * Vec3::z() * thrust_accel;
    let v = state.velocity + (f + gravity() - params.drag_coeff * state.velocity) * dt;
    let p = state.pose.position + v * dt;
    Ok(RigidState {
        pose: Pose::new(p, q1),
        velocity: v,
        angular_velocity: omega,
        timestamp: state.timestamp + dt,
    })
}

/// Writes `t,x,y,z,vx,vy,vz,yaw` rows.
pub fn write_state_csv<W: Write>(states: &[RigidState], mut out: W) -> std::io::Result<()> {
    writeln!(out, "t,x,y,z,vx,vy,vz,yaw")?;
    for s in states {
        let (p, v) = (s.pose.position, s.velocity);
        writeln!(
            out,
            "{:.4},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            s.timestamp, p.x, p.y, p.z, v.x, v.y, v.z,
            s.pose.yaw()
        )?;
    }
    Ok(())
}

/// Convenience: plan `req` and wrap it as a tracking command starting now.
pub fn track_command(
    state: &RigidState,
    req: &SplineRequest,
    gains: TrackerGains,
) -> Result<ControlCommand, DynamicsError> {
    let spline = crate::spline::plan_min_jerk_vel_constraints(req)?;
    Ok(ControlCommand::TrackTrajectory {
        spline: Arc::new(spline),
        gains,
        start_time: state.timestamp,
    })
}
