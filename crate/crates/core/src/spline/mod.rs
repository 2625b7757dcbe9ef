//! Piecewise-quintic trajectories and the minimum-jerk planner.

mod banded;
mod planner;

use std::io::Write;

use thiserror::Error;

use crate::geometry::Vec3;

pub use planner::{
    allocate_times, min_jerk_with_durations, plan_min_jerk, plan_min_jerk_vel_constraints,
    SplineRequest, VelocityConstraint, LIMIT_SAMPLE_DT, LIMIT_SLACK, MAX_SCALE_ITERATIONS,
    SCALE_FACTOR,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("waypoints {0} and {1} coincide")]
    DegenerateWaypoints(usize, usize),
    #[error("need at least 2 waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("v_max and a_max must be positive and finite")]
    InfeasibleLimits,
    #[error("velocity constraint at waypoint {index} exceeds v_max ({speed:.3} > {v_max:.3})")]
    ConflictingConstraint { index: usize, speed: f64, v_max: f64 },
    #[error("velocity constraint index {0} out of range")]
    ConstraintIndexOutOfRange(usize),
    #[error("non-finite value in request")]
    NonFinite,
    #[error("segment durations must be positive and match the waypoint count")]
    InvalidDurations,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("t = {t} outside spline domain [0, {total}]")]
pub struct OutOfRange {
    pub t: f64,
    pub total: f64,
}

/// One quintic piece; `coeffs[axis][k]` multiplies `τ^k`, τ ∈ [0, duration].
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub duration: f64,
    pub coeffs: [[f64; 6]; 3],
}

impl Segment {
    fn eval(&self, tau: f64) -> [Vec3; 4] {
        let mut out = [Vec3::zeros(); 4];
        for axis in 0..3 {
            let c = &self.coeffs[axis];
            let p = ((((c[5] * tau + c[4]) * tau + c[3]) * tau + c[2]) * tau + c[1]) * tau + c[0];
            let v = (((5.0 * c[5] * tau + 4.0 * c[4]) * tau + 3.0 * c[3]) * tau + 2.0 * c[2]) * tau + c[1];
            let a = ((20.0 * c[5] * tau + 12.0 * c[4]) * tau + 6.0 * c[3]) * tau + 2.0 * c[2];
            let j = (60.0 * c[5] * tau + 24.0 * c[4]) * tau + 6.0 * c[3];
            out[0][axis] = p;
            out[1][axis] = v;
            out[2][axis] = a;
            out[3][axis] = j;
        }
        out
    }
}

/// Kinematic sample of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplineSample {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
    pub jerk: Vec3,
}

/// C²-continuous piecewise quintic trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseSpline {
    segments: Vec<Segment>,
    knot_times: Vec<f64>,
}

impl PiecewiseSpline {
    pub fn from_segments(segments: Vec<Segment>) -> Self {
        let mut knot_times = Vec::with_capacity(segments.len() + 1);
        let mut t = 0.0;
        knot_times.push(t);
        for s in &segments {
            t += s.duration;
            knot_times.push(t);
        }
        Self {
            segments,
            knot_times,
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Cumulative knot times, starting at 0 and ending at `total_duration`.
    pub fn knot_times(&self) -> &[f64] {
        &self.knot_times
    }

    pub fn total_duration(&self) -> f64 {
        *self.knot_times.last().unwrap_or(&0.0)
    }

    pub fn durations(&self) -> Vec<f64> {
        self.segments.iter().map(|s| s.duration).collect()
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.segments.len();
        // Right-continuous inside the domain; the final knot belongs to the last segment.
        let i = match self.knot_times[..n].binary_search_by(|k| k.total_cmp(&t)) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        let i = i.min(n - 1);
        (i, t - self.knot_times[i])
    }

    pub fn sample(&self, t: f64) -> Result<SplineSample, OutOfRange> {
        let total = self.total_duration();
        if !(0.0..=total).contains(&t) {
            return Err(OutOfRange { t, total });
        }
        Ok(self.sample_clamped(t))
    }

    /// Samples at `t` clamped into the domain.
    pub fn sample_clamped(&self, t: f64) -> SplineSample {
        let t = t.clamp(0.0, self.total_duration());
        let (i, tau) = self.locate(t);
        let [position, velocity, acceleration, jerk] = self.segments[i].eval(tau);
        SplineSample {
            position,
            velocity,
            acceleration,
            jerk,
        }
    }

    /// Left and right limits at interior knot `k` (1..segments).
    pub fn knot_limits(&self, k: usize) -> (SplineSample, SplineSample) {
        let left = self.segments[k - 1].eval(self.segments[k - 1].duration);
        let right = self.segments[k].eval(0.0);
        let mk = |e: [Vec3; 4]| SplineSample {
            position: e[0],
            velocity: e[1],
            acceleration: e[2],
            jerk: e[3],
        };
        (mk(left), mk(right))
    }

    /// Heading that follows the horizontal tangent. Where the horizontal
    /// speed drops below [`YAW_HOLD_SPEED`] the most recent well-defined
    /// heading is held; if none exists earlier, the first one later is used,
    /// and a trajectory that never moves horizontally faces +X.
    pub fn yaw(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.total_duration());
        if let Some(y) = self.heading_at(t) {
            return y;
        }
        let step = 1e-3;
        let mut back = t;
        while back > 0.0 {
            back = (back - step).max(0.0);
            if let Some(y) = self.heading_at(back) {
                return y;
            }
        }
        let total = self.total_duration();
        let mut fwd = t;
        while fwd < total {
            fwd = (fwd + step).min(total);
            if let Some(y) = self.heading_at(fwd) {
                return y;
            }
        }
        0.0
    }

    fn heading_at(&self, t: f64) -> Option<f64> {
        let v = self.sample_clamped(t).velocity;
        (v.x.hypot(v.y) >= YAW_HOLD_SPEED).then(|| v.y.atan2(v.x))
    }

    /// Writes `t,x,y,z,vx,vy,vz,ax,ay,az,yaw` rows sampled at `rate_hz`,
    /// always including the final instant.
    pub fn write_csv<W: Write>(&self, rate_hz: f64, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,x,y,z,vx,vy,vz,ax,ay,az,yaw")?;
        let total = self.total_duration();
        let n = (total * rate_hz).floor() as usize;
        let mut times: Vec<f64> = (0..=n).map(|k| k as f64 / rate_hz).collect();
        if times.last().is_some_and(|&t| total - t > 1e-9) {
            times.push(total);
        }
        for t in times {
            let s = self.sample_clamped(t);
            let (p, v, a) = (s.position, s.velocity, s.acceleration);
            writeln!(
                out,
                "{t:.4},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                p.x, p.y, p.z, v.x, v.y, v.z, a.x, a.y, a.z,
                self.yaw(t)
            )?;
        }
        Ok(())
    }
}

/// Horizontal speed below which the heading is held, m/s.
pub const YAW_HOLD_SPEED: f64 = 0.05;

/// Free function form of [`PiecewiseSpline::sample`].
pub fn sample(spline: &PiecewiseSpline, t: f64) -> Result<SplineSample, OutOfRange> {
    spline.sample(t)
}

/// Free function form of [`PiecewiseSpline::yaw`].
pub fn yaw_profile(spline: &PiecewiseSpline, t: f64) -> f64 {
    spline.yaw(t)
}
