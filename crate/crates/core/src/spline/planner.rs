//! Minimum-jerk planning through waypoints.
//!
//! Each segment is a quintic fixed by its Hermite data (position, velocity,
//! acceleration at both ends). Knot positions are the waypoints; knot
//! velocities and accelerations are the QP unknowns. The integrated squared
//! jerk is quadratic in them and couples only neighbouring knots, so the
//! normal equations are a band matrix of half-width 3 in the ordering
//! `[v0, a0, v1, a1, …]`. One factorisation serves all three axes.

use super::banded::SymBand;
use super::{PiecewiseSpline, PlanError, Segment};
use crate::geometry::Vec3;

/// Global duration scale-up per failed limit check.
pub const SCALE_FACTOR: f64 = 1.1;
pub const MAX_SCALE_ITERATIONS: usize = 20;
/// Sampling period of the limit check (1 kHz).
pub const LIMIT_SAMPLE_DT: f64 = 1e-3;
/// Tolerated overshoot of the sampled limits.
pub const LIMIT_SLACK: f64 = 1.05;

const MIN_SEPARATION: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityConstraint {
    pub waypoint_index: usize,
    pub velocity: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplineRequest {
    pub waypoints: Vec<Vec3>,
    pub v_max: f64,
    pub a_max: f64,
    pub start_velocity: Vec3,
    pub constraints: Vec<VelocityConstraint>,
}

impl SplineRequest {
    /// Rest-to-rest request without velocity constraints.
    pub fn new(waypoints: Vec<Vec3>, v_max: f64, a_max: f64) -> Self {
        Self {
            waypoints,
            v_max,
            a_max,
            start_velocity: Vec3::zeros(),
            constraints: Vec::new(),
        }
    }

    pub fn with_start_velocity(mut self, v: Vec3) -> Self {
        self.start_velocity = v;
        self
    }

    pub fn with_constraint(mut self, waypoint_index: usize, velocity: Vec3) -> Self {
        self.constraints.push(VelocityConstraint {
            waypoint_index,
            velocity,
        });
        self
    }

    fn validate(&self, use_constraints: bool) -> Result<(), PlanError> {
        let n = self.waypoints.len();
        if n < 2 {
            return Err(PlanError::TooFewWaypoints(n));
        }
        if !(self.v_max.is_finite() && self.a_max.is_finite() && self.v_max > 0.0 && self.a_max > 0.0) {
            return Err(PlanError::InfeasibleLimits);
        }
        if self.waypoints.iter().any(|w| !w.iter().all(|c| c.is_finite()))
            || !self.start_velocity.iter().all(|c| c.is_finite())
        {
            return Err(PlanError::NonFinite);
        }
        for i in 1..n {
            if (self.waypoints[i] - self.waypoints[i - 1]).norm() <= MIN_SEPARATION {
                return Err(PlanError::DegenerateWaypoints(i - 1, i));
            }
        }
        if use_constraints {
            for c in &self.constraints {
                if c.waypoint_index >= n {
                    return Err(PlanError::ConstraintIndexOutOfRange(c.waypoint_index));
                }
                if !c.velocity.iter().all(|x| x.is_finite()) {
                    return Err(PlanError::NonFinite);
                }
                let speed = c.velocity.norm();
                if speed > self.v_max {
                    return Err(PlanError::ConflictingConstraint {
                        index: c.waypoint_index,
                        speed,
                        v_max: self.v_max,
                    });
                }
            }
        }
        Ok(())
    }

    /// Pinned knot velocities: start velocity, rest at the end, then constraints.
    fn pinned_velocities(&self, use_constraints: bool) -> Vec<Option<Vec3>> {
        let n = self.waypoints.len();
        let mut pinned = vec![None; n];
        pinned[0] = Some(self.start_velocity);
        pinned[n - 1] = Some(Vec3::zeros());
        if use_constraints {
            for c in &self.constraints {
                pinned[c.waypoint_index] = Some(c.velocity);
            }
        }
        pinned
    }
}

/// Minimum-jerk spline through `req.waypoints`, starting at
/// `req.start_velocity` and ending at rest. Velocity constraints are ignored;
/// see [`plan_min_jerk_vel_constraints`].
pub fn plan_min_jerk(req: &SplineRequest) -> Result<PiecewiseSpline, PlanError> {
    plan(req, false)
}

/// As [`plan_min_jerk`], with the listed knot velocities enforced exactly.
pub fn plan_min_jerk_vel_constraints(req: &SplineRequest) -> Result<PiecewiseSpline, PlanError> {
    plan(req, true)
}

/// Segment durations the planner settles on for a rest-to-rest request.
pub fn allocate_times(waypoints: &[Vec3], v_max: f64, a_max: f64) -> Result<Vec<f64>, PlanError> {
    let req = SplineRequest::new(waypoints.to_vec(), v_max, a_max);
    Ok(plan(&req, false)?.durations())
}

/// Chord length over a reference speed capped by the trapezoidal profile
/// that accelerates over the first half of the chord.
fn heuristic_durations(waypoints: &[Vec3], v_max: f64, a_max: f64) -> Vec<f64> {
    waypoints
        .windows(2)
        .map(|w| {
            let len = (w[1] - w[0]).norm();
            let v_ref = v_max.min((2.0 * a_max * len / 2.0).sqrt());
            len / v_ref
        })
        .collect()
}

fn plan(req: &SplineRequest, use_constraints: bool) -> Result<PiecewiseSpline, PlanError> {
    req.validate(use_constraints)?;
    let pinned = req.pinned_velocities(use_constraints);
    let mut durations = heuristic_durations(&req.waypoints, req.v_max, req.a_max);
    let mut spline = solve(&req.waypoints, &durations, &pinned)?;
    for _ in 0..MAX_SCALE_ITERATIONS {
        if within_limits(&spline, req.v_max, req.a_max) {
            return Ok(spline);
        }
        for d in &mut durations {
            *d *= SCALE_FACTOR;
        }
        spline = solve(&req.waypoints, &durations, &pinned)?;
    }
    if !within_limits(&spline, req.v_max, req.a_max) {
        log::warn!(
            "spline still exceeds limits after {MAX_SCALE_ITERATIONS} scale-ups (v_max={}, a_max={})",
            req.v_max,
            req.a_max
        );
    }
    Ok(spline)
}

fn within_limits(spline: &PiecewiseSpline, v_max: f64, a_max: f64) -> bool {
    let total = spline.total_duration();
    let n = (total / LIMIT_SAMPLE_DT).floor() as usize;
    (0..=n)
        .map(|k| k as f64 * LIMIT_SAMPLE_DT)
        .chain(std::iter::once(total))
        .all(|t| {
            let s = spline.sample_clamped(t);
            s.velocity.norm() <= v_max && s.acceleration.norm() <= a_max
        })
}

/// Minimum-jerk spline for fixed segment durations. `pinned[i]` fixes the
/// velocity at waypoint `i`; accelerations are free except at both ends,
/// where they are zero.
pub fn min_jerk_with_durations(
    waypoints: &[Vec3],
    durations: &[f64],
    pinned: &[Option<Vec3>],
) -> Result<PiecewiseSpline, PlanError> {
    if waypoints.len() < 2
        || durations.len() + 1 != waypoints.len()
        || pinned.len() != waypoints.len()
        || durations.iter().any(|&d| !(d > 0.0 && d.is_finite()))
    {
        return Err(PlanError::InvalidDurations);
    }
    solve(waypoints, durations, pinned)
}

/// Hermite-to-coefficient map for c3..c5 of a quintic over [0, T]; columns
/// are `[p0, v0, a0, p1, v1, a1]`.
fn hermite_high_rows(t: f64) -> [[f64; 6]; 3] {
    let (t2, t3, t4, t5) = (t * t, t * t * t, t.powi(4), t.powi(5));
    [
        [-20.0, -12.0 * t, -3.0 * t2, 20.0, -8.0 * t, t2].map(|x| x / (2.0 * t3)),
        [30.0, 16.0 * t, 3.0 * t2, -30.0, 14.0 * t, -2.0 * t2].map(|x| x / (2.0 * t4)),
        [-12.0, -6.0 * t, -t2, 12.0, -6.0 * t, t2].map(|x| x / (2.0 * t5)),
    ]
}

/// ∫₀ᵀ jerk² dτ as a quadratic form in (c3, c4, c5).
fn jerk_gram(t: f64) -> [[f64; 3]; 3] {
    let (t2, t3, t4, t5) = (t * t, t * t * t, t.powi(4), t.powi(5));
    [
        [36.0 * t, 72.0 * t2, 120.0 * t3],
        [72.0 * t2, 192.0 * t3, 360.0 * t4],
        [120.0 * t3, 360.0 * t4, 720.0 * t5],
    ]
}

/// Segment cost as a 6×6 quadratic form over its Hermite data.
fn segment_cost(t: f64) -> [[f64; 6]; 6] {
    let m = hermite_high_rows(t);
    let q = jerk_gram(t);
    let mut h = [[0.0; 6]; 6];
    for i in 0..6 {
        for j in 0..6 {
            let mut s = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    s += m[a][i] * q[a][b] * m[b][j];
                }
            }
            h[i][j] = s;
        }
    }
    h
}

fn quintic_coeffs(t: f64, b: [f64; 6]) -> [f64; 6] {
    let m = hermite_high_rows(t);
    let hi = |r: &[f64; 6]| r.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>();
    [b[0], b[1], 0.5 * b[2], hi(&m[0]), hi(&m[1]), hi(&m[2])]
}

fn solve(waypoints: &[Vec3], durations: &[f64], pinned: &[Option<Vec3>]) -> Result<PiecewiseSpline, PlanError> {
    let knots = waypoints.len();
    let nvar = 2 * knots;
    let mut a = SymBand::<3>::zeros(nvar);
    let mut rhs = vec![vec![0.0; nvar]; 3];

    // Positions in the local Hermite vector sit at slots 0 and 3; the
    // knot (v, a) unknowns at slots 1, 2, 4, 5.
    const VAR_SLOTS: [usize; 4] = [1, 2, 4, 5];
    for (s, &t) in durations.iter().enumerate() {
        let h = segment_cost(t);
        let var_index = |slot: usize| match slot {
            1 => 2 * s,
            2 => 2 * s + 1,
            4 => 2 * s + 2,
            _ => 2 * s + 3,
        };
        for &i in &VAR_SLOTS {
            for &j in &VAR_SLOTS {
                let (gi, gj) = (var_index(i), var_index(j));
                if gi >= gj {
                    a.add(gi, gj, h[i][j]);
                }
            }
            for axis in 0..3 {
                let p0 = waypoints[s][axis];
                let p1 = waypoints[s + 1][axis];
                rhs[axis][var_index(i)] -= h[i][0] * p0 + h[i][3] * p1;
            }
        }
    }

    for (k, pin) in pinned.iter().enumerate() {
        if let Some(v) = pin {
            a.pin(2 * k, &[v.x, v.y, v.z], &mut rhs);
        }
    }
    a.pin(1, &[0.0; 3], &mut rhs);
    a.pin(nvar - 1, &[0.0; 3], &mut rhs);

    let chol = a.factor().ok_or(PlanError::InvalidDurations)?;
    let sol: Vec<Vec<f64>> = rhs.iter().map(|r| chol.solve(r)).collect();

    let segments = durations
        .iter()
        .enumerate()
        .map(|(s, &t)| {
            let mut coeffs = [[0.0; 6]; 3];
            for axis in 0..3 {
                let x = &sol[axis];
                coeffs[axis] = quintic_coeffs(
                    t,
                    [
                        waypoints[s][axis],
                        x[2 * s],
                        x[2 * s + 1],
                        waypoints[s + 1][axis],
                        x[2 * s + 2],
                        x[2 * s + 3],
                    ],
                );
            }
            Segment { duration: t, coeffs }
        })
        .collect();
    Ok(PiecewiseSpline::from_segments(segments))
}
