//! Geometric race rules: gate passthrough, frame contact, ranking.

use std::cmp::Ordering;

use crate::geometry::{Aabb, Gate, Vec3};

/// Half-thickness of the gate frame for collision purposes, m.
pub const FRAME_CONTACT_DISTANCE: f64 = 0.1;

/// Returns the world crossing point if `prev → curr` passes through the
/// gate opening along its +X normal.
pub fn detect_gate_pass(prev: &Vec3, curr: &Vec3, gate: &Gate) -> Option<Vec3> {
    let a = gate.pose.inverse_transform_point(prev);
    let b = gate.pose.inverse_transform_point(curr);
    if !(a.x < 0.0 && b.x >= 0.0) {
        return None;
    }
    let s = -a.x / (b.x - a.x);
    let p = a + (b - a) * s;
    gate.inside_inner(p.y, p.z).then(|| gate.pose.transform_point(&Vec3::new(0.0, p.y, p.z)))
}

/// True if the racer at `curr` (coming from `prev`) touches the frame band.
pub fn touches_frame(prev: &Vec3, curr: &Vec3, gate: &Gate) -> bool {
    let b = gate.pose.inverse_transform_point(curr);
    if b.x.abs() < FRAME_CONTACT_DISTANCE && gate.on_frame_band(b.y, b.z) {
        return true;
    }
    let a = gate.pose.inverse_transform_point(prev);
    if (a.x < 0.0) != (b.x < 0.0) && a.x != b.x {
        let s = -a.x / (b.x - a.x);
        let p = a + (b - a) * s;
        return gate.on_frame_band(p.y, p.z);
    }
    false
}

/// Environment contact: any gate frame, or leaving the world box.
pub fn env_contact(prev: &Vec3, curr: &Vec3, gates: &[Gate], bounds: &Aabb) -> bool {
    !bounds.contains(curr) || gates.iter().any(|g| touches_frame(prev, curr, g))
}

/// Scoring view of one racer.
#[derive(Debug, Clone, PartialEq)]
pub struct Standing {
    pub racer_id: String,
    pub gates_passed: usize,
    pub finish_time: Option<f64>,
    pub penalty_seconds: f64,
    pub disqualified: bool,
}

impl Standing {
    /// Finish time (or the cutoff) plus penalties.
    pub fn adjusted_time(&self, cutoff: f64) -> f64 {
        self.finish_time.unwrap_or(cutoff) + self.penalty_seconds
    }
}

/// Total order: qualified first, more gates first, lower adjusted time
/// first, then racer id.
pub fn compare_standings(a: &Standing, b: &Standing, cutoff: f64) -> Ordering {
    a.disqualified
        .cmp(&b.disqualified)
        .then(b.gates_passed.cmp(&a.gates_passed))
        .then(a.adjusted_time(cutoff).total_cmp(&b.adjusted_time(cutoff)))
        .then_with(|| a.racer_id.cmp(&b.racer_id))
}

/// Racer ids in finishing order.
pub fn rank(standings: &[Standing], cutoff: f64) -> Vec<String> {
    let mut v: Vec<&Standing> = standings.iter().collect();
    v.sort_by(|a, b| compare_standings(a, b, cutoff));
    v.into_iter().map(|s| s.racer_id.clone()).collect()
}

/// Leaderboard text shared by the race runner and the log evaluator.
pub fn leaderboard(standings: &[Standing], cutoff: f64) -> String {
    let mut v: Vec<&Standing> = standings.iter().collect();
    v.sort_by(|a, b| compare_standings(a, b, cutoff));
    let mut out = String::from("rank racer gates time_s penalty_s adjusted_s status\n");
    for (i, s) in v.iter().enumerate() {
        let status = if s.disqualified {
            "dq"
        } else if s.finish_time.is_some() {
            "finished"
        } else {
            "dnf"
        };
        let time = s.finish_time.unwrap_or(cutoff);
        out.push_str(&format!(
            "{} {} {} {:.3} {:.3} {:.3} {}\n",
            i + 1,
            s.racer_id,
            s.gates_passed,
            time,
            s.penalty_seconds,
            s.adjusted_time(cutoff),
            status
        ));
    }
    out
}
