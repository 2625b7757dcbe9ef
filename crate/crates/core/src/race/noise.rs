//! Gate-pose corruption for tiers 2 and 3.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{Pose, Quat, Vec3};
use crate::track::Track;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateNoise {
    /// Per-axis position standard deviation, m.
    pub sigma_pos: f64,
    /// Yaw standard deviation, rad.
    pub sigma_yaw: f64,
}

impl Default for GateNoise {
    fn default() -> Self {
        Self {
            sigma_pos: 1.0,
            sigma_yaw: 5f64.to_radians(),
        }
    }
}

impl GateNoise {
    pub fn none() -> Self {
        Self {
            sigma_pos: 0.0,
            sigma_yaw: 0.0,
        }
    }
}

/// Gate poses as the race API reports them. Tier 1 gets ground truth; tiers
/// 2 and 3 get one fixed Gaussian draw per gate (x, y, z, then yaw).
pub fn noisy_gate_poses<R: Rng>(track: &Track, tier: u8, noise: &GateNoise, rng: &mut R) -> Vec<Pose> {
    let truth = track.gates.iter().map(|g| g.pose);
    if tier == 1 {
        return truth.collect();
    }
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    truth
        .map(|p| {
            let d = Vec3::new(unit.sample(rng), unit.sample(rng), unit.sample(rng)) * noise.sigma_pos;
            let dyaw = unit.sample(rng) * noise.sigma_yaw;
            Pose::new(p.position + d, Quat::from_axis_angle(&Vec3::z_axis(), dyaw) * p.orientation)
        })
        .collect()
}
