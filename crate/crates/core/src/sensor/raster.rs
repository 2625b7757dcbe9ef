//! Per-pixel ray casting of gate frames and an optional ground plane.

use nalgebra::Matrix3;

use super::camera::{body_to_optical, optical_to_body, CameraModel};
use super::flow::FlowField;
use crate::geometry::{Gate, Pose, Quat, Vec3};
use crate::track::Track;

pub const SEG_BACKGROUND: u16 = 0;
pub const SEG_GROUND: u16 = u16::MAX;

/// Segmentation id of the gate with track index `index`.
pub fn gate_seg_id(index: usize) -> u16 {
    (index + 1).min(SEG_GROUND as usize - 1) as u16
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundPlane {
    pub z: f64,
    /// Checkerboard tile size, m.
    pub tile: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub gates: Vec<Gate>,
    pub ground: Option<GroundPlane>,
    pub gate_color: [u8; 3],
    pub background: [u8; 3],
    pub ground_colors: [[u8; 3]; 2],
}

pub const GATE_COLOR: [u8; 3] = [255, 96, 0];
pub const BACKGROUND_COLOR: [u8; 3] = [40, 60, 90];

impl Scene {
    pub fn new(gates: Vec<Gate>) -> Self {
        Self {
            gates,
            ground: None,
            gate_color: GATE_COLOR,
            background: BACKGROUND_COLOR,
            ground_colors: [[70, 70, 70], [150, 150, 150]],
        }
    }

    pub fn from_track(track: &Track) -> Self {
        Self::new(track.gates.clone())
    }

    pub fn with_ground(mut self, ground: GroundPlane) -> Self {
        self.ground = Some(ground);
        self
    }
}

/// Constant camera twist used for rolling-shutter rows.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Motion {
    /// World-frame linear velocity, m/s.
    pub linear: Vec3,
    /// Body-frame angular velocity, rad/s.
    pub angular: Vec3,
}

impl Motion {
    pub fn advance(&self, pose: &Pose, dt: f64) -> Pose {
        Pose::new(
            pose.position + self.linear * dt,
            pose.orientation * Quat::from_scaled_axis(self.angular * dt),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameBundle {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB triples.
    pub rgb: Vec<u8>,
    /// Optical-axis depth, `+inf` on background.
    pub depth: Vec<f32>,
    pub seg: Vec<u16>,
    pub flow: Option<FlowField>,
    pub capture_time: f64,
    pub camera_pose: Pose,
}

impl FrameBundle {
    pub fn rgb_at(&self, u: usize, v: usize) -> [u8; 3] {
        let i = 3 * (v * self.width + u);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn seg_count(&self, id: u16) -> usize {
        self.seg.iter().filter(|&&s| s == id).count()
    }
}

/// Global-shutter render at time 0.
pub fn render(scene: &Scene, camera: &CameraModel, pose: &Pose) -> FrameBundle {
    render_at(scene, camera, pose, &Motion::default(), 0.0)
}

/// Renders with row `r` captured at `capture_time + r * line_time`, the
/// camera moving with `motion` from `pose` at `capture_time`.
pub fn render_at(scene: &Scene, camera: &CameraModel, pose: &Pose, motion: &Motion, capture_time: f64) -> FrameBundle {
    let (w, h) = (camera.width, camera.height);
    let n = w * h;
    let mut depth = vec![f32::INFINITY; n];
    let mut zbuf = vec![f64::INFINITY; n];
    let mut seg = vec![SEG_BACKGROUND; n];
    let mut rgb = Vec::with_capacity(3 * n);
    for _ in 0..n {
        rgb.extend_from_slice(&scene.background);
    }

    let rays: Vec<Vec3> = (0..n)
        .map(|i| optical_to_body(&camera.pixel_ray((i % w) as f64, (i / w) as f64)))
        .collect();
    let line_time = camera.rolling_shutter_line_time;
    let row_poses: Vec<Pose> = (0..h)
        .map(|r| if line_time > 0.0 { motion.advance(pose, r as f64 * line_time) } else { *pose })
        .collect();

    let mut shade = |i: usize, lambda: f64, id: u16, color: [u8; 3]| {
        if lambda < zbuf[i] {
            zbuf[i] = lambda;
            depth[i] = lambda as f32;
            seg[i] = id;
            rgb[3 * i..3 * i + 3].copy_from_slice(&color);
        }
    };

    if let Some(ground) = scene.ground {
        for r in 0..h {
            let rp = &row_poses[r];
            let rot = rp.orientation.to_rotation_matrix();
            for c in 0..w {
                let i = r * w + c;
                let d = rot * rays[i];
                if d.z.abs() < 1e-12 {
                    continue;
                }
                let lambda = (ground.z - rp.position.z) / d.z;
                if lambda <= 0.0 {
                    continue;
                }
                let hit = rp.position + d * lambda;
                let parity = ((hit.x / ground.tile).floor() as i64 + (hit.y / ground.tile).floor() as i64).rem_euclid(2);
                shade(i, lambda, SEG_GROUND, scene.ground_colors[parity as usize]);
            }
        }
    }

    for gate in &scene.gates {
        let Some((c0, c1, r0, r1)) = gate_window(gate, camera, pose, line_time > 0.0) else {
            continue;
        };
        let id = gate_seg_id(gate.index);
        let g_inv = gate.pose.orientation.inverse().to_rotation_matrix();
        for r in r0..=r1 {
            let rp = &row_poses[r];
            let m: Matrix3<f64> = g_inv.matrix() * rp.orientation.to_rotation_matrix().matrix();
            let o = g_inv * (rp.position - gate.pose.position);
            for c in c0..=c1 {
                let i = r * w + c;
                let d = m * rays[i];
                if d.x.abs() < 1e-12 {
                    continue;
                }
                let lambda = -o.x / d.x;
                if lambda <= 0.0 {
                    continue;
                }
                let (y, z) = (o.y + lambda * d.y, o.z + lambda * d.z);
                if gate.on_frame_band(y, z) {
                    shade(i, lambda, id, scene.gate_color);
                }
            }
        }
    }

    FrameBundle {
        width: w,
        height: h,
        rgb,
        depth,
        seg,
        flow: None,
        capture_time,
        camera_pose: *pose,
    }
}

/// Pixel window `(c0, c1, r0, r1)` that can contain the gate, or `None` if
/// the gate is entirely behind the camera. Falls back to the whole image
/// when the projected bounding box is not trustworthy.
fn gate_window(gate: &Gate, camera: &CameraModel, pose: &Pose, rolling: bool) -> Option<(usize, usize, usize, usize)> {
    let full = Some((0, camera.width - 1, 0, camera.height - 1));
    let corners = gate.corners_world(false).map(|p| body_to_optical(&pose.inverse_transform_point(&p)));
    if !rolling && corners.iter().all(|p| p.z <= 0.0) {
        return None;
    }
    if rolling || camera.has_distortion() || corners.iter().any(|p| p.z <= 1e-3) {
        return full;
    }
    let (mut u0, mut u1, mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in &corners {
        let u = camera.fx * p.x / p.z + camera.cx;
        let v = camera.fy * p.y / p.z + camera.cy;
        u0 = u0.min(u);
        u1 = u1.max(u);
        v0 = v0.min(v);
        v1 = v1.max(v);
    }
    let (wm, hm) = (camera.width as f64 - 1.0, camera.height as f64 - 1.0);
    if u1 < -1.0 || v1 < -1.0 || u0 > wm + 1.0 || v0 > hm + 1.0 {
        return None;
    }
    let clamp = |x: f64, hi: f64| x.clamp(0.0, hi) as usize;
    Some((clamp(u0.floor() - 1.0, wm), clamp(u1.ceil() + 1.0, wm), clamp(v0.floor() - 1.0, hm), clamp(v1.ceil() + 1.0, hm)))
}
