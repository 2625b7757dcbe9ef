//! Ground-truth optical flow from depth and camera motion.

use super::camera::{back_project, project, CameraModel};
use super::raster::{render, Scene, SEG_BACKGROUND};
use crate::geometry::Pose;

/// Per-pixel flow in pixels per frame, indexed like the t1 raster.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[f32; 2]>,
    pub valid: Vec<bool>,
}

impl FlowField {
    pub fn at(&self, u: usize, v: usize) -> Option<[f32; 2]> {
        let i = v * self.width + u;
        self.valid[i].then(|| self.data[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Flow at t1: for each surface pixel, where it was in the t0 image, as
/// `pixel(t1) - pixel(t0)`. Background pixels are zero and invalid.
pub fn optical_flow(scene: &Scene, camera: &CameraModel, pose_t0: &Pose, pose_t1: &Pose) -> FlowField {
    let frame = render(scene, camera, pose_t1);
    let (w, h) = (camera.width, camera.height);
    let mut data = vec![[0.0f32; 2]; w * h];
    let mut valid = vec![false; w * h];
    for v in 0..h {
        for u in 0..w {
            let i = v * w + u;
            if frame.seg[i] == SEG_BACKGROUND {
                continue;
            }
            let p = back_project(camera, pose_t1, u as f64, v as f64, frame.depth[i] as f64);
            if let Some(q) = project(camera, pose_t0, &p) {
                data[i] = [(u as f64 - q.u) as f32, (v as f64 - q.v) as f32];
                valid[i] = true;
            }
        }
    }
    FlowField {
        width: w,
        height: h,
        data,
        valid,
    }
}
