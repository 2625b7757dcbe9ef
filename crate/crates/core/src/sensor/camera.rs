//! Pinhole camera with Brown–Conrady distortion.
//!
//! The camera looks along its body +X axis (Y left, Z up). Image
//! coordinates use the optical frame: x right, y down, z forward, so
//! `x_o = -y_b`, `y_o = -z_b`, `z_o = x_b`. Pixel centres sit at integer
//! coordinates.

use thiserror::Error;

use crate::geometry::{Pose, Vec3};

/// Points closer than this along the optical axis are not projected.
pub const MIN_DEPTH: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("invalid camera: {0}")]
    Invalid(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub k1: f64,
    pub k2: f64,
    pub p1: f64,
    pub p2: f64,
    /// Seconds between successive rows; 0 is a global shutter.
    pub rolling_shutter_line_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl CameraModel {
    /// Square pixels, principal point at the image centre, no distortion.
    pub fn from_hfov(width: usize, height: usize, hfov: f64) -> Self {
        let f = 0.5 * width as f64 / (0.5 * hfov).tan();
        Self {
            width,
            height,
            fx: f,
            fy: f,
            cx: 0.5 * (width as f64 - 1.0),
            cy: 0.5 * (height as f64 - 1.0),
            k1: 0.0,
            k2: 0.0,
            p1: 0.0,
            p2: 0.0,
            rolling_shutter_line_time: 0.0,
        }
    }

    pub fn hfov(&self) -> f64 {
        2.0 * (0.5 * self.width as f64 / self.fx).atan()
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        if self.width == 0 || self.height == 0 {
            return Err(CameraError::Invalid("image size must be positive"));
        }
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(CameraError::Invalid("focal lengths must be positive"));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(CameraError::Invalid("principal point outside image"));
        }
        if ![self.k1, self.k2, self.p1, self.p2].iter().all(|k| k.is_finite()) {
            return Err(CameraError::Invalid("distortion must be finite"));
        }
        if !(self.rolling_shutter_line_time >= 0.0 && self.rolling_shutter_line_time.is_finite()) {
            return Err(CameraError::Invalid("line time must be >= 0"));
        }
        Ok(())
    }

    pub fn has_distortion(&self) -> bool {
        self.k1 != 0.0 || self.k2 != 0.0 || self.p1 != 0.0 || self.p2 != 0.0
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Forward distortion of normalised coordinates.
    pub fn distort(&self, x: f64, y: f64) -> (f64, f64) {
        let r2 = x * x + y * y;
        let radial = 1.0 + self.k1 * r2 + self.k2 * r2 * r2;
        (
            x * radial + 2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x),
            y * radial + self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y,
        )
    }

    /// Inverts [`distort`](Self::distort) by Newton iteration to 1e-8 px.
    pub fn undistort(&self, xd: f64, yd: f64) -> (f64, f64) {
        if !self.has_distortion() {
            return (xd, yd);
        }
        let tol = 1e-8 / self.fx.max(self.fy);
        let (mut x, mut y) = (xd, yd);
        for _ in 0..50 {
            let (fx, fy) = self.distort(x, y);
            let (ex, ey) = (fx - xd, fy - yd);
            if ex.abs() < tol && ey.abs() < tol {
                break;
            }
            let r2 = x * x + y * y;
            let radial = 1.0 + self.k1 * r2 + self.k2 * r2 * r2;
            let dradial = 2.0 * self.k1 + 4.0 * self.k2 * r2;
            let j00 = radial + x * dradial * x + 2.0 * self.p1 * y + 6.0 * self.p2 * x;
            let j01 = x * dradial * y + 2.0 * self.p1 * x + 2.0 * self.p2 * y;
            let j10 = y * dradial * x + 2.0 * self.p1 * x + 2.0 * self.p2 * y;
            let j11 = radial + y * dradial * y + 6.0 * self.p1 * y + 2.0 * self.p2 * x;
            let det = j00 * j11 - j01 * j10;
            if det.abs() < 1e-15 {
                break;
            }
            x -= (j11 * ex - j01 * ey) / det;
            y -= (-j10 * ex + j00 * ey) / det;
        }
        (x, y)
    }

    /// Optical-frame point to pixel, or `None` behind the camera.
    pub fn project_optical(&self, p: &Vec3) -> Option<Projection> {
        if p.z <= MIN_DEPTH {
            return None;
        }
        let (xd, yd) = self.distort(p.x / p.z, p.y / p.z);
        Some(Projection {
            u: self.fx * xd + self.cx,
            v: self.fy * yd + self.cy,
            depth: p.z,
        })
    }

    /// Direction in the optical frame with unit z for pixel `(u, v)`.
    pub fn pixel_ray(&self, u: f64, v: f64) -> Vec3 {
        let (x, y) = self.undistort((u - self.cx) / self.fx, (v - self.cy) / self.fy);
        Vec3::new(x, y, 1.0)
    }
}

pub fn body_to_optical(p: &Vec3) -> Vec3 {
    Vec3::new(-p.y, -p.z, p.x)
}

pub fn optical_to_body(p: &Vec3) -> Vec3 {
    Vec3::new(p.z, -p.x, -p.y)
}

/// World point to pixel and optical depth, or `None` if behind the camera.
pub fn project(camera: &CameraModel, pose: &Pose, p_world: &Vec3) -> Option<Projection> {
    camera.project_optical(&body_to_optical(&pose.inverse_transform_point(p_world)))
}

/// Pixel plus optical depth back to a world point.
pub fn back_project(camera: &CameraModel, pose: &Pose, u: f64, v: f64, depth: f64) -> Vec3 {
    let ray = camera.pixel_ray(u, v) * depth;
    pose.transform_point(&optical_to_body(&ray))
}
