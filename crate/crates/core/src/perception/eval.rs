//! Measurement campaign: fly the track and score gate-centre estimates.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::homography::{estimate_center_3d, BaselineReference};
use super::kf::GateCenterKF;
use super::mask::{extract_corners, extract_gate_mask, ColorBox};
use super::PerceptionError;
use crate::dynamics::{run_spline_mission, DynamicsError, TrackerGains, VehicleParams};
use crate::geometry::{Gate, Pose, RigidState, Vec3};
use crate::race::detect_gate_pass;
use crate::sensor::raster::GATE_COLOR;
use crate::sensor::{project, render, CameraModel, Scene};
use crate::spline::SplineRequest;
use crate::track::Track;

/// Distance of the canonical reference view, m.
pub const REFERENCE_DISTANCE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CornerSource {
    /// Render, threshold and extract corners.
    Rendered,
    /// Project the true outer corners.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerceptionConfig {
    pub camera: CameraModel,
    pub n_measurements: usize,
    pub source: CornerSource,
    /// Gaussian noise added to each corner coordinate, px.
    pub corner_noise_px: f64,
    pub rate_hz: f64,
    pub v_max: f64,
    pub dt: f64,
    pub color_tolerance: u8,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self {
            camera: CameraModel::from_hfov(320, 240, std::f64::consts::FRAC_PI_2),
            n_measurements: 1000,
            source: CornerSource::Rendered,
            corner_noise_px: 0.0,
            rate_hz: 30.0,
            v_max: 10.0,
            dt: 0.005,
            color_tolerance: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRecord {
    pub time: f64,
    pub gate: usize,
    /// Estimate minus truth.
    pub error: Option<Vec3>,
    /// Filtered estimate minus truth.
    pub kf_error: Option<Vec3>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerceptionReport {
    pub records: Vec<FrameRecord>,
    pub mean: f64,
    pub median: f64,
    pub kf_mean: f64,
    pub n_detected: usize,
    pub n_frames: usize,
    /// Frames where nothing usable was seen.
    pub n_skipped: usize,
    /// Detections per gate index.
    pub per_gate: Vec<usize>,
}

#[derive(Serialize)]
struct Summary {
    mean: f64,
    median: f64,
    n_detected: usize,
    n_frames: usize,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Corners of `gate` in the image, with optional pixel noise.
pub fn observe_corners<R: Rng>(
    gate: &Gate,
    camera: &CameraModel,
    pose: &Pose,
    source: CornerSource,
    noise_px: f64,
    color_tolerance: u8,
    rng: &mut R,
) -> Result<[[f64; 2]; 4], PerceptionError> {
    let mut corners = match source {
        CornerSource::Rendered => {
            let frame = render(&Scene::new(vec![gate.clone()]), camera, pose);
            let mask = extract_gate_mask(&frame, &ColorBox::around(GATE_COLOR, color_tolerance))?;
            extract_corners(&mask)?
        }
        CornerSource::Exact => {
            let mut out = [[0.0; 2]; 4];
            for (k, c) in gate.corners_world(false).iter().enumerate() {
                let p = project(camera, pose, c).ok_or(PerceptionError::NoGateVisible)?;
                let inside = p.u >= -0.5 && p.v >= -0.5 && p.u <= camera.width as f64 - 0.5 && p.v <= camera.height as f64 - 0.5;
                if !inside {
                    return Err(PerceptionError::NoGateVisible);
                }
                out[k] = [p.u, p.v];
            }
            out
        }
    };
    if noise_px > 0.0 {
        for c in corners.iter_mut() {
            for x in c.iter_mut() {
                let n: f64 = StandardNormal.sample(rng);
                *x += noise_px * n;
            }
        }
    }
    Ok(corners)
}

/// Flies the track's mission and runs the pipeline on the next gate at
/// `rate_hz` until `n_measurements` detections or the mission ends.
pub fn evaluate_perception<R: Rng>(track: &Track, config: &PerceptionConfig, rng: &mut R) -> Result<PerceptionReport, DynamicsError> {
    let waypoints = track.mission_waypoints();
    let d = waypoints[1] - waypoints[0];
    let start = RigidState::at_rest(waypoints[0], d.y.atan2(d.x));
    let req = SplineRequest::new(waypoints, config.v_max.min(track.v_max), track.a_max);
    let states = run_spline_mission(&start, &req, &TrackerGains::default(), &VehicleParams::default(), config.dt)?;

    let references: Vec<BaselineReference> = track
        .gates
        .iter()
        .map(|g| BaselineReference::canonical(&config.camera, REFERENCE_DISTANCE, g.outer_width, g.outer_height))
        .collect();
    let n_gates = track.gates.len();
    let frame_step = ((1.0 / config.rate_hz) / config.dt).round().max(1.0) as usize;

    let mut records = Vec::new();
    let mut per_gate = vec![0; n_gates];
    let mut next_gate = 0;
    let mut kf: Option<(usize, GateCenterKF)> = None;
    let mut n_detected = 0;
    let mut n_skipped = 0;
    for i in 1..states.len() {
        if next_gate < n_gates && detect_gate_pass(&states[i - 1].position(), &states[i].position(), &track.gates[next_gate]).is_some() {
            next_gate += 1;
        }
        if i % frame_step != 0 {
            continue;
        }
        if next_gate >= n_gates || n_detected >= config.n_measurements {
            break;
        }
        let gate = &track.gates[next_gate];
        let pose = states[i].pose;
        let observed = observe_corners(gate, &config.camera, &pose, config.source, config.corner_noise_px, config.color_tolerance, rng)
            .and_then(|c| estimate_center_3d(&c, &references[next_gate], &config.camera, &pose));
        let mut record = FrameRecord {
            time: states[i].timestamp,
            gate: next_gate,
            error: None,
            kf_error: None,
        };
        match observed {
            Ok(estimate) => {
                let filter = match kf.as_mut() {
                    Some((g, f)) if *g == next_gate => f.update(&estimate).map(|_| *f),
                    _ => Ok(GateCenterKF::from_measurement(estimate)),
                };
                if let Ok(f) = filter {
                    kf = Some((next_gate, f));
                    record.kf_error = Some(f.state - gate.center());
                }
                record.error = Some(estimate - gate.center());
                n_detected += 1;
                per_gate[next_gate] += 1;
            }
            Err(_) => n_skipped += 1,
        }
        records.push(record);
    }

    let mut errs: Vec<f64> = records.iter().filter_map(|r| r.error.map(|e| e.norm())).collect();
    let kf_errs: Vec<f64> = records.iter().filter_map(|r| r.kf_error.map(|e| e.norm())).collect();
    let mean_of = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
    let mean = mean_of(&errs);
    let kf_mean = mean_of(&kf_errs);
    Ok(PerceptionReport {
        n_frames: records.len(),
        median: median(&mut errs),
        mean,
        kf_mean,
        n_detected,
        n_skipped,
        per_gate,
        records,
    })
}

impl PerceptionReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "frame_t,gate_idx,ex,ey,ez,err_norm,detected")?;
        for r in &self.records {
            match r.error {
                Some(e) => writeln!(out, "{:.4},{},{:.6},{:.6},{:.6},{:.6},1", r.time, r.gate, e.x, e.y, e.z, e.norm())?,
                None => writeln!(out, "{:.4},{},nan,nan,nan,nan,0", r.time, r.gate)?,
            }
        }
        Ok(())
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string(&Summary {
            mean: self.mean,
            median: self.median,
            n_detected: self.n_detected,
            n_frames: self.n_frames,
        })
        .expect("summary serialises")
    }
}
