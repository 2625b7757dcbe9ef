//! Contrast-threshold event generation from a frame sequence.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use super::raster::FrameBundle;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EventError {
    #[error("need at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error("capture times must strictly increase (frame {0})")]
    NonMonotonicTimestamps(usize),
    #[error("frame {0} has a different size")]
    SizeMismatch(usize),
    #[error("contrast threshold must be positive")]
    InvalidThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub x: u32,
    pub y: u32,
    pub t: f64,
    /// +1 or -1.
    pub polarity: i8,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventCameraParams {
    pub contrast_threshold: f64,
    pub threshold_jitter_sigma: f64,
    pub log_eps: f64,
}

impl Default for EventCameraParams {
    fn default() -> Self {
        Self {
            contrast_threshold: 0.2,
            threshold_jitter_sigma: 0.0,
            log_eps: 1e-3,
        }
    }
}

/// Smallest per-pixel threshold after jitter.
pub const MIN_THRESHOLD: f64 = 1e-3;

/// A change within this fraction of a threshold below `k * C` still counts
/// as `k` crossings, so returning to an earlier level fires symmetrically.
pub const LEVEL_TOLERANCE: f64 = 1e-9;

/// Rec. 601 luma in [0, 1].
pub fn luma(rgb: [u8; 3]) -> f64 {
    (0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64) / 255.0
}

/// Log-luma image `ln(luma + eps)`.
pub fn log_intensity(frame: &FrameBundle, eps: f64) -> Vec<f64> {
    frame
        .rgb
        .chunks_exact(3)
        .map(|c| (luma([c[0], c[1], c[2]]) + eps).ln())
        .collect()
}

/// One threshold per pixel: `C + N(0, sigma)`, clamped to [`MIN_THRESHOLD`].
pub fn pixel_thresholds<R: Rng>(n: usize, params: &EventCameraParams, rng: &mut R) -> Vec<f64> {
    let c = params.contrast_threshold;
    if params.threshold_jitter_sigma == 0.0 {
        return vec![c; n];
    }
    let normal = Normal::new(0.0, params.threshold_jitter_sigma).expect("finite sigma");
    (0..n).map(|_| (c + normal.sample(rng)).max(MIN_THRESHOLD)).collect()
}

/// Events between consecutive log-intensity images of width `width`.
///
/// Each pixel keeps a reference level. Whenever the new level is `k ≥ 1`
/// thresholds away from the reference, `k` events fire at the times where
/// the linear ramp between the two frames crosses each threshold, and the
/// reference moves by `k` thresholds. Output is sorted by `(t, y, x)`.
pub fn events_from_log_frames(
    width: usize,
    times: &[f64],
    frames: &[Vec<f64>],
    thresholds: &[f64],
) -> Result<Vec<Event>, EventError> {
    if frames.len() < 2 {
        return Err(EventError::TooFewFrames(frames.len()));
    }
    let n = frames[0].len();
    for (k, f) in frames.iter().enumerate() {
        if f.len() != n {
            return Err(EventError::SizeMismatch(k));
        }
        if k > 0 && times[k] <= times[k - 1] {
            return Err(EventError::NonMonotonicTimestamps(k));
        }
    }
    if thresholds.iter().any(|c| !(*c > 0.0)) {
        return Err(EventError::InvalidThreshold);
    }
    let mut out = Vec::new();
    let mut reference = frames[0].clone();
    for k in 1..frames.len() {
        let (t0, t1) = (times[k - 1], times[k]);
        let (prev, next) = (&frames[k - 1], &frames[k]);
        for i in 0..n {
            let c = thresholds[i];
            let delta = next[i] - reference[i];
            let count = (delta.abs() / c + LEVEL_TOLERANCE).floor() as usize;
            if count == 0 {
                continue;
            }
            let sign = delta.signum();
            let ramp = next[i] - prev[i];
            for j in 1..=count {
                let level = reference[i] + sign * j as f64 * c;
                let frac = if ramp == 0.0 { 1.0 } else { ((level - prev[i]) / ramp).clamp(0.0, 1.0) };
                out.push(Event {
                    x: (i % width) as u32,
                    y: (i / width) as u32,
                    t: t0 + frac * (t1 - t0),
                    polarity: sign as i8,
                });
            }
            reference[i] += sign * count as f64 * c;
        }
    }
    out.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.y.cmp(&b.y)).then(a.x.cmp(&b.x)));
    Ok(out)
}

/// Events for a rendered frame sequence; per-pixel thresholds are drawn
/// once from `rng`.
pub fn generate_events<R: Rng>(frames: &[FrameBundle], params: &EventCameraParams, rng: &mut R) -> Result<Vec<Event>, EventError> {
    if !(params.contrast_threshold > 0.0 && params.log_eps > 0.0) {
        return Err(EventError::InvalidThreshold);
    }
    if frames.len() < 2 {
        return Err(EventError::TooFewFrames(frames.len()));
    }
    let width = frames[0].width;
    for (k, f) in frames.iter().enumerate() {
        if f.width != width || f.height != frames[0].height {
            return Err(EventError::SizeMismatch(k));
        }
    }
    let logs: Vec<Vec<f64>> = frames.iter().map(|f| log_intensity(f, params.log_eps)).collect();
    let times: Vec<f64> = frames.iter().map(|f| f.capture_time).collect();
    let thresholds = pixel_thresholds(logs[0].len(), params, rng);
    events_from_log_frames(width, &times, &logs, &thresholds)
}
