//! Track complexity: curvature along a cubic spline through the gate
//! centres, the curvature metric, and next-gate visibility.

use std::io::{self, Write};

use thiserror::Error;

use crate::geometry::{Pose, Vec3};
use crate::sensor::{gate_seg_id, render, CameraModel, Scene};
use crate::track::Track;

/// Arc-length table resolution, m.
pub const ARC_STEP: f64 = 0.01;
/// Tangent norms at or below this are reported as gaps.
pub const MIN_TANGENT: f64 = 1e-9;
/// Default number of visibility samples in a report.
pub const VISIBILITY_SAMPLES: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("need at least 2 gates, got {0}")]
    TooFewGates(usize),
    #[error("gate centres {0} and {1} coincide")]
    CoincidentGates(usize, usize),
    #[error("degenerate tangent at t = {0}")]
    DegenerateTangent(f64),
}

const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

/// Parameter span of one arc-table bracket.
const BRACKET: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcSample {
    pub s: f64,
    pub t: f64,
}

/// Natural cubic spline with chord-length knots.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSpline {
    /// Knot parameters; knot `i` is gate `i`'s centre.
    pub knots: Vec<f64>,
    /// Per segment, per axis, power-basis coefficients in `t - knots[i]`.
    coeffs: Vec<[[f64; 4]; 3]>,
    /// Arc length sampled every [`ARC_STEP`], ending exactly at the total length.
    pub arc: Vec<ArcSample>,
}

fn natural_second_derivatives(h: &[f64], y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on the interior equations
    let k = n - 2;
    let mut diag = vec![0.0; k];
    let mut rhs = vec![0.0; k];
    let mut upper = vec![0.0; k];
    for j in 0..k {
        let i = j + 1;
        diag[j] = 2.0 * (h[i - 1] + h[i]);
        upper[j] = h[i];
        rhs[j] = 6.0 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1]);
    }
    for j in 1..k {
        let w = h[j] / diag[j - 1];
        diag[j] -= w * upper[j - 1];
        rhs[j] -= w * rhs[j - 1];
    }
    m[k] = rhs[k - 1] / diag[k - 1];
    for j in (0..k - 1).rev() {
        m[j + 1] = (rhs[j] - upper[j] * m[j + 2]) / diag[j];
    }
    m
}

impl MetricSpline {
    pub fn fit(points: &[Vec3]) -> Result<Self, MetricsError> {
        let n = points.len();
        if n < 2 {
            return Err(MetricsError::TooFewGates(n));
        }
        let mut h = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            let d = (points[i + 1] - points[i]).norm();
            if !(d > 0.0) {
                return Err(MetricsError::CoincidentGates(i, i + 1));
            }
            h.push(d);
        }
        let mut knots = vec![0.0];
        for d in &h {
            knots.push(knots.last().unwrap() + d);
        }
        let mut coeffs = vec![[[0.0; 4]; 3]; n - 1];
        for axis in 0..3 {
            let y: Vec<f64> = points.iter().map(|p| p[axis]).collect();
            let m = natural_second_derivatives(&h, &y);
            for i in 0..n - 1 {
                let hi = h[i];
                coeffs[i][axis] = [
                    y[i],
                    (y[i + 1] - y[i]) / hi - hi * (2.0 * m[i] + m[i + 1]) / 6.0,
                    0.5 * m[i],
                    (m[i + 1] - m[i]) / (6.0 * hi),
                ];
            }
        }
        let mut spline = Self {
            knots,
            coeffs,
            arc: Vec::new(),
        };
        spline.arc = spline.build_arc_table();
        Ok(spline)
    }

    pub fn from_track(track: &Track) -> Result<Self, MetricsError> {
        Self::fit(&track.gate_centers())
    }

    pub fn t_max(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    pub fn length(&self) -> f64 {
        self.arc.last().map_or(0.0, |a| a.s)
    }

    fn segment(&self, t: f64) -> (usize, f64) {
        let t = t.clamp(0.0, self.t_max());
        let i = self.knots.partition_point(|&k| k <= t).saturating_sub(1).min(self.coeffs.len() - 1);
        (i, t - self.knots[i])
    }

    /// Position and first three derivatives at parameter `t` (clamped to the domain).
    pub fn derivatives(&self, t: f64) -> [Vec3; 4] {
        let (i, x) = self.segment(t);
        let mut out = [Vec3::zeros(); 4];
        for axis in 0..3 {
            let [a, b, c, d] = self.coeffs[i][axis];
            out[0][axis] = a + x * (b + x * (c + x * d));
            out[1][axis] = b + x * (2.0 * c + 3.0 * x * d);
            out[2][axis] = 2.0 * c + 6.0 * x * d;
            out[3][axis] = 6.0 * d;
        }
        out
    }

    pub fn position(&self, t: f64) -> Vec3 {
        self.derivatives(t)[0]
    }

    fn speed(&self, t: f64) -> f64 {
        self.derivatives(t)[1].norm()
    }

    fn arc_between(&self, a: f64, b: f64) -> f64 {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        GL_NODES
            .iter()
            .zip(GL_WEIGHTS)
            .map(|(x, w)| w * self.speed(mid + half * x))
            .sum::<f64>()
            * half
    }

    fn build_arc_table(&self) -> Vec<ArcSample> {
        let mut brackets = vec![ArcSample { s: 0.0, t: 0.0 }];
        for i in 0..self.coeffs.len() {
            let (t0, t1) = (self.knots[i], self.knots[i + 1]);
            let pieces = ((t1 - t0) / BRACKET).ceil().max(1.0) as usize;
            for p in 1..=pieces {
                let a = t0 + (t1 - t0) * (p - 1) as f64 / pieces as f64;
                let b = if p == pieces { t1 } else { t0 + (t1 - t0) * p as f64 / pieces as f64 };
                let s = brackets.last().unwrap().s + self.arc_between(a, b);
                brackets.push(ArcSample { s, t: b });
            }
        }
        let total = brackets.last().unwrap().s;
        let mut table = Vec::with_capacity((total / ARC_STEP) as usize + 2);
        let mut j = 0;
        let mut k = 0usize;
        loop {
            let s = k as f64 * ARC_STEP;
            if s >= total - 1e-12 {
                break;
            }
            while brackets[j + 1].s < s {
                j += 1;
            }
            table.push(ArcSample { s, t: self.invert_in(&brackets[j], &brackets[j + 1], s) });
            k += 1;
        }
        table.push(ArcSample {
            s: total,
            t: self.t_max(),
        });
        table
    }

    fn invert_in(&self, lo: &ArcSample, hi: &ArcSample, s: f64) -> f64 {
        if hi.s <= lo.s {
            return lo.t;
        }
        let mut t = lo.t + (hi.t - lo.t) * (s - lo.s) / (hi.s - lo.s);
        for _ in 0..8 {
            let err = lo.s + self.arc_between(lo.t, t) - s;
            let v = self.speed(t);
            if v <= MIN_TANGENT || err.abs() < 1e-12 {
                break;
            }
            t = (t - err / v).clamp(lo.t, hi.t);
        }
        t
    }

    /// Parameter at arc length `s` (interpolated from the table).
    pub fn t_at_arc(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.length());
        let j = self.arc.partition_point(|a| a.s <= s).clamp(1, self.arc.len() - 1);
        let (a, b) = (self.arc[j - 1], self.arc[j]);
        if b.s <= a.s {
            return a.t;
        }
        a.t + (b.t - a.t) * (s - a.s) / (b.s - a.s)
    }
}

/// Instantaneous curvature `|γ' × γ''| / |γ'|³` from the analytic derivatives.
pub fn curvature_at(spline: &MetricSpline, t: f64) -> Result<f64, MetricsError> {
    let [_, d1, d2, _] = spline.derivatives(t);
    let (x1, y1, z1) = (d1.x, d1.y, d1.z);
    let (x2, y2, z2) = (d2.x, d2.y, d2.z);
    let speed2 = x1 * x1 + y1 * y1 + z1 * z1;
    if speed2.sqrt() <= MIN_TANGENT {
        return Err(MetricsError::DegenerateTangent(t));
    }
    let num = ((z2 * y1 - y2 * z1).powi(2) + (x2 * z1 - z2 * x1).powi(2) + (y2 * x1 - x2 * y1).powi(2)).sqrt();
    Ok(num / speed2.powf(1.5))
}

/// Curvature at every arc-table sample. Degenerate samples go to `gaps`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CurvatureProfile {
    /// `(arc length, curvature)`.
    pub samples: Vec<(f64, f64)>,
    /// Arc lengths where the tangent vanished.
    pub gaps: Vec<f64>,
}

pub fn curvature_profile(spline: &MetricSpline) -> CurvatureProfile {
    let mut out = CurvatureProfile::default();
    for a in &spline.arc {
        match curvature_at(spline, a.t) {
            Ok(k) => out.samples.push((a.s, k)),
            Err(_) => out.gaps.push(a.s),
        }
    }
    out
}

fn trapezoid(samples: &[(f64, f64)]) -> f64 {
    samples.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum()
}

/// Area under curvature versus arc length divided by track length.
pub fn curvature_metric(spline: &MetricSpline) -> f64 {
    metric_from_profile(&curvature_profile(spline), spline.length())
}

fn metric_from_profile(profile: &CurvatureProfile, length: f64) -> f64 {
    if length <= 0.0 {
        return 0.0;
    }
    // integrate runs of consecutive samples; gaps split the runs
    let mut area = 0.0;
    let mut run: Vec<(f64, f64)> = Vec::new();
    let mut gaps = profile.gaps.iter().peekable();
    for &sample in &profile.samples {
        let mut split = false;
        while let Some(&&g) = gaps.peek() {
            if g < sample.0 {
                split = true;
                gaps.next();
            } else {
                break;
            }
        }
        if split {
            area += trapezoid(&run);
            run.clear();
        }
        run.push(sample);
    }
    area += trapezoid(&run);
    area / length
}

/// Index of the first gate still ahead of a racer at parameter `t`.
pub fn next_gate_index(spline: &MetricSpline, t: f64) -> Option<usize> {
    let i = spline.knots.partition_point(|&k| k <= t);
    (i < spline.knots.len()).then_some(i)
}

/// Camera pose at `γ(t)`: yaw along the horizontal tangent, level attitude.
pub fn visibility_pose(spline: &MetricSpline, t: f64) -> Pose {
    let [p, d1, ..] = spline.derivatives(t);
    Pose::from_position_ypr(p, d1.y.atan2(d1.x), 0.0, 0.0)
}

/// Fraction of image pixels showing the next gate's frame from `γ(t)`.
pub fn gate_visibility(track: &Track, camera: &CameraModel, spline: &MetricSpline, t: f64) -> f64 {
    visibility_in_scene(&Scene::from_track(track), camera, spline, t)
}

fn visibility_in_scene(scene: &Scene, camera: &CameraModel, spline: &MetricSpline, t: f64) -> f64 {
    let Some(next) = next_gate_index(spline, t) else {
        return 0.0;
    };
    let frame = render(scene, camera, &visibility_pose(spline, t));
    frame.seg_count(gate_seg_id(next)) as f64 / camera.pixel_count() as f64
}

/// Default visibility camera: 90° horizontal FOV, 320×240.
pub fn default_visibility_camera() -> CameraModel {
    CameraModel::from_hfov(320, 240, std::f64::consts::FRAC_PI_2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityReport {
    pub track_name: String,
    pub curvature_metric: f64,
    /// `(arc length m, curvature 1/m)`.
    pub samples: Vec<(f64, f64)>,
    pub gaps: Vec<f64>,
    /// `(normalised arc, visible fraction)`.
    pub visibility: Vec<(f64, f64)>,
    pub track_length: f64,
    pub camera: CameraModel,
}

pub fn complexity_report(track: &Track, camera: &CameraModel) -> Result<ComplexityReport, MetricsError> {
    complexity_report_with(track, camera, VISIBILITY_SAMPLES)
}

/// As [`complexity_report`] with `n_visibility` evenly spaced visibility samples.
pub fn complexity_report_with(track: &Track, camera: &CameraModel, n_visibility: usize) -> Result<ComplexityReport, MetricsError> {
    let spline = MetricSpline::from_track(track)?;
    let profile = curvature_profile(&spline);
    let length = spline.length();
    let scene = Scene::from_track(track);
    let visibility = (0..n_visibility)
        .map(|k| {
            let f = if n_visibility > 1 { k as f64 / (n_visibility - 1) as f64 } else { 0.0 };
            (f, visibility_in_scene(&scene, camera, &spline, spline.t_at_arc(f * length)))
        })
        .collect();
    Ok(ComplexityReport {
        track_name: track.name.clone(),
        curvature_metric: metric_from_profile(&profile, length),
        samples: profile.samples,
        gaps: profile.gaps,
        visibility,
        track_length: length,
        camera: *camera,
    })
}

impl ComplexityReport {
    pub fn write_curvature_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "arc_m,kappa_per_m")?;
        for (s, k) in &self.samples {
            writeln!(out, "{s:.4},{k:.9}")?;
        }
        Ok(())
    }

    /// Visibility CSV; the first line echoes the camera intrinsics as a `#` comment.
    pub fn write_visibility_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let c = &self.camera;
        writeln!(
            out,
            "# width={} height={} fx={:.6} fy={:.6} cx={:.3} cy={:.3} hfov_deg={:.3}",
            c.width,
            c.height,
            c.fx,
            c.fy,
            c.cx,
            c.cy,
            c.hfov().to_degrees()
        )?;
        writeln!(out, "arc_norm,visibility_frac")?;
        for (s, f) in &self.visibility {
            writeln!(out, "{s:.6},{f:.9}")?;
        }
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "track,curvature_metric,length_m")?;
        writeln!(out, "{},{:.9},{:.4}", self.track_name, self.curvature_metric, self.track_length)
    }
}
