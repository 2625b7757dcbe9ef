//! Colour thresholding and corner extraction.

use std::collections::VecDeque;

use super::PerceptionError;
use crate::sensor::FrameBundle;

/// Masks smaller than this cannot yield corners.
pub const MIN_MASK_PIXELS: usize = 50;

/// Inclusive per-channel RGB range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColorBox {
    pub lo: [u8; 3],
    pub hi: [u8; 3],
}

impl ColorBox {
    pub fn around(color: [u8; 3], tolerance: u8) -> Self {
        Self {
            lo: color.map(|c| c.saturating_sub(tolerance)),
            hi: color.map(|c| c.saturating_add(tolerance)),
        }
    }

    pub fn contains(&self, rgb: [u8; 3]) -> bool {
        (0..3).all(|k| self.lo[k] <= rgb[k] && rgb[k] <= self.hi[k])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn get(&self, u: usize, v: usize) -> bool {
        self.data[v * self.width + u]
    }
}

/// Pixels inside `color`, reduced to the largest 4-connected component
/// (ties go to the component found first in row-major order).
pub fn extract_gate_mask(frame: &FrameBundle, color: &ColorBox) -> Result<Mask, PerceptionError> {
    let (w, h) = (frame.width, frame.height);
    let raw: Vec<bool> = frame.rgb.chunks_exact(3).map(|c| color.contains([c[0], c[1], c[2]])).collect();
    let mut label = vec![0u32; w * h];
    let mut best = (0u32, 0usize);
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !raw[start] || label[start] != 0 {
            continue;
        }
        next += 1;
        label[start] = next;
        queue.push_back(start);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (u, v) = (i % w, i / w);
            let mut visit = |j: usize| {
                if raw[j] && label[j] == 0 {
                    label[j] = next;
                    queue.push_back(j);
                }
            };
            if u > 0 {
                visit(i - 1);
            }
            if u + 1 < w {
                visit(i + 1);
            }
            if v > 0 {
                visit(i - w);
            }
            if v + 1 < h {
                visit(i + w);
            }
        }
        if size > best.1 {
            best = (next, size);
        }
    }
    if best.1 == 0 {
        return Err(PerceptionError::NoGateVisible);
    }
    Ok(Mask {
        width: w,
        height: h,
        data: label.iter().map(|&l| l == best.0).collect(),
    })
}

/// Outer corners of a gate mask as `(u, v)` pixels, ordered top-left,
/// bottom-left, bottom-right, top-right.
///
/// Each corner is the mask pixel extremal along one image diagonal, moved
/// half a pixel outwards so it sits on the pixel boundary.
pub fn extract_corners(mask: &Mask) -> Result<[[f64; 2]; 4], PerceptionError> {
    let n = mask.count();
    if n < MIN_MASK_PIXELS {
        return Err(PerceptionError::DegenerateMask(n));
    }
    // directions: -(u+v), (v-u), (u+v), (u-v)
    let dirs = [(-1.0, -1.0), (-1.0, 1.0), (1.0, 1.0), (1.0, -1.0)];
    let mut best = [(f64::NEG_INFINITY, [0.0f64; 2]); 4];
    let (mut su, mut sv) = (0.0, 0.0);
    for v in 0..mask.height {
        for u in 0..mask.width {
            if !mask.get(u, v) {
                continue;
            }
            let (uf, vf) = (u as f64, v as f64);
            su += uf;
            sv += vf;
            for (k, (du, dv)) in dirs.iter().enumerate() {
                let score = du * uf + dv * vf;
                if score > best[k].0 {
                    best[k] = (score, [uf, vf]);
                }
            }
        }
    }
    let centroid = [su / n as f64, sv / n as f64];
    let mut pts: Vec<[f64; 2]> = best
        .iter()
        .map(|(_, p)| {
            let out = |x: f64, c: f64| if x < c { x - 0.5 } else { x + 0.5 };
            [out(p[0], centroid[0]), out(p[1], centroid[1])]
        })
        .collect();

    for a in 0..4 {
        for b in a + 1..4 {
            for c in b + 1..4 {
                let (p, q, r) = (pts[a], pts[b], pts[c]);
                let area = 0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]));
                if area.abs() < 1.0 {
                    return Err(PerceptionError::DegenerateMask(n));
                }
            }
        }
    }

    // angular order around the centroid, starting from the top-left-most point
    let angle = |p: &[f64; 2]| (p[1] - centroid[1]).atan2(p[0] - centroid[0]);
    let start = (0..4)
        .min_by(|&i, &j| (pts[i][0] + pts[i][1]).total_cmp(&(pts[j][0] + pts[j][1])))
        .unwrap();
    let a0 = angle(&pts[start]);
    let tau = std::f64::consts::TAU;
    pts.sort_by(|p, q| ((a0 - angle(p)).rem_euclid(tau)).total_cmp(&(a0 - angle(q)).rem_euclid(tau)));
    Ok([pts[0], pts[1], pts[2], pts[3]])
}
