//! Voxelised gate geometry and its signed distance field.
//!
//! Voxel `(i, j, k)` has its centre at `origin + (i + ½, j + ½, k + ½) · resolution`
//! and linear index `i + nx · (j + ny · k)`.
//!
//! Dump formats (both little-endian where it matters):
//!
//! * grid: text header `voxgrid v1 nx ny nz resolution ox oy oz\n`, then
//!   `ceil(n / 8)` bytes of occupancy bits in index order, least significant
//!   bit first;
//! * sdf: header `sdf v1 nx ny nz resolution ox oy oz\n`, then one `f32` per
//!   voxel in index order.

use std::io::{self, Write};

use thiserror::Error;

use crate::geometry::{Gate, Vec3};
use crate::track::Track;

/// Most voxels a grid may hold.
pub const MAX_VOXELS: usize = 64 * 1024 * 1024;
/// Gate solid half-thickness along the normal, m.
pub const GATE_HALF_THICKNESS: f64 = 0.05;
/// Distance stored when no voxel of the opposite kind exists.
pub const FAR: f32 = 1e9;
pub const MIN_RESOLUTION: f64 = 0.05;
pub const MAX_RESOLUTION: f64 = 2.0;
/// Maximum steps taken by [`nearest_free_point`].
pub const MAX_FREE_STEPS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("resolution {0} outside [0.05, 2] m")]
    InvalidResolution(f64),
    #[error("grid of {0} voxels exceeds the 64M limit")]
    GridTooLarge(usize),
    #[error("no free space found within {0} steps")]
    NoFreeSpaceFound(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub origin: Vec3,
    pub resolution: f64,
    pub dims: [usize; 3],
    bits: Vec<u64>,
}

/// Distance from a gate-local point to the frame solid.
fn distance_to_frame(gate: &Gate, local: &Vec3) -> f64 {
    let dx = (local.x.abs() - GATE_HALF_THICKNESS).max(0.0);
    let (ay, az) = (local.y.abs(), local.z.abs());
    let (ow, oh) = (0.5 * gate.outer_width, 0.5 * gate.outer_height);
    let (iw, ih) = (0.5 * gate.inner_width, 0.5 * gate.inner_height);
    let planar = if ay > ow || az > oh {
        ((ay - ow).max(0.0)).hypot((az - oh).max(0.0))
    } else if ay < iw && az < ih {
        (iw - ay).min(ih - az)
    } else {
        0.0
    };
    dx.hypot(planar)
}

impl VoxelGrid {
    pub fn empty(origin: Vec3, resolution: f64, dims: [usize; 3]) -> Result<Self, EnvError> {
        let n = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d.max(1))).unwrap_or(usize::MAX);
        if n > MAX_VOXELS {
            return Err(EnvError::GridTooLarge(n));
        }
        Ok(Self {
            origin,
            resolution,
            dims: dims.map(|d| d.max(1)),
            bits: vec![0; n.div_ceil(64)],
        })
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let (nx, ny) = (self.dims[0], self.dims[1]);
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    pub fn center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * self.resolution
    }

    pub fn get(&self, idx: usize) -> bool {
        self.bits[idx / 64] >> (idx % 64) & 1 == 1
    }

    pub fn set(&mut self, idx: usize, occupied: bool) {
        let mask = 1u64 << (idx % 64);
        if occupied {
            self.bits[idx / 64] |= mask;
        } else {
            self.bits[idx / 64] &= !mask;
        }
    }

    pub fn is_occupied(&self, i: usize, j: usize, k: usize) -> bool {
        self.get(self.index(i, j, k))
    }

    pub fn occupied_count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Voxel containing `p`, if inside the grid.
    pub fn voxel_of(&self, p: &Vec3) -> Option<[usize; 3]> {
        let g = (p - self.origin) / self.resolution;
        let mut out = [0; 3];
        for a in 0..3 {
            if !(g[a] >= 0.0) || g[a] >= self.dims[a] as f64 {
                return None;
            }
            out[a] = g[a] as usize;
        }
        Some(out)
    }

    pub fn write_dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        write_header(&mut out, "voxgrid", self)?;
        let n = self.len();
        let mut bytes = vec![0u8; n.div_ceil(8)];
        for idx in 0..n {
            if self.get(idx) {
                bytes[idx / 8] |= 1 << (idx % 8);
            }
        }
        out.write_all(&bytes)
    }
}

fn write_header<W: Write>(out: &mut W, tag: &str, g: &VoxelGrid) -> io::Result<()> {
    writeln!(
        out,
        "{tag} v1 {} {} {} {} {} {} {}",
        g.dims[0], g.dims[1], g.dims[2], g.resolution, g.origin.x, g.origin.y, g.origin.z
    )
}

/// Occupancy of the track's gate frames over its world bounds. A voxel is
/// occupied iff its centre is within half a voxel of a frame solid.
pub fn build_voxel_grid(track: &Track, resolution: f64) -> Result<VoxelGrid, EnvError> {
    if !(MIN_RESOLUTION..=MAX_RESOLUTION).contains(&resolution) {
        return Err(EnvError::InvalidResolution(resolution));
    }
    let b = &track.world_bounds;
    let extent = b.extent();
    let dims = [0, 1, 2].map(|a| (extent[a] / resolution).ceil().max(1.0) as usize);
    let n = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).unwrap_or(usize::MAX);
    if n > MAX_VOXELS {
        return Err(EnvError::GridTooLarge(n));
    }
    let mut grid = VoxelGrid::empty(b.min_v(), resolution, dims)?;
    voxelize_gates(&mut grid, &track.gates);
    Ok(grid)
}

/// Marks voxels within half a voxel of any gate frame.
pub fn voxelize_gates(grid: &mut VoxelGrid, gates: &[Gate]) {
    let reach = 0.5 * grid.resolution;
    for gate in gates {
        let r = 0.5 * gate.outer_width.hypot(gate.outer_height).hypot(2.0 * GATE_HALF_THICKNESS) + reach;
        let c = gate.center();
        let lo = (c - Vec3::repeat(r) - grid.origin) / grid.resolution;
        let hi = (c + Vec3::repeat(r) - grid.origin) / grid.resolution;
        let dims = grid.dims;
        let range = |a: usize| {
            let l = (lo[a] - 1.0).floor().max(0.0) as usize;
            let h = ((hi[a] + 1.0).ceil().max(0.0) as usize).min(dims[a]);
            l..h
        };
        for k in range(2) {
            for j in range(1) {
                for i in range(0) {
                    let local = gate.pose.inverse_transform_point(&grid.center(i, j, k));
                    if distance_to_frame(gate, &local) <= reach {
                        let idx = grid.index(i, j, k);
                        grid.set(idx, true);
                    }
                }
            }
        }
    }
}

const INF: i64 = i64::MAX / 4;

/// Squared 1D distance transform of `f` (lower envelope of parabolas).
fn edt_1d(f: &[i64], out: &mut [i64], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    let n = f.len();
    v.clear();
    z.clear();
    for q in 0..n {
        if f[q] >= INF {
            continue;
        }
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let s = ((f[q] + (q * q) as i64) - (f[p] + (p * p) as i64)) as f64 / (2 * (q - p)) as f64;
                    if s <= *z.last().unwrap() {
                        v.pop();
                        z.pop();
                    } else {
                        v.push(q);
                        z.push(s);
                        break;
                    }
                }
            }
        }
    }
    if v.is_empty() {
        out.fill(INF);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while k + 1 < v.len() && z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as i64 - p as i64;
        *o = d * d + f[p];
    }
}

/// Squared voxel distance from each voxel to the nearest voxel where `source` is true.
pub fn squared_edt(dims: [usize; 3], source: impl Fn(usize) -> bool) -> Vec<i64> {
    let [nx, ny, nz] = dims;
    let n = nx * ny * nz;
    let mut d: Vec<i64> = (0..n).map(|i| if source(i) { 0 } else { INF }).collect();
    let longest = nx.max(ny).max(nz);
    let (mut line, mut out) = (vec![0i64; longest], vec![0i64; longest]);
    let (mut v, mut z) = (Vec::with_capacity(longest), Vec::with_capacity(longest));
    let strides = [1, nx, nx * ny];
    for axis in 0..3 {
        let len = dims[axis];
        let stride = strides[axis];
        for start in 0..n {
            // visit each line once, from its first element
            if (start / stride) % len != 0 {
                continue;
            }
            for t in 0..len {
                line[t] = d[start + t * stride];
            }
            edt_1d(&line[..len], &mut out[..len], &mut v, &mut z);
            for t in 0..len {
                d[start + t * stride] = out[t];
            }
        }
    }
    d
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignedDistanceField {
    pub origin: Vec3,
    pub resolution: f64,
    pub dims: [usize; 3],
    /// Per-voxel signed distance, m; [`FAR`] when nothing of the other kind exists.
    pub values: Vec<f32>,
}

/// Distance value stored for a squared voxel distance.
pub fn lattice_distance(resolution: f64, squared: i64) -> f32 {
    if squared >= INF {
        FAR
    } else {
        (resolution * (squared as f64).sqrt()) as f32
    }
}

/// Exact Euclidean SDF on the lattice: free voxels hold the distance to the
/// nearest occupied voxel, occupied voxels minus the distance to the nearest free one.
pub fn build_sdf(grid: &VoxelGrid) -> SignedDistanceField {
    let outside = squared_edt(grid.dims, |i| grid.get(i));
    let inside = squared_edt(grid.dims, |i| !grid.get(i));
    let values = (0..grid.len())
        .map(|i| {
            if grid.get(i) {
                -lattice_distance(grid.resolution, inside[i])
            } else {
                lattice_distance(grid.resolution, outside[i])
            }
        })
        .collect();
    SignedDistanceField {
        origin: grid.origin,
        resolution: grid.resolution,
        dims: grid.dims,
        values,
    }
}

/// Query result; `out_of_bounds` is set when `p` was clamped into the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdfSample<T> {
    pub value: T,
    pub out_of_bounds: bool,
}

impl SignedDistanceField {
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[i + self.dims[0] * (j + self.dims[1] * k)] as f64
    }

    /// Lattice coordinates of `p` (voxel centres at integers), clamped.
    fn lattice(&self, p: &Vec3) -> (Vec3, bool) {
        let mut g = (p - self.origin) / self.resolution - Vec3::repeat(0.5);
        let mut clamped = false;
        for a in 0..3 {
            let hi = (self.dims[a] - 1) as f64;
            if !(g[a] >= 0.0 && g[a] <= hi) {
                clamped = true;
                g[a] = if g[a].is_nan() { 0.0 } else { g[a].clamp(0.0, hi) };
            }
        }
        (g, clamped)
    }

    /// Cell base index and fraction along each axis for lattice point `g`.
    fn cell(&self, g: &Vec3) -> ([usize; 3], [f64; 3]) {
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let n = self.dims[a];
            let b = (g[a].floor().max(0.0) as usize).min(n.saturating_sub(2));
            base[a] = b;
            frac[a] = if n > 1 { g[a] - b as f64 } else { 0.0 };
        }
        (base, frac)
    }

    /// Trilinear blend in cell `base` at `frac`; with `deriv = Some(a)` the
    /// derivative of the blend with respect to `frac[a]` instead.
    fn blend(&self, base: [usize; 3], frac: [f64; 3], deriv: Option<usize>) -> f64 {
        let mut acc = 0.0;
        for corner in 0..8 {
            let bit = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let idx = [base[0] + bit[0], base[1] + bit[1], base[2] + bit[2]];
            if (0..3).any(|a| idx[a] >= self.dims[a]) {
                continue;
            }
            let mut w = 1.0;
            for a in 0..3 {
                w *= match (deriv == Some(a), bit[a]) {
                    (true, 1) => 1.0,
                    (true, _) => -1.0,
                    (false, 1) => frac[a],
                    (false, _) => 1.0 - frac[a],
                };
            }
            if w != 0.0 {
                acc += w * self.at(idx[0], idx[1], idx[2]);
            }
        }
        acc
    }

    /// Trilinear interpolation of the lattice values at `p`.
    pub fn query(&self, p: &Vec3) -> SdfSample<f64> {
        let (g, out_of_bounds) = self.lattice(p);
        let (base, frac) = self.cell(&g);
        SdfSample {
            value: self.blend(base, frac, None),
            out_of_bounds,
        }
    }

    /// Gradient of the interpolated field, m/m, without normalisation. On a
    /// cell face the one-sided derivatives of both cells are averaged.
    pub fn gradient_raw(&self, p: &Vec3) -> SdfSample<Vec3> {
        let (g, out_of_bounds) = self.lattice(p);
        let (base, frac) = self.cell(&g);
        let mut grad = Vec3::zeros();
        for a in 0..3 {
            if self.dims[a] < 2 {
                continue;
            }
            let mut d = self.blend(base, frac, Some(a));
            if frac[a] == 0.0 && base[a] > 0 {
                let mut left = base;
                left[a] -= 1;
                let mut lf = frac;
                lf[a] = 1.0;
                d = 0.5 * (d + self.blend(left, lf, Some(a)));
            }
            grad[a] = d / self.resolution;
        }
        SdfSample {
            value: grad,
            out_of_bounds,
        }
    }

    /// [`gradient_raw`](Self::gradient_raw) scaled to unit length when its
    /// norm exceeds 1e-9.
    pub fn gradient(&self, p: &Vec3) -> SdfSample<Vec3> {
        let raw = self.gradient_raw(p);
        let n = raw.value.norm();
        SdfSample {
            value: if n > 1e-9 { raw.value / n } else { raw.value },
            out_of_bounds: raw.out_of_bounds,
        }
    }

    pub fn write_dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "sdf v1 {} {} {} {} {} {} {}",
            self.dims[0], self.dims[1], self.dims[2], self.resolution, self.origin.x, self.origin.y, self.origin.z
        )?;
        let mut bytes = Vec::with_capacity(4 * self.values.len());
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&bytes)
    }
}

pub fn query_sdf(sdf: &SignedDistanceField, p: &Vec3) -> SdfSample<f64> {
    sdf.query(p)
}

pub fn query_gradient(sdf: &SignedDistanceField, p: &Vec3) -> SdfSample<Vec3> {
    sdf.gradient(p)
}

/// Climbs the distance field from `p` in half-voxel steps until the
/// interpolated distance exceeds `margin`. Where the gradient vanishes, axis
/// probes at growing multiples of the step pick the way out.
pub fn nearest_free_point(sdf: &SignedDistanceField, p: &Vec3, margin: f64) -> Result<Vec3, EnvError> {
    let mut q = *p;
    let step = 0.5 * sdf.resolution;
    for _ in 0..MAX_FREE_STEPS {
        if sdf.query(&q).value > margin {
            return Ok(q);
        }
        let g = sdf.gradient(&q).value;
        if g.norm() > 1e-9 {
            q += g * step;
            continue;
        }
        // flat spot: widen axis probes until one of them climbs
        let here = sdf.query(&q).value;
        let reach = sdf.dims.iter().max().copied().unwrap_or(1) * 2;
        let climb = (1..=reach).find_map(|m| {
            let best = (0..6)
                .map(|n| {
                    let mut d = Vec3::zeros();
                    d[n / 2] = if n % 2 == 0 { step } else { -step } * m as f64;
                    (q + d, sdf.query(&(q + d)).value)
                })
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .expect("six candidates");
            (best.1 > here).then_some(best.0)
        });
        match climb {
            Some(next) => q = next,
            None => break,
        }
    }
    if sdf.query(&q).value > margin {
        return Ok(q);
    }
    Err(EnvError::NoFreeSpaceFound(MAX_FREE_STEPS))
}
