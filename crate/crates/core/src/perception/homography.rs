//! Gate centre from four corners via a plane homography.

use nalgebra::{Matrix3, SMatrix, Vector3};

use super::PerceptionError;
use crate::geometry::{Pose, Vec3};
use crate::sensor::camera::optical_to_body;
use crate::sensor::CameraModel;

/// Canonical view of a gate: optical axis through the gate centre, normal
/// to the gate plane, at distance `d0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineReference {
    /// Pixel corners in top-left, bottom-left, bottom-right, top-right order.
    pub corners: [[f64; 2]; 4],
    pub center: [f64; 2],
    pub d0: f64,
    /// Metric size of the rectangle whose corners are detected, m.
    pub gate_width: f64,
    pub gate_height: f64,
}

impl BaselineReference {
    /// Reference for an undistorted pinhole view of a `width × height`
    /// rectangle at `d0`.
    pub fn canonical(camera: &CameraModel, d0: f64, width: f64, height: f64) -> Self {
        let (hw, hh) = (0.5 * width, 0.5 * height);
        let px = |x: f64, y: f64| [camera.fx * x / d0 + camera.cx, camera.fy * y / d0 + camera.cy];
        Self {
            corners: [px(-hw, -hh), px(-hw, hh), px(hw, hh), px(hw, -hh)],
            center: [camera.cx, camera.cy],
            d0,
            gate_width: width,
            gate_height: height,
        }
    }
}

fn normalizer(pts: &[[f64; 2]; 4]) -> Matrix3<f64> {
    let (mut mx, mut my) = (0.0, 0.0);
    for p in pts {
        mx += p[0] / 4.0;
        my += p[1] / 4.0;
    }
    let mean_dist = pts.iter().map(|p| ((p[0] - mx).powi(2) + (p[1] - my).powi(2)).sqrt()).sum::<f64>() / 4.0;
    let s = if mean_dist > 0.0 { std::f64::consts::SQRT_2 / mean_dist } else { 1.0 };
    Matrix3::new(s, 0.0, -s * mx, 0.0, s, -s * my, 0.0, 0.0, 1.0)
}

fn apply(m: &Matrix3<f64>, p: [f64; 2]) -> [f64; 2] {
    let q = m * Vector3::new(p[0], p[1], 1.0);
    [q.x / q.z, q.y / q.z]
}

/// Homography `H` with `dst ~ H src`, from exactly four correspondences by
/// the normalised DLT.
pub fn homography_dlt(src: &[[f64; 2]; 4], dst: &[[f64; 2]; 4]) -> Result<Matrix3<f64>, PerceptionError> {
    let (ts, td) = (normalizer(src), normalizer(dst));
    let mut a = SMatrix::<f64, 9, 9>::zeros();
    for k in 0..4 {
        let [x, y] = apply(&ts, src[k]);
        let [u, v] = apply(&td, dst[k]);
        let r0 = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u];
        let r1 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
        for j in 0..9 {
            a[(2 * k, j)] = r0[j];
            a[(2 * k + 1, j)] = r1[j];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(PerceptionError::SingularConfiguration)?;
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let (largest, second_smallest) = (svd.singular_values[order[0]], svd.singular_values[order[7]]);
    if !(second_smallest > 1e-10 * largest) {
        return Err(PerceptionError::SingularConfiguration);
    }
    let h = v_t.row(order[8]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let td_inv = td.try_inverse().ok_or(PerceptionError::SingularConfiguration)?;
    let out = td_inv * hn * ts;
    let scale = out[(2, 2)];
    Ok(if scale.abs() > 1e-300 { out / scale } else { out })
}

fn intrinsics(camera: &CameraModel) -> Matrix3<f64> {
    Matrix3::new(camera.fx, 0.0, camera.cx, 0.0, camera.fy, camera.cy, 0.0, 0.0, 1.0)
}

/// Gate plane rotation and centre in the optical frame from observed corners.
pub fn plane_pose_optical(
    corners: &[[f64; 2]; 4],
    reference: &BaselineReference,
    camera: &CameraModel,
) -> Result<(Matrix3<f64>, Vec3), PerceptionError> {
    // remove lens distortion so the observed corners follow the pinhole model
    let undistorted = corners.map(|[u, v]| {
        let (x, y) = camera.undistort((u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy);
        [camera.fx * x + camera.cx, camera.fy * y + camera.cy]
    });
    let h = homography_dlt(&reference.corners, &undistorted)?;
    let k = intrinsics(camera);
    let k_inv = k.try_inverse().ok_or(PerceptionError::SingularConfiguration)?;
    // metric plane (a, b) -> reference pixels is K diag(1, 1, d0)
    let plane = k * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, reference.d0));
    let m = k_inv * h * plane;
    let (c1, c2, c3) = (m.column(0).into_owned(), m.column(1).into_owned(), m.column(2).into_owned());
    let (n1, n2) = (c1.norm(), c2.norm());
    if !(n1 > 0.0 && n2 > 0.0) {
        return Err(PerceptionError::SingularConfiguration);
    }
    let mut lambda = 2.0 / (n1 + n2);
    if (c3 * lambda).z < 0.0 {
        lambda = -lambda;
    }
    let r1 = c1 * lambda;
    let r2 = c2 * lambda;
    let t = c3 * lambda;
    // nearest rotation to [r1 r2 r1×r2]
    let approx = Matrix3::from_columns(&[r1, r2, r1.cross(&r2)]);
    let svd = approx.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut rot = u * v_t;
    if rot.determinant() < 0.0 {
        let mut u2 = u;
        u2.column_mut(2).neg_mut();
        rot = u2 * v_t;
    }
    Ok((rot, t))
}

/// World position of the gate centre seen at `corners` by a camera at `camera_pose`.
pub fn estimate_center_3d(
    corners: &[[f64; 2]; 4],
    reference: &BaselineReference,
    camera: &CameraModel,
    camera_pose: &Pose,
) -> Result<Vec3, PerceptionError> {
    let (_, t) = plane_pose_optical(corners, reference, camera)?;
    Ok(camera_pose.transform_point(&optical_to_body(&t)))
}
