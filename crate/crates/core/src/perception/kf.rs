//! Static-target Kalman filter for a gate centre.

use nalgebra::Matrix3;

use super::PerceptionError;
use crate::geometry::Vec3;

pub const DEFAULT_Q: f64 = 1e-4;
pub const DEFAULT_R: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateCenterKF {
    pub state: Vec3,
    pub covariance: Matrix3<f64>,
    /// Process noise added to each diagonal entry per update, m².
    pub q: f64,
    pub r: Matrix3<f64>,
}

impl GateCenterKF {
    pub fn new(state: Vec3, covariance: Matrix3<f64>, q: f64, r: Matrix3<f64>) -> Self {
        Self {
            state,
            covariance,
            q,
            r,
        }
    }

    /// Initialised from a first measurement with covariance `R`.
    pub fn from_measurement(z: Vec3) -> Self {
        let r = Matrix3::identity() * DEFAULT_R;
        Self::new(z, r, DEFAULT_Q, r)
    }

    pub fn update(&mut self, z: &Vec3) -> Result<(), PerceptionError> {
        *self = kf_update(self, z)?;
        Ok(())
    }
}

fn is_spd(m: &Matrix3<f64>) -> bool {
    m.iter().all(|x| x.is_finite()) && m.cholesky().is_some()
}

/// Predict with a static model (`P += qI`), then fuse `z` with identity
/// measurement model; the covariance update uses the Joseph form.
pub fn kf_update(kf: &GateCenterKF, z: &Vec3) -> Result<GateCenterKF, PerceptionError> {
    if !is_spd(&kf.covariance) {
        return Err(PerceptionError::NonSpdCovariance);
    }
    let p = kf.covariance + Matrix3::identity() * kf.q;
    let s = p + kf.r;
    let s_inv = s.try_inverse().ok_or(PerceptionError::NonSpdCovariance)?;
    let k = p * s_inv;
    let state = kf.state + k * (z - kf.state);
    let i_k = Matrix3::identity() - k;
    let mut cov = i_k * p * i_k.transpose() + k * kf.r * k.transpose();
    cov = 0.5 * (cov + cov.transpose());
    if !is_spd(&cov) {
        return Err(PerceptionError::NonSpdCovariance);
    }
    Ok(GateCenterKF {
        state,
        covariance: cov,
        q: kf.q,
        r: kf.r,
    })
}
