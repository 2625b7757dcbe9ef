//! Gate perception baseline: colour mask, corners, homography, Kalman filter.

pub mod eval;
pub mod homography;
pub mod kf;
pub mod mask;

use thiserror::Error;

pub use eval::{evaluate_perception, observe_corners, CornerSource, FrameRecord, PerceptionConfig, PerceptionReport};
pub use homography::{estimate_center_3d, homography_dlt, plane_pose_optical, BaselineReference};
pub use kf::{kf_update, GateCenterKF};
pub use mask::{extract_corners, extract_gate_mask, ColorBox, Mask, MIN_MASK_PIXELS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("no gate pixels in frame")]
    NoGateVisible,
    #[error("mask of {0} pixels cannot yield four corners")]
    DegenerateMask(usize),
    #[error("corner configuration is singular")]
    SingularConfiguration,
    #[error("covariance is not symmetric positive definite")]
    NonSpdCovariance,
}
