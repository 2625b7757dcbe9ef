//! Synthetic camera: projection, gate rendering, optical flow and events.

pub mod camera;
pub mod events;
pub mod export;
pub mod flow;
pub mod raster;

pub use camera::{back_project, project, CameraError, CameraModel, Projection};
pub use events::{generate_events, Event, EventCameraParams, EventError};
pub use flow::{optical_flow, FlowField};
pub use raster::{gate_seg_id, render, render_at, FrameBundle, GroundPlane, Motion, Scene, SEG_BACKGROUND, SEG_GROUND};
