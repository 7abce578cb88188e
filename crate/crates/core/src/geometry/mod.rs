//! Camera-calibrated RGB-D handling: projection, normals, background
//! subtraction, hole filling and rigid registration.

mod background;
mod camera;
mod cloud;
mod holes;
mod icp;
mod normals;
pub mod spatial;

pub use background::{background_subtract, BackgroundParams};
pub(crate) use background::color_distance;
pub use camera::{CameraIntrinsics, CameraPose, RgbdFrame, RigidTransform, MAX_DEPTH};
pub use cloud::{project_frame, project_frames, project_to_cloud, PointCloud, SourcePixel};
pub use holes::{fill_depth_grid, fill_depth_holes, FillReport, DEFAULT_FILL_ITERATIONS};
pub use icp::{
    best_fit_transform, icp_register, icp_register_with, IcpInit, IcpParams, IcpResult,
    MIN_ICP_POINTS,
};
pub use normals::{estimate_normals, estimate_normals_with, NormalParams};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("calibration error: {0}")]
    Calibration(String),
    #[error("invalid depth value {0}")]
    InvalidDepth(f64),
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("ICP diverged (best rms {rms:.3e})")]
    IcpDiverged { best: RigidTransform, rms: f64 },
}
