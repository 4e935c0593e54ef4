//! Pose and depth evaluation: symmetry-aware pose errors (VSD, MSSD, MSPD,
//! ADD / ADD-S), recall and AR aggregation, a z-buffer rasterizer for the
//! VSD depth renderings, and the per-pixel depth metrics.

mod depth;
mod mesh;
mod pose_error;
mod raster;
mod recall;

use thiserror::Error;

use crate::geometry::GeometryError;

pub use depth::{depth_metrics, DepthMetrics, DEFAULT_DELTAS, DEPTH_EPSILON};
pub use mesh::{diameter, MeshModel, SYMMETRY_TOLERANCE};
pub use pose_error::{add_error, evaluate_pose, mspd, mssd, vsd, vsd_step_costs, PoseErrorReport, VsdVariant};
pub use raster::{render, render_depth, Rendering, NO_FACE};
pub use recall::{pose_recalls, RecallConfig, RecallTable};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("vertex {vertex} is behind the camera (z = {z})")]
    BehindCamera { vertex: usize, z: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
