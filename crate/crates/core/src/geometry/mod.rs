//! Pinhole camera geometry, dense image fields and rigid-body algebra shared
//! by every other module.

mod camera;
mod field;
mod grid;
mod transform;

use thiserror::Error;

pub use camera::{backproject, project, CameraIntrinsics, DepthMap, DepthRange, PointCloud};
pub use field::{
    normal_cross, normals_from_depth, scalar_gradient, GradientMap, NormalMap, DEGENERATE_NORMAL,
};
pub(crate) use grid::check_shape;
pub use grid::{Grid, Mask, ScalarImage};
pub use transform::{RigidTransform, ROTATION_TOLERANCE};

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("{what}: expected {expected:?} (width, height), got {actual:?}")]
    DimensionMismatch {
        what: &'static str,
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("rotation is not orthonormal (max |RᵀR - I| = {max_deviation:e}, det = {determinant})")]
    NonOrthonormal {
        max_deviation: f64,
        determinant: f64,
    },
    #[error("cannot project point with z = {z} (must be > 0)")]
    BehindCamera { z: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}
