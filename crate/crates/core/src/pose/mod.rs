//! Relative pose from matched views: lift 2D matches to 3D with each view's
//! depth, estimate the query-to-reference rigid motion robustly, and chain it
//! with the reference pose.
//!
//! The registration step is a seeded sample-consensus Kabsch solver, not a
//! learned one; [`PoseEstimate::solver`] says so.

mod lift;
mod ransac;
mod rigid;

use thiserror::Error;

use crate::geometry::{GeometryError, RigidTransform};

pub use lift::{lift_matches, sample_depth, Correspondence3D, LiftReport};
pub use ransac::{robust_register, PoseEstimate, RansacConfig, SOLVER_NAME};
pub use rigid::{rigid_fit, weighted_residual};

#[derive(Debug, Error)]
pub enum PoseError {
    #[error("insufficient correspondences: {found} (need at least 3)")]
    InsufficientCorrespondences { found: usize },
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("registration failed: best hypothesis has {best_inliers} inliers, need {required}")]
    RegistrationFailed { best_inliers: usize, required: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// `T_q⁻¹ = T_r⁻¹ ∘ T_{q→r}`: maps query camera points into the object frame.
pub fn compose_query_pose(t_r_inv: &RigidTransform, t_q_to_r: &RigidTransform) -> RigidTransform {
    t_r_inv.compose(t_q_to_r)
}
