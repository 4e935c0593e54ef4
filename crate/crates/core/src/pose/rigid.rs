use nalgebra::{Matrix3, Vector3};

use super::PoseError;
use crate::geometry::RigidTransform;

/// Relative size of the second singular value below which a point set (or
/// its cross-covariance) is treated as collinear.
const RANK_TOLERANCE: f64 = 1e-12;

/// Weighted least-squares rigid transform minimizing
/// `Σ wᵢ ‖R·srcᵢ + t − dstᵢ‖²`.
///
/// Rotation from the SVD of the weighted cross-covariance `H = U Σ Vᵀ`,
/// `R = V · diag(1, 1, sign det(V Uᵀ)) · Uᵀ`, so `det R = +1` always.
pub fn rigid_fit(
    src: &[Vector3<f64>],
    dst: &[Vector3<f64>],
    weights: Option<&[f64]>,
) -> Result<RigidTransform, PoseError> {
    if src.len() != dst.len() {
        return Err(PoseError::InvalidInput(format!(
            "point lists differ in length: {} vs {}",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 3 {
        return Err(PoseError::InsufficientCorrespondences { found: src.len() });
    }
    let ones;
    let w = match weights {
        Some(w) if w.len() == src.len() => w,
        Some(w) => {
            return Err(PoseError::InvalidInput(format!(
                "{} weights for {} points",
                w.len(),
                src.len()
            )))
        }
        None => {
            ones = vec![1.0; src.len()];
            &ones
        }
    };
    if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(PoseError::InvalidInput("weights must be finite and >= 0".into()));
    }
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(PoseError::InvalidInput("weights sum to zero".into()));
    }
    let centroid = |pts: &[Vector3<f64>]| pts.iter().zip(w).map(|(p, wi)| p * *wi).sum::<Vector3<f64>>() / total;
    let (cs, cd) = (centroid(src), centroid(dst));
    let mut h = Matrix3::zeros();
    let mut scatter = Matrix3::zeros();
    for ((s, d), wi) in src.iter().zip(dst).zip(w) {
        let (a, b) = (s - cs, d - cd);
        h += *wi * a * b.transpose();
        scatter += *wi * a * a.transpose();
    }
    let sv = scatter.symmetric_eigenvalues();
    let mut sv: Vec<f64> = sv.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if !(sv[1] > RANK_TOLERANCE * sv[0]) {
        return Err(PoseError::DegenerateGeometry("source points are collinear or coincident".into()));
    }
    let svd = h.svd(true, true);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    if !(s[1] > RANK_TOLERANCE * s[0]) {
        return Err(PoseError::DegenerateGeometry("cross-covariance has rank < 2".into()));
    }
    let u = svd.u.expect("requested");
    let v = svd.v_t.expect("requested").transpose();
    let d = (v * u.transpose()).determinant().signum();
    // the smallest singular direction is flipped; nalgebra sorts descending
    let min_idx = svd.singular_values.imin();
    let mut correction = Matrix3::identity();
    correction[(min_idx, min_idx)] = d;
    let r = v * correction * u.transpose();
    let t = cd - r * cs;
    Ok(RigidTransform::new(r, t)?)
}

/// `Σ wᵢ ‖T·srcᵢ − dstᵢ‖²`, unweighted if `weights` is `None`.
pub fn weighted_residual(t: &RigidTransform, src: &[Vector3<f64>], dst: &[Vector3<f64>], weights: Option<&[f64]>) -> f64 {
    src.iter()
        .zip(dst)
        .enumerate()
        .map(|(i, (s, d))| weights.map_or(1.0, |w| w[i]) * (t.apply_point(s) - d).norm_squared())
        .sum()
}
