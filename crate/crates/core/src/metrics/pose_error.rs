use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{render_depth, MeshModel, MetricError, RecallConfig};
use crate::geometry::{CameraIntrinsics, DepthMap, RigidTransform};
use crate::numeric::compensated_sum;

/// Which VSD the recall table reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VsdVariant {
    /// Mean absolute depth difference over the visibility union, with the
    /// tolerance `δ` charged at pixels only one rendering sees.
    #[default]
    Literal,
    /// Fraction of union pixels whose depths disagree by `τ` or more, per
    /// misalignment tolerance `τ` (the benchmark step cost).
    BopStep,
}

/// Errors of one estimate against ground truth. `None` marks a measure that
/// could not be computed; `failed` marks an estimate that does not exist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseErrorReport {
    /// Meters.
    pub vsd: Option<f64>,
    /// One step cost in `[0, 1]` per configured `τ`.
    pub vsd_step_costs: Option<Vec<f64>>,
    /// Meters.
    pub mssd: Option<f64>,
    /// Pixels.
    pub mspd: Option<f64>,
    /// Meters; ADD-S when `add_symmetric`.
    pub add: Option<f64>,
    pub add_symmetric: bool,
    pub failed: bool,
}

impl PoseErrorReport {
    /// A missing estimate; it counts as a miss under every threshold.
    pub fn failed(add_symmetric: bool) -> Self {
        Self {
            vsd: None,
            vsd_step_costs: None,
            mssd: None,
            mspd: None,
            add: None,
            add_symmetric,
            failed: true,
        }
    }
}

fn visible(d: f64, scene: Option<&DepthMap>, u: usize, v: usize, delta: f64) -> bool {
    d > 0.0
        && scene.is_none_or(|s| {
            let z = s.get(u, v);
            z > 0.0 && d - z < delta
        })
}

fn check_scene(k: &CameraIntrinsics, scene: Option<&DepthMap>) -> Result<(), MetricError> {
    if let Some(s) = scene {
        k.check_dims("scene depth", s.as_grid())?;
    }
    Ok(())
}

/// Per union pixel: `Some(|D̂ - D̄|)` where both renderings are visible, `None`
/// where only one is.
fn union_pixels(
    hat: &DepthMap,
    bar: &DepthMap,
    scene: Option<&DepthMap>,
    delta: f64,
) -> Vec<Option<f64>> {
    let mut out = Vec::new();
    for v in 0..hat.height() {
        for u in 0..hat.width() {
            let (dh, db) = (hat.get(u, v), bar.get(u, v));
            match (visible(dh, scene, u, v, delta), visible(db, scene, u, v, delta)) {
                (true, true) => out.push(Some((dh - db).abs())),
                (true, false) | (false, true) => out.push(None),
                (false, false) => {}
            }
        }
    }
    out
}

fn literal_from_union(union: &[Option<f64>], delta: f64) -> f64 {
    if union.is_empty() {
        return 0.0;
    }
    compensated_sum(union.iter().map(|p| p.unwrap_or(delta))) / union.len() as f64
}

fn step_from_union(union: &[Option<f64>], tau: f64) -> f64 {
    if union.is_empty() {
        return 1.0;
    }
    let bad = union.iter().filter(|p| !p.is_some_and(|e| e < tau)).count();
    bad as f64 / union.len() as f64
}

/// Visible surface discrepancy in meters. Without `scene`, a pixel is visible
/// wherever the rendering covers it; with `scene`, it must also lie less than
/// `delta` behind the scene depth. An empty union scores 0.
pub fn vsd(
    pose_hat: &RigidTransform,
    pose_bar: &RigidTransform,
    mesh: &MeshModel,
    k: &CameraIntrinsics,
    delta: f64,
    scene: Option<&DepthMap>,
) -> Result<f64, MetricError> {
    check_scene(k, scene)?;
    let hat = render_depth(mesh, pose_hat, k);
    let bar = render_depth(mesh, pose_bar, k);
    Ok(literal_from_union(&union_pixels(&hat, &bar, scene, delta), delta))
}

/// Step-cost VSD for each tolerance in `taus` (meters). An empty union costs 1.
pub fn vsd_step_costs(
    pose_hat: &RigidTransform,
    pose_bar: &RigidTransform,
    mesh: &MeshModel,
    k: &CameraIntrinsics,
    delta: f64,
    taus: &[f64],
    scene: Option<&DepthMap>,
) -> Result<Vec<f64>, MetricError> {
    check_scene(k, scene)?;
    let hat = render_depth(mesh, pose_hat, k);
    let bar = render_depth(mesh, pose_bar, k);
    let union = union_pixels(&hat, &bar, scene, delta);
    Ok(taus.iter().map(|&t| step_from_union(&union, t)).collect())
}

/// `min_S max_x ‖P̂x − P̄Sx‖` over the mesh symmetries, meters.
pub fn mssd(pose_hat: &RigidTransform, pose_bar: &RigidTransform, mesh: &MeshModel) -> f64 {
    let est: Vec<Vector3<f64>> = mesh.vertices().iter().map(|x| pose_hat.apply_point(x)).collect();
    mesh.symmetries()
        .iter()
        .map(|s| {
            mesh.vertices()
                .iter()
                .zip(&est)
                .map(|(x, e)| (e - pose_bar.apply_point(&s.apply_point(x))).norm())
                .fold(0.0, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}

/// `min_S max_x ‖proj(P̂x) − proj(P̄Sx)‖` in pixels. Every transformed vertex
/// must lie in front of the camera.
pub fn mspd(
    pose_hat: &RigidTransform,
    pose_bar: &RigidTransform,
    mesh: &MeshModel,
    k: &CameraIntrinsics,
) -> Result<f64, MetricError> {
    let project = |i: usize, p: Vector3<f64>| {
        k.project_point(&p)
            .map_err(|_| MetricError::BehindCamera { vertex: i, z: p.z })
    };
    let est = mesh
        .vertices()
        .iter()
        .enumerate()
        .map(|(i, x)| project(i, pose_hat.apply_point(x)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut best = f64::INFINITY;
    for s in mesh.symmetries() {
        let mut worst = 0.0f64;
        for (i, (x, e)) in mesh.vertices().iter().zip(&est).enumerate() {
            let g = project(i, pose_bar.apply_point(&s.apply_point(x)))?;
            worst = worst.max((e - g).norm());
        }
        best = best.min(worst);
    }
    Ok(best)
}

/// Mean vertex distance (ADD), or with `symmetric` the mean distance from each
/// estimated vertex to the nearest ground-truth vertex (ADD-S). Meters.
pub fn add_error(pose_hat: &RigidTransform, pose_bar: &RigidTransform, mesh: &MeshModel, symmetric: bool) -> f64 {
    let est: Vec<Vector3<f64>> = mesh.vertices().iter().map(|x| pose_hat.apply_point(x)).collect();
    let gt: Vec<Vector3<f64>> = mesh.vertices().iter().map(|x| pose_bar.apply_point(x)).collect();
    let n = est.len() as f64;
    if symmetric {
        compensated_sum(est.iter().map(|e| {
            gt.iter()
                .map(|g| (e - g).norm_squared())
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })) / n
    } else {
        compensated_sum(est.iter().zip(&gt).map(|(e, g)| (e - g).norm())) / n
    }
}

/// All pose errors for one estimate. Renderings are shared between both VSD
/// variants; a vertex behind the camera leaves `mspd` empty instead of
/// failing the whole report.
pub fn evaluate_pose(
    pose_hat: &RigidTransform,
    pose_bar: &RigidTransform,
    mesh: &MeshModel,
    k: &CameraIntrinsics,
    scene: Option<&DepthMap>,
    cfg: &RecallConfig,
) -> Result<PoseErrorReport, MetricError> {
    check_scene(k, scene)?;
    let hat = render_depth(mesh, pose_hat, k);
    let bar = render_depth(mesh, pose_bar, k);
    let union = union_pixels(&hat, &bar, scene, cfg.vsd_delta);
    let taus: Vec<f64> = cfg.vsd_tau_fractions.iter().map(|f| f * mesh.diameter()).collect();
    let mspd = match mspd(pose_hat, pose_bar, mesh, k) {
        Ok(e) => Some(e),
        Err(e) => {
            log::warn!("MSPD not computed: {e}");
            None
        }
    };
    let symmetric = mesh.is_symmetric();
    Ok(PoseErrorReport {
        vsd: Some(literal_from_union(&union, cfg.vsd_delta)),
        vsd_step_costs: Some(taus.iter().map(|&t| step_from_union(&union, t)).collect()),
        mssd: Some(mssd(pose_hat, pose_bar, mesh)),
        mspd,
        add: Some(add_error(pose_hat, pose_bar, mesh, symmetric)),
        add_symmetric: symmetric,
        failed: false,
    })
}
