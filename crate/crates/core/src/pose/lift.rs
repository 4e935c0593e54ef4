use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::PoseError;
use crate::geometry::{check_shape, CameraIntrinsics, DepthMap, Mask};
use crate::matching::MatchSet;

/// Paired camera-frame points: `query[i]` corresponds to `reference[i]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Correspondence3D {
    pub query: Vec<Vector3<f64>>,
    pub reference: Vec<Vector3<f64>>,
    pub confidence: Vec<f64>,
}

impl Correspondence3D {
    pub fn new(query: Vec<Vector3<f64>>, reference: Vec<Vector3<f64>>, confidence: Vec<f64>) -> Result<Self, PoseError> {
        if query.len() != reference.len() || query.len() != confidence.len() {
            return Err(PoseError::InvalidInput(format!(
                "correspondence lists differ in length: {} / {} / {}",
                query.len(),
                reference.len(),
                confidence.len()
            )));
        }
        let finite = |p: &Vector3<f64>| p.iter().all(|x| x.is_finite());
        if !query.iter().chain(&reference).all(finite) || !confidence.iter().all(|c| c.is_finite() && *c >= 0.0) {
            return Err(PoseError::InvalidInput("non-finite correspondence".into()));
        }
        Ok(Self {
            query,
            reference,
            confidence,
        })
    }

    /// Equal weights.
    pub fn unweighted(query: Vec<Vector3<f64>>, reference: Vec<Vector3<f64>>) -> Result<Self, PoseError> {
        let n = query.len();
        Self::new(query, reference, vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.query.len()
    }

    pub fn is_empty(&self) -> bool {
        self.query.is_empty()
    }
}

/// Why matches were discarded while lifting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiftReport {
    pub kept: usize,
    pub out_of_bounds: usize,
    pub outside_mask: usize,
    pub no_depth: usize,
}

/// Depth at a sub-pixel position (pixel centers at integer coordinates).
/// Bilinear when every contributing neighbour is valid, else the nearest
/// valid neighbour, else `None`.
pub fn sample_depth(depth: &DepthMap, x: f64, y: f64) -> Option<f64> {
    let (w, h) = (depth.width(), depth.height());
    if !(x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64) {
        return None;
    }
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let mut taps = Vec::with_capacity(4);
    for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
        for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
            let (u, v) = (x0 + dx, y0 + dy);
            if wx * wy > 0.0 && u < w && v < h {
                taps.push((u, v, wx * wy));
            }
        }
    }
    if taps.iter().all(|&(u, v, _)| depth.is_valid(u, v)) {
        return Some(taps.iter().map(|&(u, v, wt)| wt * depth.get(u, v)).sum());
    }
    taps.iter()
        .filter(|&&(u, v, _)| depth.is_valid(u, v))
        .map(|&(u, v, _)| ((u as f64 - x).powi(2) + (v as f64 - y).powi(2), depth.get(u, v)))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, z)| z)
}

enum Drop {
    Bounds,
    Mask,
    Depth,
}

fn lift_one(
    xy: [f64; 2],
    depth: &DepthMap,
    k: &CameraIntrinsics,
    mask: Option<&Mask>,
) -> Result<Vector3<f64>, Drop> {
    let (w, h) = (depth.width() as f64, depth.height() as f64);
    let [x, y] = xy;
    if !(x >= 0.0 && y >= 0.0 && x <= w - 1.0 && y <= h - 1.0) {
        return Err(Drop::Bounds);
    }
    if let Some(m) = mask {
        if !*m.get(x.round() as usize, y.round() as usize) {
            return Err(Drop::Mask);
        }
    }
    let z = sample_depth(depth, x, y).ok_or(Drop::Depth)?;
    Ok(k.backproject_pixel(x, y, z))
}

/// Backprojects both ends of every match; pairs with an endpoint off-image,
/// outside its mask or without depth are dropped and tallied. The mask is
/// tested at the nearest pixel.
#[allow(clippy::too_many_arguments)]
pub fn lift_matches(
    matches: &MatchSet,
    depth_q: &DepthMap,
    depth_r: &DepthMap,
    kq: &CameraIntrinsics,
    kr: &CameraIntrinsics,
    mask_q: Option<&Mask>,
    mask_r: Option<&Mask>,
) -> Result<(Correspondence3D, LiftReport), PoseError> {
    kq.check_dims("query intrinsics vs depth", depth_q.as_grid())?;
    kr.check_dims("reference intrinsics vs depth", depth_r.as_grid())?;
    if let Some(m) = mask_q {
        check_shape("query mask vs depth", depth_q.as_grid(), m)?;
    }
    if let Some(m) = mask_r {
        check_shape("reference mask vs depth", depth_r.as_grid(), m)?;
    }
    let mut report = LiftReport::default();
    let mut corr = Correspondence3D::default();
    for m in &matches.matches {
        let lifted = lift_one(m.query_xy, depth_q, kq, mask_q)
            .and_then(|p| lift_one(m.reference_xy, depth_r, kr, mask_r).map(|r| (p, r)));
        match lifted {
            Ok((p, r)) => {
                corr.query.push(p);
                corr.reference.push(r);
                corr.confidence.push(m.confidence);
                report.kept += 1;
            }
            Err(Drop::Bounds) => report.out_of_bounds += 1,
            Err(Drop::Mask) => report.outside_mask += 1,
            Err(Drop::Depth) => report.no_depth += 1,
        }
    }
    if corr.len() < 3 {
        return Err(PoseError::InsufficientCorrespondences { found: corr.len() });
    }
    Ok((corr, report))
}
