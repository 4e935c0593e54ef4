//! Per-pair workflows over a scene directory: load a view, match a pair,
//! solve its relative pose and score the resulting query pose. Every record
//! carries its pair id so callers can process pairs in any order and still
//! write order-stable files.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraIntrinsics, DepthMap, Mask, RigidTransform, ScalarImage};
use crate::io::{load_depth_png, load_gray_png, load_mask_png, Dataset, IoError, PairEntry, RunConfig};
use crate::matching::{match_pyramids, FeatureProvider, IdentityDecoder, MatchError, MatchSet, MnnReport};
use crate::metrics::{evaluate_pose, MeshModel, MetricError, PoseErrorReport, RecallTable};
use crate::pose::{compose_query_pose, lift_matches, robust_register, LiftReport, PoseError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Pose(#[from] PoseError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("{path}: line {line}: {msg}")]
    Record { path: String, line: usize, msg: String },
}

impl PipelineError {
    /// Failures of the numerics on valid input, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            PipelineError::Pose(
                PoseError::InsufficientCorrespondences { .. }
                    | PoseError::DegenerateGeometry(_)
                    | PoseError::RegistrationFailed { .. }
            )
        )
    }
}

/// One image prepared for matching, with its object mask.
#[derive(Debug, Clone)]
pub struct View {
    pub image_id: usize,
    pub gray: ScalarImage,
    pub depth: DepthMap,
    pub mask: Mask,
    pub intrinsics: CameraIntrinsics,
    pub pose: RigidTransform,
}

pub fn load_view(ds: &Dataset, image_id: usize, gt_index: usize, cfg: &RunConfig) -> Result<View, PipelineError> {
    let rec = ds.record(image_id)?;
    let obj = rec
        .objects
        .get(gt_index)
        .ok_or_else(|| IoError::Invalid(format!("image {image_id} has no object at index {gt_index}")))?;
    let mut gray = load_gray_png(&rec.rgb)?;
    let mut depth = load_depth_png(&rec.depth, rec.depth_scale, cfg.data.range())?.depth;
    let mask = load_mask_png(&obj.mask)?;
    let k = &rec.intrinsics;
    for (what, g) in [("image", gray.shape()), ("depth", depth.as_grid().shape()), ("mask", mask.shape())] {
        if g != (k.width, k.height) {
            return Err(IoError::Invalid(format!(
                "image {image_id}: {what} is {}x{}, camera says {}x{}",
                g.0, g.1, k.width, k.height
            ))
            .into());
        }
    }
    if cfg.matcher.mask_inputs {
        for v in 0..k.height {
            for u in 0..k.width {
                if !*mask.get(u, v) {
                    gray.set(u, v, 0.0);
                    depth.set(u, v, 0.0);
                }
            }
        }
    }
    Ok(View {
        image_id,
        gray,
        depth,
        mask,
        intrinsics: *k,
        pose: obj.pose,
    })
}

/// The matches of one pair at the level that will be lifted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename = "matches")]
pub struct MatchRecord {
    pub pair: usize,
    pub query: usize,
    pub reference: usize,
    pub coarse_matches: usize,
    pub mnn: MnnReport,
    pub fine_dropped: usize,
    pub matches: MatchSet,
}

pub fn match_pair(
    ds: &Dataset,
    pair: &PairEntry,
    provider: &dyn FeatureProvider,
    cfg: &RunConfig,
) -> Result<MatchRecord, PipelineError> {
    let q = load_view(ds, pair.query, pair.gt_index, cfg)?;
    let r = load_view(ds, pair.reference, pair.gt_index, cfg)?;
    let fq = provider.extract(&format!("{:06}", q.image_id), &q.gray, Some(&q.depth))?;
    let fr = provider.extract(&format!("{:06}", r.image_id), &r.gray, Some(&r.depth))?;
    let mcfg = cfg.matcher.match_config();
    let out = match_pyramids(&fq, &fr, &mcfg, &IdentityDecoder)?;
    Ok(MatchRecord {
        pair: pair.pair,
        query: pair.query,
        reference: pair.reference,
        coarse_matches: out.coarse.len(),
        mnn: out.mnn,
        fine_dropped: out.refine.dropped_out_of_bounds,
        matches: if cfg.matcher.refine { out.fine } else { out.coarse },
    })
}

/// A solved pair. `query_pose` is the estimated object-to-query-camera
/// pose, obtained by chaining the relative motion with the known
/// reference pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub pair: usize,
    pub solver: String,
    pub query_to_reference: RigidTransform,
    pub query_pose: RigidTransform,
    pub correspondences: usize,
    pub inliers: Vec<bool>,
    pub rms: f64,
    pub iterations: usize,
    pub lift: LiftReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseFailure {
    pub pair: usize,
    pub error: String,
    pub numerical: bool,
    pub lift: Option<LiftReport>,
}

/// One line of a pose file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PoseLine {
    Pose(PoseRecord),
    PoseFailure(PoseFailure),
}

impl PoseLine {
    pub fn pair(&self) -> usize {
        match self {
            PoseLine::Pose(p) => p.pair,
            PoseLine::PoseFailure(f) => f.pair,
        }
    }

    pub fn failure(pair: usize, err: &PipelineError, lift: Option<LiftReport>) -> Self {
        PoseLine::PoseFailure(PoseFailure {
            pair,
            error: err.to_string(),
            numerical: err.is_numerical(),
            lift,
        })
    }
}

/// Lifts `matches` with the pair's depth and masks and registers them. On a
/// numerical failure the lift report is returned alongside the error.
pub fn solve_pair(
    ds: &Dataset,
    pair: &PairEntry,
    matches: &MatchSet,
    cfg: &RunConfig,
) -> Result<PoseRecord, (PipelineError, Option<LiftReport>)> {
    let q = load_view(ds, pair.query, pair.gt_index, cfg).map_err(|e| (e, None))?;
    let r = load_view(ds, pair.reference, pair.gt_index, cfg).map_err(|e| (e, None))?;
    let (corr, lift) = lift_matches(
        matches,
        &q.depth,
        &r.depth,
        &q.intrinsics,
        &r.intrinsics,
        Some(&q.mask),
        Some(&r.mask),
    )
    .map_err(|e| (e.into(), None))?;
    let solver = crate::pose::RansacConfig {
        seed: cfg.solver.seed.wrapping_add(pair.pair as u64),
        ..cfg.solver
    };
    let est = robust_register(&corr, &solver).map_err(|e| (e.into(), Some(lift)))?;
    let query_pose = compose_query_pose(&r.pose.inverse(), &est.transform).inverse();
    Ok(PoseRecord {
        pair: pair.pair,
        solver: est.solver.to_string(),
        query_to_reference: est.transform,
        query_pose,
        correspondences: corr.len(),
        inliers: est.inliers,
        rms: est.rms,
        iterations: est.iterations,
        lift,
    })
}

/// One line of a pose-evaluation file: a report per pair, then one recall
/// table per object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EvalLine {
    PoseError { pair: usize, report: PoseErrorReport },
    Recall { obj_id: u32, table: RecallTable },
}

/// Scores an estimated query pose against the query's ground truth, using
/// the query's sensor depth for the visibility test. `None` scores a
/// failed pair.
pub fn score_pair(
    ds: &Dataset,
    pair: &PairEntry,
    estimate: Option<&RigidTransform>,
    mesh: &MeshModel,
    cfg: &RunConfig,
) -> Result<PoseErrorReport, PipelineError> {
    let symmetric = mesh.is_symmetric();
    let Some(hat) = estimate else {
        return Ok(PoseErrorReport::failed(symmetric));
    };
    let rec = ds.record(pair.query)?;
    let obj = rec
        .objects
        .get(pair.gt_index)
        .ok_or_else(|| IoError::Invalid(format!("image {} has no object at index {}", pair.query, pair.gt_index)))?;
    let scene = load_depth_png(&rec.depth, rec.depth_scale, cfg.data.range())?.depth;
    Ok(evaluate_pose(hat, &obj.pose, mesh, &rec.intrinsics, Some(&scene), &cfg.recall)?)
}

/// Writes one compact JSON object per line.
pub fn write_json_lines<T: Serialize>(mut w: impl Write, records: &[T]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Reads every non-empty line of a JSON-lines file as `T`.
pub fn read_json_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let file = std::fs::File::open(path).map_err(crate::io::io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(crate::io::io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| PipelineError::Record {
            path: path.display().to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}
