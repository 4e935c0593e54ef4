use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use refpose_core::geometry::{CameraIntrinsics, RigidTransform};
use refpose_core::io::{
    load_dataset, load_depth_png, load_gray_png, load_mask_png, load_mesh_ply, synth_dataset, Dataset, IoError,
    RunConfig,
};
use refpose_core::losses::{total_depth_loss, LossError};
use refpose_core::matching::{BuiltinProvider, FeatureProvider, ImportProvider};
use refpose_core::metrics::{depth_metrics, pose_recalls, MetricError, DEFAULT_DELTAS};
use refpose_core::pipeline::{
    match_pair, read_json_lines, score_pair, solve_pair, write_json_lines, EvalLine, MatchRecord, PipelineError,
    PoseLine,
};

use crate::{EvalDepthArgs, EvalPoseArgs, LossesArgs, MatchArgs, SolvePoseArgs, SynthArgs};

#[derive(Debug)]
pub enum Failure {
    Input(String),
    Numerical(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<MetricError> for Failure {
    fn from(e: MetricError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<LossError> for Failure {
    fn from(e: LossError) -> Self {
        match e {
            LossError::DegenerateFit(_) | LossError::DegeneratePrior(_) => Failure::Numerical(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

fn write_records<T: Serialize>(out: Option<&Path>, records: &[T]) -> Result<(), Failure> {
    let result = match out {
        Some(p) => {
            let file = File::create(p).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?;
            write_json_lines(BufWriter::new(file), records)
        }
        None => write_json_lines(std::io::stdout().lock(), records),
    };
    result.map_err(|e| Failure::Input(format!("writing records: {e}")))
}

fn load_pair_dataset(root: &Path) -> Result<Dataset, Failure> {
    let ds = load_dataset(root)?;
    if ds.pairs.is_empty() {
        return Err(Failure::Input(format!("{}: no pairs in pairs.json", root.display())));
    }
    Ok(ds)
}

pub fn synth(a: &SynthArgs, mut cfg: RunConfig) -> Result<(), Failure> {
    let s = &mut cfg.synth;
    if let Some(n) = a.pairs {
        s.pairs = n;
    }
    if let Some(g) = &a.gap {
        s.rotation_gap_deg = <[f64; 3]>::try_from(g.as_slice())
            .map_err(|_| Failure::Input(format!("--gap needs 3 values, got {}", g.len())))?;
    }
    if let Some(n) = a.noise {
        s.noise_std = n;
    }
    if let Some(f) = a.outliers {
        s.outlier_fraction = f;
    }
    let summary = synth_dataset(&cfg.synth, &a.out)?;
    write_records(None, &[json!({ "kind": "synth", "summary": summary })])?;
    eprintln!(
        "synth: {} pairs, {} images in {} (target diameter {:.4} m)",
        summary.pairs,
        summary.images,
        summary.root.display(),
        summary.target_diameter
    );
    Ok(())
}

pub fn eval_depth(a: &EvalDepthArgs, cfg: &RunConfig) -> Result<(), Failure> {
    let scale = a.scale.unwrap_or(cfg.data.depth_scale);
    let pred = load_depth_png(&a.pred, scale, cfg.data.range())?.depth;
    let gt = load_depth_png(&a.gt, scale, cfg.data.range())?.depth;
    let mask = a.mask.as_deref().map(load_mask_png).transpose()?;
    let m = depth_metrics(&pred, &gt, mask.as_ref(), &DEFAULT_DELTAS)?;
    write_records(a.out.as_deref(), &[json!({ "kind": "depth-metrics", "metrics": m })])?;
    let deltas: Vec<String> = m
        .deltas
        .iter()
        .map(|(x, v)| format!("d<{x}: {}", v.map_or("n/a".into(), |v| format!("{v:.2}%"))))
        .collect();
    eprintln!(
        "eval-depth: {} px  AbsRel {:.5}  SqRel {:.5}  RMSE {:.5}  MAE {:.5}  log10 {}  {}",
        m.pixels,
        m.abs_rel,
        m.sq_rel,
        m.rmse,
        m.mae,
        m.log10.map_or("n/a".into(), |v| format!("{v:.5}")),
        deltas.join("  ")
    );
    Ok(())
}

pub fn losses(a: &LossesArgs, cfg: &RunConfig) -> Result<(), Failure> {
    let [fx, fy, cx, cy] = <[f64; 4]>::try_from(a.k.as_slice())
        .map_err(|_| Failure::Input(format!("--k needs fx,fy,cx,cy, got {} values", a.k.len())))?;
    let scale = a.scale.unwrap_or(cfg.data.depth_scale);
    let pred = load_depth_png(&a.pred, scale, cfg.data.range())?.depth;
    let gt = load_depth_png(&a.gt, scale, cfg.data.range())?.depth;
    let gray = load_gray_png(&a.rgb)?;
    let mask = a.mask.as_deref().map(load_mask_png).transpose()?;
    let k = CameraIntrinsics::new(fx, fy, cx, cy, gt.width(), gt.height()).map_err(IoError::from)?;
    let r = total_depth_loss(&pred, &gt, &gray, &k, mask.as_ref(), &cfg.loss.weights())?;
    write_records(a.out.as_deref(), &[json!({ "kind": "losses", "report": r })])?;
    eprintln!(
        "losses: total {:.6}  ssi {:.6}  reg {:.6}  berhu {:.6}  scale {:.6}  edge {:.6}  norm {:.6}  ({} px)",
        r.total, r.ssi, r.reg, r.berhu, r.scale, r.edge, r.norm, r.valid_pixels
    );
    Ok(())
}

fn provider(features: Option<&Path>, cfg: &RunConfig) -> Box<dyn FeatureProvider> {
    match features {
        Some(dir) => Box::new(ImportProvider::new(dir)),
        None => Box::new(BuiltinProvider {
            use_depth: cfg.matcher.use_depth,
        }),
    }
}

fn match_all(ds: &Dataset, features: Option<&Path>, cfg: &RunConfig) -> Result<Vec<MatchRecord>, Failure> {
    let p = provider(features, cfg);
    let records: Result<Vec<_>, _> = ds.pairs.par_iter().map(|pair| match_pair(ds, pair, p.as_ref(), cfg)).collect();
    Ok(records?)
}

pub fn match_pairs(a: &MatchArgs, cfg: &RunConfig) -> Result<(), Failure> {
    let ds = load_pair_dataset(&a.dataset)?;
    let records = match_all(&ds, a.features.as_deref(), cfg)?;
    write_records(a.out.as_deref(), &records)?;
    let total: usize = records.iter().map(|r| r.matches.len()).sum();
    eprintln!(
        "match: {} pairs, {total} {:?}-level matches ({:.1} per pair)",
        records.len(),
        records[0].matches.level,
        total as f64 / records.len() as f64
    );
    Ok(())
}

pub fn solve_pose(a: &SolvePoseArgs, cfg: &RunConfig) -> Result<(), Failure> {
    let ds = load_pair_dataset(&a.dataset)?;
    let records = match &a.matches {
        Some(path) => read_json_lines::<MatchRecord>(path)?,
        None => match_all(&ds, a.features.as_deref(), cfg)?,
    };
    let pairs: BTreeMap<usize, _> = ds.pairs.iter().map(|p| (p.pair, p)).collect();
    let mut jobs = Vec::with_capacity(records.len());
    for r in &records {
        let pair = pairs
            .get(&r.pair)
            .ok_or_else(|| Failure::Input(format!("match record for unknown pair {}", r.pair)))?;
        if (pair.query, pair.reference) != (r.query, r.reference) {
            return Err(Failure::Input(format!("pair {}: match record images differ from pairs.json", r.pair)));
        }
        jobs.push((*pair, r));
    }
    jobs.sort_by_key(|(p, _)| p.pair);
    let results: Vec<Result<PoseLine, PipelineError>> = jobs
        .par_iter()
        .map(|(pair, r)| match solve_pair(&ds, pair, &r.matches, cfg) {
            Ok(rec) => Ok(PoseLine::Pose(rec)),
            Err((e, lift)) if e.is_numerical() => Ok(PoseLine::failure(pair.pair, &e, lift)),
            Err((e, _)) => Err(e),
        })
        .collect();
    let lines = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    write_records(a.out.as_deref(), &lines)?;

    let mut solved = 0;
    for l in &lines {
        match l {
            PoseLine::Pose(_) => solved += 1,
            PoseLine::PoseFailure(f) => eprintln!("solve-pose: pair {}: {}", f.pair, f.error),
        }
    }
    eprintln!("solve-pose: {solved}/{} pairs solved", lines.len());
    if solved == 0 {
        return Err(Failure::Numerical("no pair could be solved".into()));
    }
    Ok(())
}

pub fn eval_pose(a: &EvalPoseArgs, cfg: &RunConfig) -> Result<(), Failure> {
    let ds = load_pair_dataset(&a.dataset)?;
    let mut meshes = BTreeMap::new();
    for p in &ds.pairs {
        if !meshes.contains_key(&p.obj_id) {
            meshes.insert(p.obj_id, load_mesh_ply(&ds.model_path(p.obj_id), cfg.data.model_scale)?);
        }
    }
    let estimates: BTreeMap<usize, Option<RigidTransform>> = match &a.poses {
        Some(path) => read_json_lines::<PoseLine>(path)?
            .into_iter()
            .map(|l| match l {
                PoseLine::Pose(r) => (r.pair, Some(r.query_pose)),
                PoseLine::PoseFailure(f) => (f.pair, None),
            })
            .collect(),
        None => ds
            .pairs
            .iter()
            .map(|p| Ok((p.pair, Some(ds.record(p.query)?.objects[p.gt_index].pose))))
            .collect::<Result<_, IoError>>()?,
    };
    let reports: Vec<_> = ds
        .pairs
        .par_iter()
        .map(|p| {
            let est = estimates.get(&p.pair).copied().flatten();
            score_pair(&ds, p, est.as_ref(), &meshes[&p.obj_id], cfg).map(|r| (p.pair, p.obj_id, r))
        })
        .collect::<Result<_, _>>()?;

    let mut lines: Vec<EvalLine> = Vec::new();
    let mut by_object: BTreeMap<u32, Vec<_>> = BTreeMap::new();
    let mut sorted: Vec<_> = reports;
    sorted.sort_by_key(|(pair, ..)| *pair);
    for (pair, obj_id, report) in sorted {
        by_object.entry(obj_id).or_default().push(report.clone());
        lines.push(EvalLine::PoseError { pair, report });
    }
    for (obj_id, reports) in &by_object {
        let table = pose_recalls(reports, &meshes[obj_id], &cfg.recall)?;
        eprintln!(
            "eval-pose: object {obj_id}: {} pairs ({} failed)  AR {:.2}  VSD {:.2}  MSSD {:.2}  MSPD {:.2}  ADD(S)-0.1d {:.2}  [{:?} VSD]",
            table.count, table.failed, table.ar, table.vsd, table.mssd, table.mspd, table.add_01d, table.vsd_variant
        );
        lines.push(EvalLine::Recall { obj_id: *obj_id, table });
    }
    write_records(a.out.as_deref(), &lines)
}
