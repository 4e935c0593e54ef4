use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{format_err, read_json, write_json, IoError};
use crate::geometry::{CameraIntrinsics, RigidTransform};

/// Stored depth units per meter unless a camera entry says otherwise.
pub const DEFAULT_DEPTH_SCALE: f64 = 1000.0;

/// One `scene_camera.json` entry. `depth_scale` follows the BOP convention:
/// millimeters per stored depth unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct CameraEntry {
    pub cam_K: [f64; 9],
    #[serde(default = "one")]
    pub depth_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
}

fn one() -> f64 {
    1.0
}

/// One `scene_gt.json` object: model-to-camera rotation (row-major) and
/// translation in millimeters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct GtEntry {
    pub cam_R_m2c: [f64; 9],
    pub cam_t_m2c: [f64; 3],
    pub obj_id: u32,
}

impl GtEntry {
    pub fn from_pose(pose: &RigidTransform, obj_id: u32) -> Self {
        let t = pose.translation() * 1000.0;
        Self {
            cam_R_m2c: pose.rotation_row_major(),
            cam_t_m2c: [t.x, t.y, t.z],
            obj_id,
        }
    }

    /// Model-to-camera pose in meters.
    pub fn pose(&self) -> Result<RigidTransform, IoError> {
        let r = Matrix3::from_row_slice(&self.cam_R_m2c);
        let t = Vector3::from_column_slice(&self.cam_t_m2c) / 1000.0;
        Ok(RigidTransform::new(r, t)?)
    }
}

/// One query/reference pairing from `pairs.json`. `gt_index` selects the
/// object in both images' ground-truth lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub pair: usize,
    pub query: usize,
    pub reference: usize,
    pub obj_id: u32,
    #[serde(default)]
    pub gt_index: usize,
    /// Generator metadata; ignored by readers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation_gap_deg: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectRecord {
    pub obj_id: u32,
    pub pose: RigidTransform,
    pub mask: PathBuf,
}

/// Everything known about one image. `depth_scale` divides stored values
/// into meters.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneRecord {
    pub image_id: usize,
    pub rgb: PathBuf,
    pub depth: PathBuf,
    /// Exact depth, when the dataset ships it next to the sensor depth.
    pub depth_gt: Option<PathBuf>,
    pub depth_scale: f64,
    pub intrinsics: CameraIntrinsics,
    pub objects: Vec<ObjectRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub root: PathBuf,
    pub records: BTreeMap<usize, SceneRecord>,
    pub pairs: Vec<PairEntry>,
}

impl Dataset {
    pub fn model_path(&self, obj_id: u32) -> PathBuf {
        self.root.join("models").join(format!("obj_{obj_id:06}.ply"))
    }

    pub fn record(&self, image_id: usize) -> Result<&SceneRecord, IoError> {
        self.records
            .get(&image_id)
            .ok_or_else(|| IoError::Invalid(format!("image {image_id} is not in {}", self.root.display())))
    }
}

pub fn mask_path(root: &Path, image_id: usize, gt_index: usize) -> PathBuf {
    root.join("mask").join(format!("{image_id:06}_{gt_index:06}.png"))
}

fn image_path(root: &Path, dir: &str, image_id: usize) -> PathBuf {
    root.join(dir).join(format!("{image_id:06}.png"))
}

fn png_size(path: &Path) -> Result<(usize, usize), IoError> {
    let file = std::fs::File::open(path).map_err(super::io_err(path))?;
    let reader = png::Decoder::new(std::io::BufReader::new(file))
        .read_info()
        .map_err(|e| format_err(path, e.to_string()))?;
    let info = reader.info();
    Ok((info.width as usize, info.height as usize))
}

fn require(path: PathBuf) -> Result<PathBuf, IoError> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(IoError::Invalid(format!("missing file {}", path.display())))
    }
}

/// Reads `scene_camera.json`, `scene_gt.json` and the optional `pairs.json`
/// of one scene directory and checks that every referenced file exists.
pub fn load_dataset(root: &Path) -> Result<Dataset, IoError> {
    let cameras: BTreeMap<usize, CameraEntry> = read_json(&root.join("scene_camera.json"))?;
    let gts: BTreeMap<usize, Vec<GtEntry>> = read_json(&root.join("scene_gt.json"))?;
    let pairs_path = root.join("pairs.json");
    let pairs: Vec<PairEntry> = if pairs_path.exists() { read_json(&pairs_path)? } else { Vec::new() };
    let mut records = BTreeMap::new();
    for (&id, cam) in &cameras {
        if !(cam.depth_scale.is_finite() && cam.depth_scale > 0.0) {
            return Err(IoError::Invalid(format!("image {id}: depth_scale must be positive")));
        }
        let rgb = require(image_path(root, "rgb", id))?;
        let depth = require(image_path(root, "depth", id))?;
        let depth_gt = Some(image_path(root, "depth_gt", id)).filter(|p| p.is_file());
        let (width, height) = match (cam.width, cam.height) {
            (Some(w), Some(h)) => (w, h),
            _ => png_size(&rgb)?,
        };
        let k = &cam.cam_K;
        let intrinsics = CameraIntrinsics::new(k[0], k[4], k[2], k[5], width, height)?;
        let objects = gts
            .get(&id)
            .map(|list| {
                list.iter()
                    .enumerate()
                    .map(|(g, e)| {
                        Ok(ObjectRecord {
                            obj_id: e.obj_id,
                            pose: e.pose()?,
                            mask: require(mask_path(root, id, g))?,
                        })
                    })
                    .collect::<Result<Vec<_>, IoError>>()
            })
            .transpose()?
            .unwrap_or_default();
        records.insert(
            id,
            SceneRecord {
                image_id: id,
                rgb,
                depth,
                depth_gt,
                depth_scale: 1000.0 / cam.depth_scale,
                intrinsics,
                objects,
            },
        );
    }
    let ds = Dataset {
        root: root.to_path_buf(),
        records,
        pairs,
    };
    for p in &ds.pairs {
        for id in [p.query, p.reference] {
            let r = ds.record(id)?;
            match r.objects.get(p.gt_index) {
                Some(o) if o.obj_id == p.obj_id => {}
                _ => {
                    return Err(IoError::Invalid(format!(
                        "pair {}: image {id} has no object {} at index {}",
                        p.pair, p.obj_id, p.gt_index
                    )))
                }
            }
        }
    }
    Ok(ds)
}

/// Writes the three JSON files of a scene directory.
pub fn write_dataset_json(
    root: &Path,
    cameras: &BTreeMap<usize, CameraEntry>,
    gts: &BTreeMap<usize, Vec<GtEntry>>,
    pairs: &[PairEntry],
) -> Result<(), IoError> {
    write_json(&root.join("scene_camera.json"), cameras)?;
    write_json(&root.join("scene_gt.json"), gts)?;
    write_json(&root.join("pairs.json"), &pairs)
}
