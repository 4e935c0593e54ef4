use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::image::RgbImage;
use super::{
    io_err, mask_path, save_depth_png, save_mask_png, save_rgb_png, write_dataset_json, write_ply_ascii, CameraEntry,
    GtEntry, IoError, PairEntry,
};
use crate::geometry::{CameraIntrinsics, DepthMap, DepthRange, Grid, Mask, RigidTransform};
use crate::metrics::{render, MeshModel, NO_FACE};

/// Procedural query/reference scenes sharing one textured target cuboid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub pairs: usize,
    /// Extra cuboids per image besides the target.
    pub distractors: usize,
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub d_min: f64,
    pub d_max: f64,
    /// Range of the target's distance from the camera, meters.
    pub target_distance: [f64; 2],
    pub background_distance: [f64; 2],
    /// Sinusoid count of each solid texture.
    pub texture_richness: usize,
    /// Gaussian depth noise, meters.
    pub noise_std: f64,
    /// Fraction of depth pixels replaced by uniform values in the range.
    pub outlier_fraction: f64,
    /// Reference-minus-query rotation about the target center, per camera
    /// axis; each pair draws its own signs.
    pub rotation_gap_deg: [f64; 3],
    pub seed: u64,
    /// Stored depth units per meter.
    pub depth_scale: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let r = DepthRange::default();
        Self {
            pairs: 8,
            distractors: 2,
            width: 256,
            height: 256,
            focal: 400.0,
            d_min: r.min,
            d_max: r.max,
            target_distance: [0.6, 0.9],
            background_distance: [1.5, 3.0],
            texture_richness: 12,
            noise_std: 0.0,
            outlier_fraction: 0.0,
            rotation_gap_deg: [0.0, 45.0, 0.0],
            seed: 0,
            depth_scale: 1000.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), IoError> {
        let bad = |m: String| Err(IoError::Invalid(format!("synth: {m}")));
        if self.pairs == 0 {
            return bad("pairs must be at least 1".into());
        }
        if self.width < 16 || self.height < 16 || self.width % 8 != 0 || self.height % 8 != 0 {
            return bad(format!("image size {}x{} must be multiples of 8, at least 16", self.width, self.height));
        }
        if !(self.focal > 0.0 && self.focal.is_finite()) || !(self.depth_scale > 0.0) {
            return bad("focal and depth_scale must be positive".into());
        }
        if !(self.d_min > 0.0 && self.d_min < self.d_max) {
            return bad(format!("depth range [{}, {}]", self.d_min, self.d_max));
        }
        for (name, [lo, hi]) in [("target_distance", self.target_distance), ("background_distance", self.background_distance)] {
            if !(self.d_min <= lo && lo <= hi && hi <= self.d_max) {
                return bad(format!("{name} [{lo}, {hi}] must lie inside [{}, {}]", self.d_min, self.d_max));
            }
        }
        if self.background_distance[0] <= self.target_distance[1] + 0.5 {
            return bad("background must be at least 0.5 m behind the target".into());
        }
        if self.texture_richness == 0 {
            return bad("texture_richness must be at least 1".into());
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) || !(0.0..=1.0).contains(&self.outlier_fraction) {
            return bad("noise_std must be >= 0 and outlier_fraction in [0, 1]".into());
        }
        if self.rotation_gap_deg.iter().any(|g| !g.is_finite()) {
            return bad("rotation gap must be finite".into());
        }
        Ok(())
    }

    fn range(&self) -> DepthRange {
        DepthRange {
            min: self.d_min,
            max: self.d_max,
        }
    }

    fn intrinsics(&self) -> CameraIntrinsics {
        CameraIntrinsics::new(
            self.focal,
            self.focal,
            (self.width as f64 - 1.0) / 2.0,
            (self.height as f64 - 1.0) / 2.0,
            self.width,
            self.height,
        )
        .expect("validated")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub root: PathBuf,
    pub pairs: usize,
    pub images: usize,
    pub target_diameter: f64,
}

/// Color as a sum of plane waves in object coordinates, so the appearance of
/// a surface point does not depend on the viewpoint.
#[derive(Debug, Clone)]
struct SolidTexture {
    waves: Vec<(Vector3<f64>, f64, [f64; 3])>,
}

impl SolidTexture {
    fn random(rng: &mut ChaCha8Rng, count: usize, wavelength: [f64; 2]) -> Self {
        let amp = 0.9 / (count as f64).sqrt();
        let waves = (0..count)
            .map(|_| {
                let dir = loop {
                    let d = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
                    if d.norm() > 1e-3 {
                        break d.normalize();
                    }
                };
                let k = dir * (2.0 * PI / rng.random_range(wavelength[0]..wavelength[1]));
                let phase = rng.random_range(0.0..2.0 * PI);
                let a = [0; 3].map(|_| rng.random_range(-amp..amp));
                (k, phase, a)
            })
            .collect();
        Self { waves }
    }

    fn color(&self, p: &Vector3<f64>) -> [u8; 3] {
        let mut c = [0.5; 3];
        for (k, phase, a) in &self.waves {
            let s = (k.dot(p) + phase).sin();
            for (ch, ai) in c.iter_mut().zip(a) {
                *ch += ai * s;
            }
        }
        c.map(|x| (x.clamp(0.0, 1.0) * 255.0).round() as u8)
    }
}

fn cuboid(half: Vector3<f64>) -> MeshModel {
    let v = (0..8)
        .map(|i| {
            Vector3::new(
                if i & 1 == 0 { -half.x } else { half.x },
                if i & 2 == 0 { -half.y } else { half.y },
                if i & 4 == 0 { -half.z } else { half.z },
            )
        })
        .collect();
    let quads = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
    let t = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect();
    MeshModel::new(v, t, vec![]).expect("cuboid is valid")
}

/// Fronto-parallel plane at depth `z` covering the whole view.
fn backdrop(z: f64, k: &CameraIntrinsics) -> MeshModel {
    let hx = z * (k.width as f64 / k.fx) + 0.1;
    let hy = z * (k.height as f64 / k.fy) + 0.1;
    let v = vec![
        Vector3::new(-hx, -hy, z),
        Vector3::new(hx, -hy, z),
        Vector3::new(hx, hy, z),
        Vector3::new(-hx, hy, z),
    ];
    MeshModel::new(v, vec![[0, 1, 2], [0, 2, 3]], vec![]).expect("backdrop is valid")
}

fn random_rotation(rng: &mut ChaCha8Rng, t: Vector3<f64>) -> RigidTransform {
    let axis = loop {
        let a = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        if a.norm() > 1e-3 {
            break a;
        }
    };
    RigidTransform::from_axis_angle(axis, rng.random_range(0.0..PI), t)
}

struct Target {
    mesh: MeshModel,
    texture: SolidTexture,
}

struct View {
    rgb: RgbImage,
    depth_gt: DepthMap,
    depth: DepthMap,
    mask: Mask,
}

/// Renders the target under `pose` with a freshly drawn backdrop and
/// distractors, then derives the sensor depth.
fn render_view(cfg: &SynthConfig, k: &CameraIntrinsics, target: &Target, pose: &RigidTransform, rng: &mut ChaCha8Rng) -> View {
    let mut objects: Vec<(MeshModel, RigidTransform, SolidTexture)> = Vec::new();
    let bz = rng.random_range(cfg.background_distance[0]..=cfg.background_distance[1]);
    objects.push((backdrop(bz, k), RigidTransform::identity(), SolidTexture::random(rng, cfg.texture_richness, [0.05, 0.4])));
    let tz = pose.translation().z;
    for _ in 0..cfg.distractors {
        let half = Vector3::from_fn(|_, _| rng.random_range(0.02..0.05));
        let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let z = (tz + rng.random_range(0.05..0.4)).min(bz - 0.1);
        let t = Vector3::new(side * rng.random_range(0.12..0.2) * z, rng.random_range(-0.1..0.1) * z, z);
        let texture = SolidTexture::random(rng, cfg.texture_richness, [0.012, 0.05]);
        objects.push((cuboid(half), random_rotation(rng, t), texture));
    }
    objects.push((target.mesh.clone(), *pose, target.texture.clone()));
    let target_index = objects.len() - 1;

    let (w, h) = (k.width, k.height);
    let mut depth_gt = DepthMap::zeros(w, h);
    let mut owner = Grid::new(w, h, usize::MAX);
    let mut rgb = RgbImage::new(w, h);
    for (i, (mesh, pose, texture)) in objects.iter().enumerate() {
        let r = render(mesh, pose, k);
        for v in 0..h {
            for u in 0..w {
                let z = r.depth.get(u, v);
                if *r.face.get(u, v) == NO_FACE || !(z > 0.0) {
                    continue;
                }
                let current = depth_gt.get(u, v);
                if current == 0.0 || z < current {
                    depth_gt.set(u, v, z);
                    owner.set(u, v, i);
                    rgb.set_pixel(u, v, texture.color(r.object_points.get(u, v)));
                }
            }
        }
    }
    depth_gt.clamp(cfg.range());
    let mask = owner.map(|&o| o == target_index);

    let mut depth = depth_gt.clone();
    let noise = Normal::new(0.0, cfg.noise_std).expect("validated");
    for v in 0..h {
        for u in 0..w {
            let z = depth.get(u, v);
            if z <= 0.0 {
                continue;
            }
            // draws happen on every valid pixel so the stream does not depend on the values
            let n = noise.sample(rng);
            let replace = rng.random_bool(cfg.outlier_fraction);
            let o = rng.random_range(cfg.d_min..=cfg.d_max);
            depth.set(u, v, if replace { o } else { z + n });
        }
    }
    let range = cfg.range();
    for z in 0..w * h {
        let (u, v) = (z % w, z / w);
        let d = depth.get(u, v);
        if d != 0.0 {
            depth.set(u, v, d.clamp(range.min, range.max));
        }
    }
    View {
        rgb,
        depth_gt,
        depth,
        mask,
    }
}

fn write_view(root: &Path, id: usize, view: &View, scale: f64) -> Result<(), IoError> {
    let name = format!("{id:06}.png");
    save_rgb_png(&root.join("rgb").join(&name), &view.rgb)?;
    save_depth_png(&root.join("depth").join(&name), &view.depth, scale)?;
    save_depth_png(&root.join("depth_gt").join(&name), &view.depth_gt, scale)?;
    save_mask_png(&mask_path(root, id, 0), &view.mask)
}

/// Writes a BOP-style scene directory with `cfg.pairs` query/reference
/// pairs: image `2p` is the query and `2p + 1` the reference of pair `p`.
/// The output is a pure function of `cfg`.
pub fn synth_dataset(cfg: &SynthConfig, root: &Path) -> Result<SynthSummary, IoError> {
    cfg.validate()?;
    for dir in ["rgb", "depth", "depth_gt", "mask", "models"] {
        let d = root.join(dir);
        std::fs::create_dir_all(&d).map_err(io_err(&d))?;
    }
    let k = cfg.intrinsics();
    let mut model_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let half = Vector3::new(
        model_rng.random_range(0.06..0.09),
        model_rng.random_range(0.045..0.07),
        model_rng.random_range(0.035..0.055),
    );
    let target = Target {
        mesh: cuboid(half),
        texture: SolidTexture::random(&mut model_rng, cfg.texture_richness, [0.012, 0.05]),
    };
    write_ply_ascii(&root.join("models").join("obj_000001.ply"), target.mesh.vertices(), target.mesh.triangles())?;

    let gap = cfg.rotation_gap_deg.map(f64::to_radians);
    let per_pair = (0..cfg.pairs)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(1 + p as u64);
            let t = Vector3::new(
                rng.random_range(-0.03..0.03),
                rng.random_range(-0.03..0.03),
                rng.random_range(cfg.target_distance[0]..=cfg.target_distance[1]),
            );
            let pose_q = random_rotation(&mut rng, t);
            let signs = [0; 3].map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 });
            let signed = [gap[0] * signs[0], gap[1] * signs[1], gap[2] * signs[2]];
            // rotate about the target center, which sits at the pose translation
            let r_gap = RigidTransform::from_euler_xyz(signed[0], signed[1], signed[2], Vector3::zeros());
            let pose_r = RigidTransform::new(r_gap.rotation() * pose_q.rotation(), *pose_q.translation())?;
            let query = render_view(cfg, &k, &target, &pose_q, &mut rng);
            let reference = render_view(cfg, &k, &target, &pose_r, &mut rng);
            write_view(root, 2 * p, &query, cfg.depth_scale)?;
            write_view(root, 2 * p + 1, &reference, cfg.depth_scale)?;
            Ok((p, pose_q, pose_r, signed.map(f64::to_degrees)))
        })
        .collect::<Result<Vec<_>, IoError>>()?;

    let camera = CameraEntry {
        cam_K: [k.fx, 0.0, k.cx, 0.0, k.fy, k.cy, 0.0, 0.0, 1.0],
        depth_scale: 1000.0 / cfg.depth_scale,
        width: Some(k.width),
        height: Some(k.height),
    };
    let mut cameras = BTreeMap::new();
    let mut gts = BTreeMap::new();
    let mut pairs = Vec::new();
    for (p, pose_q, pose_r, gap_deg) in per_pair {
        for (id, pose) in [(2 * p, pose_q), (2 * p + 1, pose_r)] {
            cameras.insert(id, camera.clone());
            gts.insert(id, vec![GtEntry::from_pose(&pose, 1)]);
        }
        pairs.push(PairEntry {
            pair: p,
            query: 2 * p,
            reference: 2 * p + 1,
            obj_id: 1,
            gt_index: 0,
            rotation_gap_deg: Some(gap_deg),
        });
    }
    write_dataset_json(root, &cameras, &gts, &pairs)?;
    Ok(SynthSummary {
        root: root.to_path_buf(),
        pairs: cfg.pairs,
        images: 2 * cfg.pairs,
        target_diameter: target.mesh.diameter(),
    })
}
