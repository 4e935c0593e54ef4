use nalgebra::{Vector2, Vector3};

use super::MeshModel;
use crate::geometry::{CameraIntrinsics, DepthMap, Grid, RigidTransform};

/// Marks pixels not covered by any triangle in [`Rendering::face`].
pub const NO_FACE: u32 = u32::MAX;

/// Z-buffer output: depth, the winning triangle and the object-space surface
/// point per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendering {
    pub depth: DepthMap,
    pub face: Grid<u32>,
    pub object_points: Grid<Vector3<f64>>,
}

impl Rendering {
    pub fn coverage(&self) -> usize {
        self.face.data().iter().filter(|&&f| f != NO_FACE).count()
    }
}

#[inline]
fn edge(a: &Vector2<f64>, b: &Vector2<f64>, p: &Vector2<f64>) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// Rasterizes `mesh` under `pose` at integer pixel centers. Depth is
/// interpolated perspective-correctly (linear in `1/z`); triangles with a
/// vertex at `z <= 0` are skipped. Nearer surfaces win; on exact depth ties
/// the lower triangle index wins.
pub fn render(mesh: &MeshModel, pose: &RigidTransform, k: &CameraIntrinsics) -> Rendering {
    let (w, h) = (k.width, k.height);
    let mut zbuf = Grid::new(w, h, f64::INFINITY);
    let mut face = Grid::new(w, h, NO_FACE);
    let mut object_points = Grid::new(w, h, Vector3::zeros());
    let cam: Vec<Vector3<f64>> = mesh.vertices().iter().map(|v| pose.apply_point(v)).collect();
    for (ti, tri) in mesh.triangles().iter().enumerate() {
        let p = tri.map(|i| cam[i]);
        if p.iter().any(|q| !(q.z > 0.0)) {
            continue;
        }
        let s = p.map(|q| Vector2::new(k.fx * q.x / q.z + k.cx, k.fy * q.y / q.z + k.cy));
        let area = edge(&s[0], &s[1], &s[2]);
        if !(area.abs() > 1e-12) {
            continue;
        }
        let lo = |f: fn(&Vector2<f64>) -> f64| s.iter().map(f).fold(f64::INFINITY, f64::min).ceil().max(0.0);
        let hi = |f: fn(&Vector2<f64>) -> f64, n: usize| {
            s.iter().map(f).fold(f64::NEG_INFINITY, f64::max).floor().min(n as f64 - 1.0)
        };
        let (u0, u1) = (lo(|q| q.x), hi(|q| q.x, w));
        let (v0, v1) = (lo(|q| q.y), hi(|q| q.y, h));
        if u0 > u1 || v0 > v1 {
            continue;
        }
        let inv_z = p.map(|q| 1.0 / q.z);
        let obj = tri.map(|i| mesh.vertices()[i]);
        for v in v0 as usize..=v1 as usize {
            for u in u0 as usize..=u1 as usize {
                let px = Vector2::new(u as f64, v as f64);
                let b0 = edge(&s[1], &s[2], &px) / area;
                let b1 = edge(&s[2], &s[0], &px) / area;
                let b2 = edge(&s[0], &s[1], &px) / area;
                if b0 < 0.0 || b1 < 0.0 || b2 < 0.0 {
                    continue;
                }
                // expanded around vertex 2 so equal vertex depths interpolate exactly
                let iz = inv_z[2] + b0 * (inv_z[0] - inv_z[2]) + b1 * (inv_z[1] - inv_z[2]);
                let z = 1.0 / iz;
                if !(z > 0.0) || z >= *zbuf.get(u, v) {
                    continue;
                }
                zbuf.set(u, v, z);
                face.set(u, v, ti as u32);
                let wts = [b0 * inv_z[0] * z, b1 * inv_z[1] * z, b2 * inv_z[2] * z];
                object_points.set(u, v, obj[0] * wts[0] + obj[1] * wts[1] + obj[2] * wts[2]);
            }
        }
    }
    let depth = DepthMap::from_fn(w, h, |u, v| {
        let z = *zbuf.get(u, v);
        if z.is_finite() {
            z
        } else {
            0.0
        }
    });
    Rendering {
        depth,
        face,
        object_points,
    }
}

/// Depth-only convenience wrapper around [`render`].
pub fn render_depth(mesh: &MeshModel, pose: &RigidTransform, k: &CameraIntrinsics) -> DepthMap {
    render(mesh, pose, k).depth
}
