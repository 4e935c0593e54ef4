use nalgebra::Vector3;

use super::camera::{CameraIntrinsics, DepthMap};
use super::grid::{Grid, Mask};
use super::GeometryError;

/// Per-pixel forward differences `(d/du, d/dv)` of a scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMap {
    pub du: Grid<f64>,
    pub dv: Grid<f64>,
}

impl GradientMap {
    pub fn width(&self) -> usize {
        self.du.width()
    }

    pub fn height(&self) -> usize {
        self.du.height()
    }

    #[inline]
    pub fn magnitude(&self, u: usize, v: usize) -> f64 {
        self.du.get(u, v).hypot(*self.dv.get(u, v))
    }

    pub fn magnitude_map(&self) -> Grid<f64> {
        Grid::from_fn(self.width(), self.height(), |u, v| self.magnitude(u, v))
    }
}

/// Forward-difference gradient.
///
/// `d/du` at `(u, v)` is `f(u+1, v) - f(u, v)` when both pixels are valid and
/// `u + 1` is inside the image, otherwise 0 (same for `d/dv`).
pub fn scalar_gradient(field: &Grid<f64>, validity: &Mask) -> GradientMap {
    assert!(field.same_shape(validity), "field and validity shapes differ");
    let (w, h) = field.shape();
    let mut du = Grid::new(w, h, 0.0);
    let mut dv = Grid::new(w, h, 0.0);
    for v in 0..h {
        for u in 0..w {
            if !*validity.get(u, v) {
                continue;
            }
            let f0 = *field.get(u, v);
            if u + 1 < w && *validity.get(u + 1, v) {
                du.set(u, v, *field.get(u + 1, v) - f0);
            }
            if v + 1 < h && *validity.get(u, v + 1) {
                dv.set(u, v, *field.get(u, v + 1) - f0);
            }
        }
    }
    GradientMap { du, dv }
}

/// Unit surface normals; `valid` is false where no normal could be formed.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    pub normals: Grid<Vector3<f64>>,
    pub valid: Mask,
}

impl NormalMap {
    pub fn width(&self) -> usize {
        self.normals.width()
    }

    pub fn height(&self) -> usize {
        self.normals.height()
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Option<Vector3<f64>> {
        if *self.valid.get(u, v) {
            Some(*self.normals.get(u, v))
        } else {
            None
        }
    }
}

/// Cross product norms below this are treated as degenerate.
pub const DEGENERATE_NORMAL: f64 = 1e-12;

/// Unnormalized `P_u x P_v` at `(u, v)`, or `None` if a stencil pixel is invalid.
#[inline]
pub fn normal_cross(depth: &DepthMap, k: &CameraIntrinsics, u: usize, v: usize) -> Option<Vector3<f64>> {
    if u + 1 >= depth.width() || v + 1 >= depth.height() {
        return None;
    }
    let (z0, z1, z2) = (depth.get(u, v), depth.get(u + 1, v), depth.get(u, v + 1));
    if z0 <= 0.0 || z1 <= 0.0 || z2 <= 0.0 {
        return None;
    }
    let (uf, vf) = (u as f64, v as f64);
    let p0 = k.backproject_pixel(uf, vf, z0);
    let pu = k.backproject_pixel(uf + 1.0, vf, z1) - p0;
    let pv = k.backproject_pixel(uf, vf + 1.0, z2) - p0;
    Some(pu.cross(&pv))
}

/// Normals from the cross product of horizontal and vertical point
/// differences, flipped to face the camera (`n.z <= 0`).
pub fn normals_from_depth(depth: &DepthMap, k: &CameraIntrinsics) -> Result<NormalMap, GeometryError> {
    k.check_dims("intrinsics vs depth", depth.as_grid())?;
    let (w, h) = (depth.width(), depth.height());
    let mut normals = Grid::new(w, h, Vector3::zeros());
    let mut valid = Grid::new(w, h, false);
    for v in 0..h {
        for u in 0..w {
            let Some(c) = normal_cross(depth, k, u, v) else {
                continue;
            };
            let n = c.norm();
            if n < DEGENERATE_NORMAL {
                continue;
            }
            let mut unit = c / n;
            if unit.z > 0.0 {
                unit = -unit;
            }
            normals.set(u, v, unit);
            valid.set(u, v, true);
        }
    }
    Ok(NormalMap { normals, valid })
}
