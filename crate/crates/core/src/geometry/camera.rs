use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::grid::{check_shape, Grid, Mask};
use super::GeometryError;

/// Pinhole intrinsics. Pixel `(u, v)` has its center at integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let ok = self.fx.is_finite()
            && self.fy.is_finite()
            && self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cy >= 0.0
            && self.cx < self.width as f64
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(GeometryError::InvalidIntrinsics(format!("{self:?}")))
        }
    }

    /// Row-major 3x3 calibration matrix.
    pub fn matrix(&self) -> [f64; 9] {
        [self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0]
    }

    /// Intrinsics of the `width x height` window whose top-left pixel is `(x0, y0)`.
    ///
    /// Only the principal point moves; the focal lengths are unchanged.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self, GeometryError> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(GeometryError::InvalidInput(format!(
                "crop {width}x{height}+{x0}+{y0} exceeds {}x{}",
                self.width, self.height
            )));
        }
        Self::new(
            self.fx,
            self.fy,
            self.cx - x0 as f64,
            self.cy - y0 as f64,
            width,
            height,
        )
    }

    /// Viewing ray through a (possibly subpixel) position, normalized to `z = 1`.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    #[inline]
    pub fn backproject_pixel(&self, u: f64, v: f64, z: f64) -> Vector3<f64> {
        Vector3::new(z * (u - self.cx) / self.fx, z * (v - self.cy) / self.fy, z)
    }

    pub fn project_point(&self, p: &Vector3<f64>) -> Result<Vector2<f64>, GeometryError> {
        if !(p.z > 0.0) {
            return Err(GeometryError::BehindCamera { z: p.z });
        }
        Ok(Vector2::new(
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        ))
    }

    pub(crate) fn check_dims<T>(&self, what: &'static str, grid: &Grid<T>) -> Result<(), GeometryError> {
        if grid.shape() == (self.width, self.height) {
            Ok(())
        } else {
            Err(GeometryError::DimensionMismatch {
                what,
                expected: (self.width, self.height),
                actual: grid.shape(),
            })
        }
    }
}

/// Inclusive metric clamp range for valid depth values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthRange {
    pub min: f64,
    pub max: f64,
}

impl Default for DepthRange {
    fn default() -> Self {
        Self { min: 0.3, max: 8.0 }
    }
}

/// Dense metric depth in meters. A pixel is valid iff its value is `> 0`;
/// invalid pixels hold exactly `0.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    grid: Grid<f64>,
}

impl DepthMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            grid: Grid::new(width, height, 0.0),
        }
    }

    /// Non-positive and non-finite entries become invalid (0).
    pub fn from_vec(width: usize, height: usize, values: Vec<f64>) -> Result<Self, GeometryError> {
        let mut grid = Grid::from_vec(width, height, values)?;
        for z in grid.data_mut() {
            if !(z.is_finite() && *z > 0.0) {
                *z = 0.0;
            }
        }
        Ok(Self { grid })
    }

    pub fn from_fn(width: usize, height: usize, f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut grid = Grid::from_fn(width, height, f);
        for z in grid.data_mut() {
            if !(z.is_finite() && *z > 0.0) {
                *z = 0.0;
            }
        }
        Self { grid }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.grid.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.grid.height()
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        *self.grid.get(u, v)
    }

    #[inline]
    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        *self.grid.get(u, v) > 0.0
    }

    /// Sets a pixel; values that are not strictly positive store as invalid.
    pub fn set(&mut self, u: usize, v: usize, z: f64) {
        let z = if z.is_finite() && z > 0.0 { z } else { 0.0 };
        self.grid.set(u, v, z);
    }

    pub fn as_grid(&self) -> &Grid<f64> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        self.grid.data()
    }

    pub fn validity(&self) -> Mask {
        self.grid.map(|&z| z > 0.0)
    }

    pub fn valid_count(&self) -> usize {
        self.grid.data().iter().filter(|&&z| z > 0.0).count()
    }

    /// Clamps valid pixels into `range`; returns how many were changed.
    pub fn clamp(&mut self, range: DepthRange) -> usize {
        let mut clamped = 0;
        for z in self.grid.data_mut() {
            if *z > 0.0 {
                let c = z.clamp(range.min, range.max);
                if c != *z {
                    *z = c;
                    clamped += 1;
                }
            }
        }
        clamped
    }

    /// Min and max over valid pixels.
    pub fn valid_min_max(&self) -> Option<(f64, f64)> {
        let mut it = self.grid.data().iter().copied().filter(|&z| z > 0.0);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), z| (lo.min(z), hi.max(z))))
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self, GeometryError> {
        if x0 + width > self.width() || y0 + height > self.height() {
            return Err(GeometryError::InvalidInput("depth crop out of bounds".into()));
        }
        Ok(Self {
            grid: Grid::from_fn(width, height, |u, v| self.get(u + x0, v + y0)),
        })
    }
}

/// 3D points with an optional source pixel per point.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    pub pixels: Option<Vec<(usize, usize)>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        Self {
            points,
            pixels: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Lifts every valid (and masked-in) pixel to a camera-frame point.
pub fn backproject(
    depth: &DepthMap,
    k: &CameraIntrinsics,
    mask: Option<&Mask>,
) -> Result<PointCloud, GeometryError> {
    k.check_dims("intrinsics vs depth", depth.as_grid())?;
    if let Some(m) = mask {
        check_shape("mask vs depth", depth.as_grid(), m)?;
    }
    let mut points = Vec::new();
    let mut pixels = Vec::new();
    for v in 0..depth.height() {
        for u in 0..depth.width() {
            let z = depth.get(u, v);
            if z <= 0.0 || mask.is_some_and(|m| !*m.get(u, v)) {
                continue;
            }
            points.push(k.backproject_pixel(u as f64, v as f64, z));
            pixels.push((u, v));
        }
    }
    Ok(PointCloud {
        points,
        pixels: Some(pixels),
    })
}

pub fn project(points: &PointCloud, k: &CameraIntrinsics) -> Result<Vec<Vector2<f64>>, GeometryError> {
    points.points.iter().map(|p| k.project_point(p)).collect()
}
