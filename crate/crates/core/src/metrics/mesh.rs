use nalgebra::Vector3;

use super::MetricError;
use crate::geometry::RigidTransform;

/// Triangle mesh in meters with its diameter and symmetry set. The symmetry
/// set always contains the identity, first.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshModel {
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[usize; 3]>,
    diameter: f64,
    symmetries: Vec<RigidTransform>,
}

/// Symmetries are checked against the vertex set within this fraction of
/// the diameter; violations are logged, not rejected.
pub const SYMMETRY_TOLERANCE: f64 = 1e-3;

impl MeshModel {
    pub fn new(
        vertices: Vec<Vector3<f64>>,
        triangles: Vec<[usize; 3]>,
        symmetries: Vec<RigidTransform>,
    ) -> Result<Self, MetricError> {
        if vertices.is_empty() {
            return Err(MetricError::InvalidMesh("no vertices".into()));
        }
        if let Some(v) = vertices.iter().find(|v| !v.iter().all(|x| x.is_finite())) {
            return Err(MetricError::InvalidMesh(format!("non-finite vertex {v:?}")));
        }
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= vertices.len())) {
            return Err(MetricError::InvalidMesh(format!(
                "triangle {t:?} indexes past {} vertices",
                vertices.len()
            )));
        }
        let diameter = diameter(&vertices);
        if !(diameter > 0.0) {
            return Err(MetricError::InvalidMesh("diameter is zero".into()));
        }
        let identity = RigidTransform::identity();
        let mut syms = vec![identity];
        syms.extend(symmetries.into_iter().filter(|s| *s != identity));
        let mesh = Self {
            vertices,
            triangles,
            diameter,
            symmetries: syms,
        };
        for (i, s) in mesh.symmetries.iter().enumerate().skip(1) {
            let dev = mesh.symmetry_deviation(s);
            if dev > SYMMETRY_TOLERANCE * diameter {
                log::warn!("symmetry {i} moves a vertex {dev:.3e} m from the model surface vertices");
            }
        }
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn symmetries(&self) -> &[RigidTransform] {
        &self.symmetries
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetries.len() > 1
    }

    pub fn with_symmetries(&self, symmetries: Vec<RigidTransform>) -> Result<Self, MetricError> {
        Self::new(self.vertices.clone(), self.triangles.clone(), symmetries)
    }

    /// Largest distance from a transformed vertex to its nearest original vertex.
    pub fn symmetry_deviation(&self, s: &RigidTransform) -> f64 {
        self.vertices
            .iter()
            .map(|v| {
                let p = s.apply_point(v);
                self.vertices
                    .iter()
                    .map(|w| (p - w).norm_squared())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
            .sqrt()
    }
}

/// Exact largest pairwise vertex distance. Vertices are visited in order of
/// decreasing distance `r` from the centroid; `r_i + r_j` bounds `|v_i - v_j|`,
/// so the search stops once no remaining pair can beat the best.
pub fn diameter(vertices: &[Vector3<f64>]) -> f64 {
    let n = vertices.len();
    if n < 2 {
        return 0.0;
    }
    let c = vertices.iter().sum::<Vector3<f64>>() / n as f64;
    let mut order: Vec<(f64, usize)> = vertices.iter().enumerate().map(|(i, v)| ((v - c).norm(), i)).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0));
    // slack keeps rounding in the bound from pruning the true maximum
    let bound = |a: f64, b: f64| (a + b) * (1.0 + 1e-9);
    let mut best = 0.0f64;
    for i in 0..n {
        if i + 1 < n && bound(order[i].0, order[i + 1].0) < best {
            break;
        }
        let vi = vertices[order[i].1];
        for &(rj, j) in &order[i + 1..] {
            if bound(order[i].0, rj) < best {
                break;
            }
            best = best.max((vi - vertices[j]).norm());
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(v: &[Vector3<f64>]) -> f64 {
        let mut best = 0.0f64;
        for a in v {
            for b in v {
                best = best.max((a - b).norm());
            }
        }
        best
    }

    #[test]
    fn cube_diameter() {
        let v: Vec<_> = (0..8)
            .map(|i| Vector3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
            .collect();
        assert!((diameter(&v) - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn identity_always_first() {
        let v = vec![Vector3::zeros(), Vector3::x()];
        let rz = RigidTransform::from_axis_angle(Vector3::z(), std::f64::consts::PI, Vector3::x());
        let m = MeshModel::new(v.clone(), vec![], vec![rz, RigidTransform::identity()]).unwrap();
        assert_eq!(m.symmetries().len(), 2);
        assert_eq!(m.symmetries()[0], RigidTransform::identity());
        assert!(m.symmetry_deviation(&m.symmetries()[1]) < 1e-12);
        assert!(MeshModel::new(vec![Vector3::zeros()], vec![], vec![]).is_err());
        assert!(MeshModel::new(v, vec![[0, 1, 2]], vec![]).is_err());
    }

    proptest! {
        #[test]
        fn pruned_search_equals_brute_force(pts in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 2..200)) {
            let v: Vec<_> = pts.into_iter().map(|(x, y, z)| Vector3::new(x, y, z)).collect();
            prop_assert_eq!(diameter(&v), brute(&v));
        }
    }
}
