use nalgebra::Vector3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use refpose_core::geometry::{CameraIntrinsics, DepthMap, RigidTransform};
use refpose_core::metrics::{
    add_error, depth_metrics, mspd, mssd, render_depth, vsd, MeshModel, DEFAULT_DELTAS,
};

fn random_pose(rng: &mut ChaCha8Rng, depth: f64) -> RigidTransform {
    RigidTransform::from_euler_xyz(
        rng.random_range(-3.0..3.0),
        rng.random_range(-3.0..3.0),
        rng.random_range(-3.0..3.0),
        Vector3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), depth),
    )
}

fn random_mesh(rng: &mut ChaCha8Rng, n: usize, syms: usize) -> MeshModel {
    let v = (0..n)
        .map(|_| Vector3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)))
        .collect();
    let s = (0..syms).map(|_| random_pose(rng, 0.0)).collect();
    MeshModel::new(v, vec![], s).unwrap()
}

fn brute_mssd(hat: &RigidTransform, bar: &RigidTransform, m: &MeshModel) -> f64 {
    let mut best = f64::INFINITY;
    for s in m.symmetries() {
        let mut worst = 0.0f64;
        for x in m.vertices() {
            let a = hat.apply_point(x);
            let b = bar.apply_point(&s.apply_point(x));
            worst = worst.max((a - b).norm());
        }
        best = best.min(worst);
    }
    best
}

fn brute_mspd(hat: &RigidTransform, bar: &RigidTransform, m: &MeshModel, k: &CameraIntrinsics) -> f64 {
    let proj = |p: Vector3<f64>| nalgebra::Vector2::new(k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy);
    let mut best = f64::INFINITY;
    for s in m.symmetries() {
        let mut worst = 0.0f64;
        for x in m.vertices() {
            let a = proj(hat.apply_point(x));
            let b = proj(bar.apply_point(&s.apply_point(x)));
            worst = worst.max((a - b).norm());
        }
        best = best.min(worst);
    }
    best
}

#[test]
fn mssd_and_mspd_equal_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let k = CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).unwrap();
    for _ in 0..50 {
        let n = rng.random_range(3..=500);
        let syms = rng.random_range(0..=3);
        let m = random_mesh(&mut rng, n, syms);
        let hat = random_pose(&mut rng, 1.0);
        let bar = random_pose(&mut rng, 1.0);
        assert_eq!(mssd(&hat, &bar, &m), brute_mssd(&hat, &bar, &m));
        assert_eq!(mspd(&hat, &bar, &m, &k).unwrap(), brute_mspd(&hat, &bar, &m, &k));
    }
}

#[test]
fn pure_translation() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let m = random_mesh(&mut rng, 100, 0);
        let bar = random_pose(&mut rng, 1.0);
        let t = Vector3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
        let hat = RigidTransform::from_translation(t).compose(&bar);
        assert!((add_error(&hat, &bar, &m, false) - t.norm()).abs() < 1e-12);
        assert!((mssd(&hat, &bar, &m) - t.norm()).abs() < 1e-12);
    }
}

#[test]
fn z_translation_changes_mspd() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let k = CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).unwrap();
    let m = random_mesh(&mut rng, 50, 0);
    let bar = RigidTransform::from_translation(Vector3::new(0.0, 0.0, 1.0));
    let hat = RigidTransform::from_translation(Vector3::new(0.0, 0.0, 1.2));
    let got = mspd(&hat, &bar, &m, &k).unwrap();
    assert!(got > 0.0);
    assert_eq!(got, brute_mspd(&hat, &bar, &m, &k));
}

#[test]
fn vsd_of_a_z_shifted_quad() {
    // edges at ±5.25 px and ±5.2448 px: same pixels covered by both renderings
    let v = vec![
        Vector3::new(-0.105, -0.105, 0.0),
        Vector3::new(0.105, -0.105, 0.0),
        Vector3::new(0.105, 0.105, 0.0),
        Vector3::new(-0.105, 0.105, 0.0),
    ];
    let m = MeshModel::new(v, vec![[0, 1, 2], [0, 2, 3]], vec![]).unwrap();
    let k = CameraIntrinsics::new(50.0, 50.0, 20.0, 20.0, 41, 41).unwrap();
    for eps in [1e-4, 1e-3, 5e-3] {
        let bar = RigidTransform::from_translation(Vector3::new(0.0, 0.0, 1.0));
        let hat = RigidTransform::from_translation(Vector3::new(0.0, 0.0, 1.0 + eps));
        let got = vsd(&hat, &bar, &m, &k, 0.015, None).unwrap();
        assert!((got - eps).abs() < 1e-12, "{got} vs {eps}");
    }
}

fn uv_sphere(r: f64, rings: usize, segments: usize) -> MeshModel {
    use std::f64::consts::PI;
    let mut v = vec![Vector3::new(0.0, 0.0, -r), Vector3::new(0.0, 0.0, r)];
    for i in 1..rings {
        let th = PI * i as f64 / rings as f64;
        for j in 0..segments {
            let ph = 2.0 * PI * j as f64 / segments as f64;
            v.push(Vector3::new(r * th.sin() * ph.cos(), r * th.sin() * ph.sin(), -r * th.cos()));
        }
    }
    let at = |i: usize, j: usize| 2 + (i - 1) * segments + j % segments;
    let mut t = Vec::new();
    for j in 0..segments {
        t.push([0, at(1, j), at(1, j + 1)]);
        t.push([1, at(rings - 1, j + 1), at(rings - 1, j)]);
    }
    for i in 1..rings - 1 {
        for j in 0..segments {
            t.push([at(i, j), at(i + 1, j), at(i + 1, j + 1)]);
            t.push([at(i, j), at(i + 1, j + 1), at(i, j + 1)]);
        }
    }
    MeshModel::new(v, t, vec![]).unwrap()
}

#[test]
fn sphere_front_depth() {
    // the pole faces the camera and projects onto the pixel at the principal point
    let (r, c) = (0.1, 0.6);
    let k = CameraIntrinsics::new(300.0, 300.0, 32.0, 32.0, 65, 65).unwrap();
    let d = render_depth(&uv_sphere(r, 24, 48), &RigidTransform::from_translation(Vector3::new(0.0, 0.0, c)), &k);
    let min = d.values().iter().copied().filter(|z| *z > 0.0).fold(f64::INFINITY, f64::min);
    assert!((min - (c - r)).abs() < 1e-12, "{min}");
    // the silhouette radius of a ball at distance c is f·r/sqrt(c² − r²)
    let radius = 300.0 * r / (c * c - r * r).sqrt();
    for v in 0..65 {
        for u in 0..65 {
            let rho = ((u as f64 - 32.0).powi(2) + (v as f64 - 32.0).powi(2)).sqrt();
            if rho > radius + 0.5 {
                assert_eq!(d.get(u, v), 0.0);
            }
            if rho < radius * 0.95 {
                assert!(d.get(u, v) > 0.0);
            }
        }
    }
}

#[test]
fn add_s_on_a_rotated_circle() {
    let n = 360;
    let r = 0.1;
    let pts: Vec<_> = (0..n)
        .map(|i| {
            let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            Vector3::new(r * a.cos(), r * a.sin(), 0.0)
        })
        .collect();
    let m = MeshModel::new(pts.clone(), vec![], vec![]).unwrap();
    let bar = RigidTransform::from_translation(Vector3::new(0.0, 0.0, 1.0));
    let hat = bar.compose(&RigidTransform::from_axis_angle(Vector3::z(), 0.3, Vector3::zeros()));
    let spacing = 2.0 * r * (std::f64::consts::PI / n as f64).sin();
    let got = add_error(&hat, &bar, &m, true);
    // brute-force nearest neighbour oracle
    let oracle = pts
        .iter()
        .map(|x| {
            let e = hat.apply_point(x);
            pts.iter().map(|y| (e - bar.apply_point(y)).norm()).fold(f64::INFINITY, f64::min)
        })
        .sum::<f64>()
        / n as f64;
    assert!((got - oracle).abs() < 1e-12);
    assert!(got <= spacing);
    assert!(add_error(&hat, &bar, &m, false) > 10.0 * spacing);
}

#[test]
fn delta_accuracy_monotone_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..100 {
        let gt = DepthMap::from_fn(16, 12, |_, _| rng.random_range(0.3..5.0));
        let pred = DepthMap::from_fn(16, 12, |u, v| gt.get(u, v) * rng.random_range(0.7..1.4));
        let m = depth_metrics(&pred, &gt, None, &DEFAULT_DELTAS).unwrap();
        let d: Vec<f64> = m.deltas.iter().map(|x| x.1.unwrap()).collect();
        assert!(d[0] <= d[1] && d[1] <= d[2], "{d:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn more_symmetries_never_increase_mssd(seed in any::<u64>(), extra in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let small = random_mesh(&mut rng, 40, 1);
        let mut syms = small.symmetries().to_vec();
        syms.extend((0..extra).map(|_| random_pose(&mut rng, 0.0)));
        let large = small.with_symmetries(syms).unwrap();
        let hat = random_pose(&mut rng, 1.0);
        let bar = random_pose(&mut rng, 1.0);
        prop_assert!(mssd(&hat, &bar, &large) <= mssd(&hat, &bar, &small));
    }

    #[test]
    fn mssd_bounds_add(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_mesh(&mut rng, 60, 0);
        let hat = random_pose(&mut rng, 1.0);
        let bar = random_pose(&mut rng, 1.0);
        prop_assert!(mssd(&hat, &bar, &m) >= add_error(&hat, &bar, &m, false));
    }

    #[test]
    fn errors_ignore_vertex_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_mesh(&mut rng, 30, 2);
        let mut v = m.vertices().to_vec();
        v.reverse();
        let r = MeshModel::new(v, vec![], m.symmetries().to_vec()).unwrap();
        let k = CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).unwrap();
        let hat = random_pose(&mut rng, 1.0);
        let bar = random_pose(&mut rng, 1.0);
        prop_assert_eq!(mssd(&hat, &bar, &m), mssd(&hat, &bar, &r));
        prop_assert_eq!(mspd(&hat, &bar, &m, &k).unwrap(), mspd(&hat, &bar, &r, &k).unwrap());
        prop_assert!((add_error(&hat, &bar, &m, true) - add_error(&hat, &bar, &r, true)).abs() < 1e-15);
        prop_assert!((add_error(&hat, &bar, &m, false) - add_error(&hat, &bar, &r, false)).abs() < 1e-15);
        prop_assert_eq!(mssd(&bar, &bar, &m), 0.0);
        prop_assert_eq!(add_error(&bar, &bar, &m, true), 0.0);
    }
}
