use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use refpose_core::geometry::{DepthMap, Grid, ScalarImage};
use refpose_core::matching::{
    builtin_features, coarse_match, dual_softmax, fine_refine, fuse_features, match_pyramids, mutual_nn_filter,
    BuiltinProvider, FeatureMap, FeatureProvider, IdentityDecoder, MatchConfig, Resolution,
};

/// Noise blurred with a 3x3 box, so neighbouring pixels correlate.
fn textured(w: usize, h: usize, seed: u64) -> ScalarImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..w * h).map(|_| rng.random_range(0.0..1.0)).collect();
    Grid::from_fn(w, h, |u, v| {
        let mut s = 0.0;
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let x = (u as i64 + dx).clamp(0, w as i64 - 1) as usize;
                let y = (v as i64 + dy).clamp(0, h as i64 - 1) as usize;
                s += raw[y * w + x];
            }
        }
        s / 9.0
    })
}

#[test]
fn self_matching_is_diagonal() {
    let img = textured(128, 128, 1);
    let f = builtin_features(&img, None).unwrap();
    let (m, _) = coarse_match(&f.rgb.coarse, &f.rgb.coarse, &MatchConfig::default()).unwrap();
    let diagonal = m.matches.iter().filter(|x| x.query == x.reference).count();
    let cells = f.rgb.coarse.len();
    assert!(diagonal as f64 >= 0.95 * cells as f64, "{diagonal}/{cells}");
}

#[test]
fn sixteen_pixel_shift_is_two_coarse_cells() {
    let base = textured(144, 128, 2);
    let query = Grid::from_fn(128, 128, |u, v| *base.get(u + 16, v));
    let reference = Grid::from_fn(128, 128, |u, v| *base.get(u, v));
    let fq = builtin_features(&query, None).unwrap();
    let fr = builtin_features(&reference, None).unwrap();
    let (m, _) = coarse_match(&fq.rgb.coarse, &fr.rgb.coarse, &MatchConfig::default()).unwrap();
    let grid = fq.rgb.coarse.width();
    let mut interior = 0;
    for x in &m.matches {
        let (qx, qy) = (x.query % grid, x.query / grid);
        if (1..grid - 3).contains(&qx) && (1..grid - 1).contains(&qy) {
            assert_eq!(x.reference, x.query + 2, "cell ({qx},{qy})");
            interior += 1;
        }
    }
    assert!(interior as f64 >= 0.95 * ((grid - 4) * (grid - 2)) as f64);
}

#[test]
fn fine_self_refinement_stays_put() {
    let img = textured(128, 128, 3);
    let f = builtin_features(&img, None).unwrap();
    let cfg = MatchConfig::default();
    let (coarse, _) = coarse_match(&f.rgb.coarse, &f.rgb.coarse, &cfg).unwrap();
    let (fine, report) = fine_refine(&coarse, &f.rgb.fine, &f.rgb.fine, &cfg).unwrap();
    assert_eq!(fine.len() + report.dropped_out_of_bounds, coarse.len());
    for m in fine.matches.iter().filter(|m| m.query == m.reference) {
        let d = ((m.query_xy[0] - m.reference_xy[0]).powi(2) + (m.query_xy[1] - m.reference_xy[1]).powi(2)).sqrt();
        assert!(d < 0.5, "{m:?}");
    }
}

#[test]
fn constant_image_yields_no_matches() {
    let img = Grid::new(64, 64, 0.5);
    let f = builtin_features(&img, None).unwrap();
    let (m, _) = coarse_match(&f.rgb.coarse, &f.rgb.coarse, &MatchConfig::default()).unwrap();
    assert!(m.is_empty());
}

#[test]
fn zero_depth_features_leave_matching_bit_identical() {
    let q = textured(64, 64, 4);
    let r = textured(64, 64, 5);
    let cfg = MatchConfig::default();
    let fq = builtin_features(&q, None).unwrap().rgb;
    let fr = builtin_features(&r, None).unwrap().rgb;
    let plain = match_pyramids(&fq, &fr, &cfg, &IdentityDecoder).unwrap();
    let zero = |f: &FeatureMap| FeatureMap::zeros(f.width(), f.height(), f.channels(), f.resolution());
    let fused = |p: &refpose_core::matching::FeaturePyramid| {
        refpose_core::matching::FeaturePyramid::new(
            fuse_features(&p.coarse, &zero(&p.coarse)).unwrap(),
            fuse_features(&p.fine, &zero(&p.fine)).unwrap(),
        )
        .unwrap()
    };
    let with_depth = match_pyramids(&fused(&fq), &fused(&fr), &cfg, &IdentityDecoder).unwrap();
    assert_eq!(plain, with_depth);
}

#[test]
fn fused_depth_spread_never_exceeds_rgb_spread() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20 {
        let n = 6 * 5 * 3;
        let scale = rng.random_range(0.1..3.0);
        let rgb: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
        let depth: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let rgb = FeatureMap::new(6, 5, 3, Resolution::Coarse, rgb).unwrap();
        let depth = FeatureMap::new(6, 5, 3, Resolution::Coarse, depth).unwrap();
        let fused = fuse_features(&rgb, &depth).unwrap();
        for ch in 0..3 {
            let col = |f: &FeatureMap| (0..f.len()).map(|i| f.descriptor(i)[ch]).collect::<Vec<_>>();
            let std = |x: &[f64]| {
                let m = x.iter().sum::<f64>() / x.len() as f64;
                (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
            };
            let contribution: Vec<f64> = col(&fused).iter().zip(col(&rgb)).map(|(a, b)| a - b).collect();
            assert!(std(&contribution) <= std(&col(&rgb)) + 1e-12);
        }
    }
}

#[test]
fn mnn_matches_exhaustive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let s = nalgebra::DMatrix::from_fn(20, 20, |_, _| rng.random_range(-3.0..3.0));
        let p = dual_softmax(&s).unwrap().p;
        let (got, _) = mutual_nn_filter(&p, 0.2);
        let mut want = Vec::new();
        for i in 0..20 {
            for j in 0..20 {
                let row_best = (0..20).all(|k| p[(i, k)] < p[(i, j)] || (p[(i, k)] == p[(i, j)] && k >= j));
                let col_best = (0..20).all(|k| p[(k, j)] < p[(i, j)] || (p[(k, j)] == p[(i, j)] && k >= i));
                if row_best && col_best && p[(i, j)] >= 0.2 {
                    want.push((i, j, p[(i, j)]));
                }
            }
        }
        assert_eq!(got, want);
    }
}

#[test]
fn depth_aware_provider_runs_end_to_end() {
    let img = textured(64, 64, 9);
    let depth = DepthMap::from_fn(64, 64, |u, v| 1.0 + 0.01 * u as f64 + 0.005 * v as f64);
    let p = BuiltinProvider::default().extract("q", &img, Some(&depth)).unwrap();
    let (m, _) = coarse_match(&p.coarse, &p.coarse, &MatchConfig::default()).unwrap();
    assert!(!m.is_empty());
}
