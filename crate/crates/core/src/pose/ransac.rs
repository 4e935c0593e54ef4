use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{rigid_fit, Correspondence3D, PoseError};
use crate::geometry::RigidTransform;

/// Name recorded in every estimate so results are never mistaken for a
/// learned registration.
pub const SOLVER_NAME: &str = "sample-consensus+kabsch";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    /// Inlier residual bound in meters (strict `<`).
    pub inlier_threshold: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub min_inliers: usize,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            inlier_threshold: 0.01,
            max_iters: 2048,
            seed: 0,
            min_inliers: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimate {
    /// Maps query camera points onto reference camera points.
    pub transform: RigidTransform,
    /// One flag per input correspondence, in input order.
    pub inliers: Vec<bool>,
    /// RMS residual over inliers, meters.
    pub rms: f64,
    pub iterations: usize,
    pub solver: &'static str,
}

impl PoseEstimate {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

/// Input indices in a canonical order that depends only on the values, so
/// the estimate is invariant to how the correspondences were listed.
fn canonical_order(corr: &Correspondence3D) -> Vec<usize> {
    let key = |i: usize| {
        let (q, r) = (&corr.query[i], &corr.reference[i]);
        [q.x, q.y, q.z, r.x, r.y, r.z, corr.confidence[i]]
    };
    let mut idx: Vec<usize> = (0..corr.len()).collect();
    idx.sort_by(|&a, &b| {
        let (ka, kb) = (key(a), key(b));
        ka.iter()
            .zip(&kb)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    idx
}

fn inliers_of(t: &RigidTransform, corr: &Correspondence3D, order: &[usize], threshold: f64) -> Vec<usize> {
    order
        .iter()
        .copied()
        .filter(|&i| (t.apply_point(&corr.query[i]) - corr.reference[i]).norm() < threshold)
        .collect()
}

fn refit(corr: &Correspondence3D, set: &[usize]) -> Result<RigidTransform, PoseError> {
    let src: Vec<_> = set.iter().map(|&i| corr.query[i]).collect();
    let dst: Vec<_> = set.iter().map(|&i| corr.reference[i]).collect();
    let w: Vec<_> = set.iter().map(|&i| corr.confidence[i]).collect();
    if w.iter().sum::<f64>() > 0.0 {
        rigid_fit(&src, &dst, Some(&w))
    } else {
        rigid_fit(&src, &dst, None)
    }
}

/// Seeded sample consensus over 3-point rigid hypotheses, followed by a
/// confidence-weighted refit on the consensus set.
///
/// All hypotheses are drawn up front from one seeded stream and scored
/// independently; the winner is the largest inlier set with the lowest
/// hypothesis index, so the result does not depend on the worker count.
pub fn robust_register(corr: &Correspondence3D, cfg: &RansacConfig) -> Result<PoseEstimate, PoseError> {
    let n = corr.len();
    if n < 3 {
        return Err(PoseError::InsufficientCorrespondences { found: n });
    }
    if !(cfg.inlier_threshold > 0.0) || cfg.max_iters == 0 || cfg.min_inliers < 3 {
        return Err(PoseError::InvalidInput(format!("invalid registration settings {cfg:?}")));
    }
    let order = canonical_order(corr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let samples: Vec<[usize; 3]> = (0..cfg.max_iters)
        .map(|_| {
            let s = sample(&mut rng, n, 3);
            [order[s.index(0)], order[s.index(1)], order[s.index(2)]]
        })
        .collect();
    let best = samples
        .par_iter()
        .enumerate()
        .filter_map(|(h, s)| {
            let src = s.map(|i| corr.query[i]);
            let dst = s.map(|i| corr.reference[i]);
            let t = rigid_fit(&src, &dst, None).ok()?;
            Some((inliers_of(&t, corr, &order, cfg.inlier_threshold).len(), h))
        })
        .reduce_with(|a, b| if a.0 > b.0 || (a.0 == b.0 && a.1 < b.1) { a } else { b });
    let Some((count, h)) = best.filter(|b| b.0 >= cfg.min_inliers) else {
        return Err(PoseError::RegistrationFailed {
            best_inliers: best.map_or(0, |b| b.0),
            required: cfg.min_inliers,
        });
    };
    log::debug!("hypothesis {h} has {count}/{n} inliers");
    let s = samples[h];
    let hypothesis = rigid_fit(&s.map(|i| corr.query[i]), &s.map(|i| corr.reference[i]), None)?;
    let mut set = inliers_of(&hypothesis, corr, &order, cfg.inlier_threshold);
    let mut transform = hypothesis;
    for _ in 0..10 {
        let Ok(t) = refit(corr, &set) else { break };
        let next = inliers_of(&t, corr, &order, cfg.inlier_threshold);
        if next.len() < cfg.min_inliers {
            break;
        }
        transform = t;
        if next == set {
            break;
        }
        set = next;
    }
    let set = inliers_of(&transform, corr, &order, cfg.inlier_threshold);
    let mut inliers = vec![false; n];
    for &i in &set {
        inliers[i] = true;
    }
    let rms = if set.is_empty() {
        0.0
    } else {
        (set.iter()
            .map(|&i| (transform.apply_point(&corr.query[i]) - corr.reference[i]).norm_squared())
            .sum::<f64>()
            / set.len() as f64)
            .sqrt()
    };
    Ok(PoseEstimate {
        transform,
        inliers,
        rms,
        iterations: cfg.max_iters,
        solver: SOLVER_NAME,
    })
}
