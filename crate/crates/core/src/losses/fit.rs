use serde::{Deserialize, Serialize};

use super::{nonempty_domain, LossError};
use crate::geometry::{DepthMap, Grid, Mask};
use crate::numeric::CompensatedSum;

/// Affine alignment `s * pred + t ≈ gt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleShift {
    pub s: f64,
    pub t: f64,
}

impl ScaleShift {
    #[inline]
    pub fn apply(&self, pred: f64) -> f64 {
        self.s * pred + self.t
    }
}

/// Least-squares `(s, t)` minimizing `Σ (s·pred + t - gt)²` over the loss domain.
///
/// This is the solution of the 2x2 normal equations, evaluated in centered
/// form (`s = cov / var`, `t = mean_gt - s·mean_pred`), which is the same
/// solution with less cancellation.
pub fn fit_scale_shift(pred: &DepthMap, gt: &DepthMap, mask: Option<&Mask>) -> Result<ScaleShift, LossError> {
    let (domain, m) = nonempty_domain(pred, gt, mask)?;
    let pairs = paired_values(pred, gt, &domain);
    fit_pairs(&pairs, m)
}

fn fit_pairs(pairs: &[(f64, f64)], m: usize) -> Result<ScaleShift, LossError> {
    if m < 2 {
        return Err(LossError::DegenerateFit(format!("need at least 2 pixels, got {m}")));
    }
    let n = m as f64;
    let mean_p = pairs.iter().map(|p| p.0).collect::<CompensatedSum>().value() / n;
    let mean_g = pairs.iter().map(|p| p.1).collect::<CompensatedSum>().value() / n;
    let mut var = CompensatedSum::new();
    let mut cov = CompensatedSum::new();
    let mut sq = CompensatedSum::new();
    for &(p, g) in pairs {
        let dp = p - mean_p;
        var.add(dp * dp);
        cov.add(dp * (g - mean_g));
        sq.add(p * p);
    }
    let (var, cov) = (var.value(), cov.value());
    // det of the normal matrix is n·var; relative to n·Σp² it is the squared
    // coefficient of variation of the prediction
    if !(var > 1e-24 * sq.value()) {
        return Err(LossError::DegenerateFit(
            "prediction is constant over the loss domain".into(),
        ));
    }
    let s = cov / var;
    Ok(ScaleShift { s, t: mean_g - s * mean_p })
}

pub(crate) fn paired_values(pred: &DepthMap, gt: &DepthMap, domain: &Mask) -> Vec<(f64, f64)> {
    pred.values()
        .iter()
        .zip(gt.values())
        .zip(domain.data())
        .filter(|(_, &d)| d)
        .map(|((&p, &g), _)| (p, g))
        .collect()
}

/// `½ · mean (s·pred + t - gt)²` with `(s, t)` from [`fit_scale_shift`].
pub fn ssi_loss(pred: &DepthMap, gt: &DepthMap, mask: Option<&Mask>) -> Result<f64, LossError> {
    let (domain, m) = nonempty_domain(pred, gt, mask)?;
    let pairs = paired_values(pred, gt, &domain);
    let st = fit_pairs(&pairs, m)?;
    let sum: CompensatedSum = pairs
        .iter()
        .map(|&(p, g)| {
            let r = st.apply(p) - g;
            r * r
        })
        .collect();
    Ok(0.5 * sum.value() / m as f64)
}

// (s, t) is stationary, so only the explicit dependence on pred survives:
// dL/dp_i = s·r_i / M.
pub(crate) fn ssi_gradient(pred: &DepthMap, gt: &DepthMap, mask: Option<&Mask>) -> Result<Grid<f64>, LossError> {
    let (domain, m) = nonempty_domain(pred, gt, mask)?;
    let st = fit_pairs(&paired_values(pred, gt, &domain), m)?;
    let inv_m = 1.0 / m as f64;
    Ok(Grid::from_fn(pred.width(), pred.height(), |u, v| {
        if *domain.get(u, v) {
            st.s * (st.apply(pred.get(u, v)) - gt.get(u, v)) * inv_m
        } else {
            0.0
        }
    }))
}
