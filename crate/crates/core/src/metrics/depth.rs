use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::geometry::{check_shape, DepthMap, Mask};
use crate::numeric::CompensatedSum;

/// Guard added to the ground truth in the relative-error denominators.
pub const DEPTH_EPSILON: f64 = 1e-8;

pub const DEFAULT_DELTAS: [f64; 3] = [1.05, 1.10, 1.25];

/// Per-pixel depth errors averaged over the evaluated pixels. `deltas` holds
/// `(x, percent of pixels with max(D/D̂, D̂/D) < x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthMetrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub mae: f64,
    /// `None` when no pixel has a positive prediction.
    pub log10: Option<f64>,
    pub deltas: Vec<(f64, Option<f64>)>,
    /// Pixels inside the mask with valid ground truth.
    pub pixels: usize,
    /// Of those, pixels with a non-positive prediction; they are left out of
    /// `log10` and the ratio accuracies.
    pub nonpositive_pred: usize,
}

/// Evaluates `pred` against `gt` on pixels where the mask is set (all pixels
/// without one) and the ground truth is positive.
pub fn depth_metrics(
    pred: &DepthMap,
    gt: &DepthMap,
    mask: Option<&Mask>,
    deltas: &[f64],
) -> Result<DepthMetrics, MetricError> {
    check_shape("prediction", gt.as_grid(), pred.as_grid())?;
    if let Some(m) = mask {
        check_shape("mask", gt.as_grid(), m)?;
    }
    if let Some(x) = deltas.iter().find(|x| !(x.is_finite() && **x > 1.0)) {
        return Err(MetricError::InvalidInput(format!("ratio threshold {x} must exceed 1")));
    }
    let (mut abs_rel, mut sq_rel, mut sq, mut abs, mut log) = Default::default();
    let [abs_rel, sq_rel, sq, abs, log]: [&mut CompensatedSum; 5] = [&mut abs_rel, &mut sq_rel, &mut sq, &mut abs, &mut log];
    let mut within = vec![0usize; deltas.len()];
    let (mut n, mut positive) = (0usize, 0usize);
    for (i, (&d, &p)) in gt.values().iter().zip(pred.values()).enumerate() {
        if !(d > 0.0) || mask.is_some_and(|m| !m.data()[i]) {
            continue;
        }
        n += 1;
        let e = (d - p).abs();
        abs_rel.add(e / (d + DEPTH_EPSILON));
        sq_rel.add(e * e / (d + DEPTH_EPSILON));
        sq.add(e * e);
        abs.add(e);
        if p > 0.0 {
            positive += 1;
            log.add((p.log10() - d.log10()).abs());
            let ratio = (d / p).max(p / d);
            for (c, &x) in within.iter_mut().zip(deltas) {
                if ratio < x {
                    *c += 1;
                }
            }
        }
    }
    if n == 0 {
        return Err(MetricError::InvalidInput("no pixel with valid ground truth".into()));
    }
    let nf = n as f64;
    let pf = positive as f64;
    Ok(DepthMetrics {
        abs_rel: abs_rel.value() / nf,
        sq_rel: sq_rel.value() / nf,
        rmse: (sq.value() / nf).sqrt(),
        mae: abs.value() / nf,
        log10: (positive > 0).then(|| log.value() / pf),
        deltas: deltas
            .iter()
            .zip(&within)
            .map(|(&x, &c)| (x, (positive > 0).then(|| c as f64 * 100.0 / pf)))
            .collect(),
        pixels: n,
        nonpositive_pred: n - positive,
    })
}
