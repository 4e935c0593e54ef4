use super::LossError;
use crate::geometry::{check_shape, DepthMap, DepthRange};

/// Re-targets a relative prediction onto the metric range of a raw sensor
/// depth: `D_s = [n/min - n/max + 1/max]⁻¹` with `n` the min-max normalized
/// prediction, so `n = 0` maps to `max(raw)` and `n = 1` to `min(raw)`.
/// Raw statistics use valid (`> 0`) pixels only; invalid predicted pixels
/// stay invalid. The result is clamped to `range`.
pub fn rescale_with_prior(pred: &DepthMap, raw: &DepthMap, range: DepthRange) -> Result<DepthMap, LossError> {
    check_shape("raw vs prediction", pred.as_grid(), raw.as_grid())?;
    if raw.valid_count() < 2 {
        return Err(LossError::DegeneratePrior("raw depth needs at least 2 valid pixels".into()));
    }
    let (lo, hi) = raw.valid_min_max().expect("non-empty");
    if !(lo < hi) {
        return Err(LossError::DegeneratePrior(format!("raw depth is constant ({lo})")));
    }
    let (p_lo, p_hi) = pred
        .valid_min_max()
        .ok_or_else(|| LossError::DegeneratePrior("prediction has no valid pixels".into()))?;
    if !(p_lo < p_hi) {
        return Err(LossError::DegeneratePrior(format!("prediction is constant ({p_lo})")));
    }
    let span = p_hi - p_lo;
    // Two algebraically identical forms; each is exact at its own endpoint.
    let ratio_hi = hi / lo;
    let ratio_lo = lo / hi;
    let mut out = DepthMap::from_fn(pred.width(), pred.height(), |u, v| {
        if !pred.is_valid(u, v) {
            return 0.0;
        }
        let n = (pred.get(u, v) - p_lo) / span;
        if n <= 0.5 {
            hi / (n * ratio_hi + (1.0 - n))
        } else {
            lo / (n + (1.0 - n) * ratio_lo)
        }
    });
    out.clamp(range);
    Ok(out)
}
