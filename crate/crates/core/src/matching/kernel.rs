use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{FeatureMap, FeaturePyramid, MatchError, Resolution};

/// Coarse-to-fine matching hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    /// Temperature of the coarse similarity.
    pub tau: f64,
    /// Temperature of the fine correlation heatmap.
    pub fine_tau: f64,
    /// Minimum dual-softmax probability of a coarse match.
    pub theta_c: f64,
    /// Odd side length of the fine search window, in fine cells.
    pub window: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            tau: 0.1,
            fine_tau: 0.02,
            theta_c: 0.2,
            window: 5,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<(), MatchError> {
        for (name, t) in [("tau", self.tau), ("fine_tau", self.fine_tau)] {
            if !(t > 0.0 && t.is_finite()) {
                return Err(MatchError::InvalidInput(format!("{name} must be > 0, got {t}")));
            }
        }
        if !(self.theta_c > 0.0 && self.theta_c < 1.0) {
            return Err(MatchError::InvalidInput(format!(
                "theta_c must lie in (0, 1), got {}",
                self.theta_c
            )));
        }
        if self.window < 3 || self.window % 2 == 0 {
            return Err(MatchError::InvalidInput(format!(
                "window must be odd and >= 3, got {}",
                self.window
            )));
        }
        Ok(())
    }
}

/// One correspondence. `query` / `reference` are coarse cell indices;
/// coordinates are in source-image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub query: usize,
    pub reference: usize,
    pub confidence: f64,
    pub query_xy: [f64; 2],
    pub reference_xy: [f64; 2],
}

/// Matches sorted by query cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    pub level: Resolution,
    /// Coarse grid size (width, height) of the query image.
    pub query_grid: (usize, usize),
    /// Coarse grid size (width, height) of the reference image.
    pub reference_grid: (usize, usize),
    pub matches: Vec<Match>,
}

impl MatchSet {
    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }
}

/// Source-pixel location of a coarse cell.
#[inline]
pub fn coarse_cell_center(cx: usize, cy: usize) -> [f64; 2] {
    let s = Resolution::Coarse.stride() as f64;
    [s * cx as f64 + s / 2.0, s * cy as f64 + s / 2.0]
}

/// `rgb + g · standardize(depth)` per channel. The gain is
/// `g = min(1, std(rgb))`, or 1 where the rgb channel is constant, so the
/// depth term never carries more spread than the appearance term it
/// augments. Constant depth channels contribute nothing; an all-zero depth
/// map returns `rgb` unchanged.
pub fn fuse_features(rgb: &FeatureMap, depth: &FeatureMap) -> Result<FeatureMap, MatchError> {
    if !rgb.same_layout(depth) {
        return Err(MatchError::InvalidInput(format!(
            "cannot fuse {}x{}x{} with {}x{}x{}",
            rgb.width(),
            rgb.height(),
            rgb.channels(),
            depth.width(),
            depth.height(),
            depth.channels()
        )));
    }
    if depth.data().iter().all(|&x| x == 0.0) {
        return Ok(rgb.clone());
    }
    let (c, n) = (rgb.channels(), rgb.len());
    let stats = |f: &FeatureMap, ch: usize| {
        let mean = (0..n).map(|i| f.descriptor(i)[ch]).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (f.descriptor(i)[ch] - mean).powi(2)).sum::<f64>() / n as f64;
        (mean, var.sqrt())
    };
    let mut out = rgb.clone();
    for ch in 0..c {
        let (d_mean, d_std) = stats(depth, ch);
        if d_std == 0.0 {
            continue;
        }
        let (_, r_std) = stats(rgb, ch);
        let gain = if r_std > 0.0 { r_std.min(1.0) } else { 1.0 };
        for i in 0..n {
            out.descriptor_mut(i)[ch] += gain * (depth.descriptor(i)[ch] - d_mean) / d_std;
        }
    }
    Ok(out)
}

/// Hook for a learned decoder between the encoders and the similarity.
pub trait Decoder: Sync {
    fn decode(&self, query: &FeatureMap, reference: &FeatureMap) -> Result<(FeatureMap, FeatureMap), MatchError>;
}

/// Passes features through unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityDecoder;

impl Decoder for IdentityDecoder {
    fn decode(&self, query: &FeatureMap, reference: &FeatureMap) -> Result<(FeatureMap, FeatureMap), MatchError> {
        Ok((query.clone(), reference.clone()))
    }
}

/// `S(i, j) = ⟨q_i, r_j⟩ / τ` with query cells as rows.
pub fn similarity_matrix(fq: &FeatureMap, fr: &FeatureMap, tau: f64) -> Result<DMatrix<f64>, MatchError> {
    if fq.channels() != fr.channels() {
        return Err(MatchError::InvalidInput(format!(
            "channel mismatch: {} vs {}",
            fq.channels(),
            fr.channels()
        )));
    }
    if !(tau > 0.0) {
        return Err(MatchError::InvalidInput(format!("tau must be > 0, got {tau}")));
    }
    let inv = 1.0 / tau;
    Ok(DMatrix::from_fn(fq.len(), fr.len(), |i, j| {
        let (a, b) = (fq.descriptor(i), fr.descriptor(j));
        a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * inv
    }))
}

/// Row-wise and column-wise softmax of a similarity matrix and their product.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSoftmax {
    pub row: DMatrix<f64>,
    pub col: DMatrix<f64>,
    pub p: DMatrix<f64>,
}

fn softmax_in_place(values: &mut [f64]) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in values.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in values.iter_mut() {
        *x /= sum;
    }
}

/// `P(i, j) = softmax(S(i, ·))_j · softmax(S(·, j))_i`.
pub fn dual_softmax(s: &DMatrix<f64>) -> Result<DualSoftmax, MatchError> {
    if s.is_empty() {
        return Err(MatchError::InvalidInput("empty similarity matrix".into()));
    }
    if s.iter().any(|x| !x.is_finite()) {
        return Err(MatchError::InvalidInput("similarity matrix has non-finite entries".into()));
    }
    // column-major storage: columns are contiguous
    let mut col = s.clone();
    for mut c in col.column_iter_mut() {
        softmax_in_place(c.as_mut_slice());
    }
    let mut row_t = s.transpose();
    for mut r in row_t.column_iter_mut() {
        softmax_in_place(r.as_mut_slice());
    }
    let row = row_t.transpose();
    let p = row.component_mul(&col);
    Ok(DualSoftmax { row, col, p })
}

/// Bookkeeping for [`mutual_nn_filter`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MnnReport {
    /// Rows whose maximum was attained more than once.
    pub row_ties: usize,
    /// Columns whose maximum was attained more than once.
    pub col_ties: usize,
    /// Mutual pairs rejected by the confidence threshold.
    pub below_threshold: usize,
}

/// First index of the maximum and whether it was tied.
fn argmax(values: impl Iterator<Item = f64>) -> (usize, bool) {
    let mut best = (0, f64::NEG_INFINITY, false);
    for (i, x) in values.enumerate() {
        if x > best.1 {
            best = (i, x, false);
        } else if x == best.1 {
            best.2 = true;
        }
    }
    (best.0, best.2)
}

/// Mutual nearest neighbours of `p` with `P(i, j) >= theta_c`. Returns
/// `(query, reference, confidence)` sorted by query index.
pub fn mutual_nn_filter(p: &DMatrix<f64>, theta_c: f64) -> (Vec<(usize, usize, f64)>, MnnReport) {
    let mut report = MnnReport::default();
    let col_best: Vec<(usize, bool)> = p.column_iter().map(|c| argmax(c.iter().copied())).collect();
    report.col_ties = col_best.iter().filter(|c| c.1).count();
    let mut out = Vec::new();
    for (i, row) in p.row_iter().enumerate() {
        let (j, tied) = argmax(row.iter().copied());
        report.row_ties += tied as usize;
        if col_best[j].0 != i {
            continue;
        }
        let conf = p[(i, j)];
        if conf >= theta_c {
            out.push((i, j, conf));
        } else {
            report.below_threshold += 1;
        }
    }
    (out, report)
}

/// Coarse matching: similarity, dual softmax and the MNN filter.
pub fn coarse_match(
    fq: &FeatureMap,
    fr: &FeatureMap,
    cfg: &MatchConfig,
) -> Result<(MatchSet, MnnReport), MatchError> {
    cfg.validate()?;
    let s = similarity_matrix(fq, fr, cfg.tau)?;
    let ds = dual_softmax(&s)?;
    let (pairs, report) = mutual_nn_filter(&ds.p, cfg.theta_c);
    let matches = pairs
        .into_iter()
        .map(|(i, j, confidence)| {
            let (qx, qy) = fq.cell_coords(i);
            let (rx, ry) = fr.cell_coords(j);
            Match {
                query: i,
                reference: j,
                confidence,
                query_xy: coarse_cell_center(qx, qy),
                reference_xy: coarse_cell_center(rx, ry),
            }
        })
        .collect();
    Ok((
        MatchSet {
            level: Resolution::Coarse,
            query_grid: (fq.width(), fq.height()),
            reference_grid: (fr.width(), fr.height()),
            matches,
        },
        report,
    ))
}

/// Bookkeeping for [`fine_refine`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FineReport {
    /// Coarse matches whose window left the fine grid.
    pub dropped_out_of_bounds: usize,
}

/// Expected position of the softmax heatmap of `⟨center, window⟩ / τ`,
/// as an offset from the window center in fine cells.
pub fn heatmap_expectation(center: &[f64], window: &[&[f64]], side: usize, tau: f64) -> [f64; 2] {
    debug_assert_eq!(window.len(), side * side);
    let mut logits: Vec<f64> = window
        .iter()
        .map(|d| d.iter().zip(center).map(|(a, b)| a * b).sum::<f64>() / tau)
        .collect();
    softmax_in_place(&mut logits);
    let mut cols = vec![0.0; side];
    let mut rows = vec![0.0; side];
    for (k, w) in logits.iter().enumerate() {
        cols[k % side] += w;
        rows[k / side] += w;
    }
    // mirrored offsets are paired so a symmetric heatmap yields exactly 0
    let r = side / 2;
    let moment = |m: &[f64]| (1..=r).map(|d| d as f64 * (m[r + d] - m[r - d])).sum::<f64>();
    [moment(&cols), moment(&rows)]
}

/// Refines coarse matches to sub-pixel reference positions. The query
/// position is the fine cell at the center of the coarse cell; the reference
/// position is the heatmap expectation over a `window`² neighbourhood of the
/// matched reference cell.
pub fn fine_refine(
    coarse: &MatchSet,
    fine_q: &FeatureMap,
    fine_r: &FeatureMap,
    cfg: &MatchConfig,
) -> Result<(MatchSet, FineReport), MatchError> {
    cfg.validate()?;
    if fine_q.channels() != fine_r.channels() {
        return Err(MatchError::InvalidInput("fine channel mismatch".into()));
    }
    let ratio = Resolution::Coarse.stride() / Resolution::Fine.stride();
    let fs = Resolution::Fine.stride() as f64;
    let r = cfg.window / 2;
    let mut report = FineReport::default();
    let mut matches = Vec::with_capacity(coarse.len());
    for m in &coarse.matches {
        let (qx, qy) = (m.query % coarse.query_grid.0, m.query / coarse.query_grid.0);
        let (rx, ry) = (m.reference % coarse.reference_grid.0, m.reference / coarse.reference_grid.0);
        let (fqx, fqy) = (ratio * qx + ratio / 2, ratio * qy + ratio / 2);
        let (frx, fry) = (ratio * rx + ratio / 2, ratio * ry + ratio / 2);
        if fqx >= fine_q.width()
            || fqy >= fine_q.height()
            || frx < r
            || fry < r
            || frx + r >= fine_r.width()
            || fry + r >= fine_r.height()
        {
            report.dropped_out_of_bounds += 1;
            continue;
        }
        let window: Vec<&[f64]> = (fry - r..=fry + r)
            .flat_map(|y| (frx - r..=frx + r).map(move |x| (x, y)))
            .map(|(x, y)| fine_r.descriptor_at(x, y))
            .collect();
        let e = heatmap_expectation(fine_q.descriptor_at(fqx, fqy), &window, cfg.window, cfg.fine_tau);
        matches.push(Match {
            query: m.query,
            reference: m.reference,
            confidence: m.confidence,
            query_xy: [fqx as f64 * fs, fqy as f64 * fs],
            reference_xy: [(frx as f64 + e[0]) * fs, (fry as f64 + e[1]) * fs],
        });
    }
    Ok((
        MatchSet {
            level: Resolution::Fine,
            query_grid: coarse.query_grid,
            reference_grid: coarse.reference_grid,
            matches,
        },
        report,
    ))
}

/// Result of the full coarse-to-fine kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutput {
    pub coarse: MatchSet,
    pub fine: MatchSet,
    pub mnn: MnnReport,
    pub refine: FineReport,
}

/// Decoder, coarse matching and fine refinement on two feature pyramids.
pub fn match_pyramids(
    query: &FeaturePyramid,
    reference: &FeaturePyramid,
    cfg: &MatchConfig,
    decoder: &dyn Decoder,
) -> Result<MatchOutput, MatchError> {
    let (cq, cr) = decoder.decode(&query.coarse, &reference.coarse)?;
    let (fq, fr) = decoder.decode(&query.fine, &reference.fine)?;
    let (coarse, mnn) = coarse_match(&cq, &cr, cfg)?;
    let (fine, refine) = fine_refine(&coarse, &fq, &fr, cfg)?;
    Ok(MatchOutput {
        coarse,
        fine,
        mnn,
        refine,
    })
}
