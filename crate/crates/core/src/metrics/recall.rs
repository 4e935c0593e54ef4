use serde::{Deserialize, Serialize};

use super::{MeshModel, MetricError, PoseErrorReport, VsdVariant};

/// Threshold grids for the recall table. Defaults follow common benchmark
/// practice; they are configuration, not constants of the metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecallConfig {
    /// MSSD thresholds as fractions of the diameter.
    pub mssd_fractions: Vec<f64>,
    /// MSPD thresholds in pixels at a 640 px wide image.
    pub mspd_pixels: Vec<f64>,
    /// Width of the evaluated images; MSPD thresholds scale by `width / 640`.
    pub image_width: usize,
    /// Visibility tolerance, meters.
    pub vsd_delta: f64,
    /// Literal VSD thresholds are these fractions of `vsd_normalizer`.
    pub vsd_fractions: Vec<f64>,
    /// Meters.
    pub vsd_normalizer: f64,
    /// Step-cost tolerances `τ` as fractions of the diameter.
    pub vsd_tau_fractions: Vec<f64>,
    /// Step-cost acceptance bound (strict `<`).
    pub vsd_theta: f64,
    pub vsd_variant: VsdVariant,
    /// ADD(S) acceptance bound as a fraction of the diameter (strict `<`).
    pub add_fraction: f64,
}

/// `k / 20` for `k = 1..=10`, built from integers so `0.2` is the same float
/// a caller gets from writing `0.2`.
fn twentieths() -> Vec<f64> {
    (1..=10).map(|k| k as f64 / 20.0).collect()
}

impl Default for RecallConfig {
    fn default() -> Self {
        Self {
            mssd_fractions: twentieths(),
            mspd_pixels: (1..=10).map(|k| 5.0 * k as f64).collect(),
            image_width: 640,
            vsd_delta: 0.015,
            vsd_fractions: twentieths(),
            vsd_normalizer: 0.3,
            vsd_tau_fractions: twentieths(),
            vsd_theta: 0.3,
            vsd_variant: VsdVariant::Literal,
            add_fraction: 0.1,
        }
    }
}

fn check_grid(name: &str, g: &[f64]) -> Result<(), MetricError> {
    if g.is_empty() {
        return Err(MetricError::InvalidInput(format!("{name} is empty")));
    }
    if g.iter().any(|x| !(x.is_finite() && *x > 0.0)) || g.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(MetricError::InvalidInput(format!(
            "{name} must be positive and strictly increasing, got {g:?}"
        )));
    }
    Ok(())
}

impl RecallConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        check_grid("mssd_fractions", &self.mssd_fractions)?;
        check_grid("mspd_pixels", &self.mspd_pixels)?;
        check_grid("vsd_fractions", &self.vsd_fractions)?;
        check_grid("vsd_tau_fractions", &self.vsd_tau_fractions)?;
        let positive = [self.vsd_delta, self.vsd_normalizer, self.vsd_theta, self.add_fraction];
        if self.image_width == 0 || positive.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(MetricError::InvalidInput(format!("invalid recall settings {self:?}")));
        }
        Ok(())
    }

    pub fn mspd_thresholds(&self) -> Vec<f64> {
        let r = self.image_width as f64 / 640.0;
        self.mspd_pixels.iter().map(|p| p * r).collect()
    }

    pub fn vsd_thresholds(&self) -> Vec<f64> {
        self.vsd_fractions.iter().map(|f| f * self.vsd_normalizer).collect()
    }
}

/// Recalls in percent. `ar` is the mean of the VSD, MSSD and MSPD recalls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallTable {
    pub count: usize,
    pub failed: usize,
    pub vsd: f64,
    pub mssd: f64,
    pub mspd: f64,
    pub ar: f64,
    pub add_01d: f64,
    pub vsd_variant: VsdVariant,
}

/// Fraction of `(report, threshold)` pairs with an error at or below the
/// threshold, in percent. Missing errors never count.
fn grid_recall(values: &[Option<f64>], thresholds: &[f64]) -> f64 {
    let hits: usize = thresholds
        .iter()
        .map(|t| values.iter().filter(|v| v.is_some_and(|e| e <= *t)).count())
        .sum();
    hits as f64 * 100.0 / (values.len() * thresholds.len()) as f64
}

pub fn pose_recalls(
    reports: &[PoseErrorReport],
    mesh: &MeshModel,
    cfg: &RecallConfig,
) -> Result<RecallTable, MetricError> {
    cfg.validate()?;
    if reports.is_empty() {
        return Err(MetricError::InvalidInput("no pose reports".into()));
    }
    let n = reports.len();
    let d = mesh.diameter();
    let usable = |v: Option<f64>, r: &PoseErrorReport| v.filter(|_| !r.failed);
    let mssd: Vec<_> = reports.iter().map(|r| usable(r.mssd, r)).collect();
    let mspd: Vec<_> = reports.iter().map(|r| usable(r.mspd, r)).collect();
    let mssd_t: Vec<f64> = cfg.mssd_fractions.iter().map(|f| f * d).collect();
    let vsd = match cfg.vsd_variant {
        VsdVariant::Literal => {
            let v: Vec<_> = reports.iter().map(|r| usable(r.vsd, r)).collect();
            grid_recall(&v, &cfg.vsd_thresholds())
        }
        VsdVariant::BopStep => {
            let taus = cfg.vsd_tau_fractions.len();
            let mut hits = 0usize;
            for r in reports.iter().filter(|r| !r.failed) {
                let Some(costs) = &r.vsd_step_costs else { continue };
                if costs.len() != taus {
                    return Err(MetricError::InvalidInput(format!(
                        "report has {} step costs, config has {taus} tolerances",
                        costs.len()
                    )));
                }
                hits += costs.iter().filter(|&&c| c < cfg.vsd_theta).count();
            }
            hits as f64 * 100.0 / (n * taus) as f64
        }
    };
    let mssd_r = grid_recall(&mssd, &mssd_t);
    let mspd_r = grid_recall(&mspd, &cfg.mspd_thresholds());
    let add_bound = cfg.add_fraction * d;
    let add_hits = reports
        .iter()
        .filter(|r| !r.failed && r.add.is_some_and(|e| e < add_bound))
        .count();
    Ok(RecallTable {
        count: n,
        failed: reports.iter().filter(|r| r.failed).count(),
        vsd,
        mssd: mssd_r,
        mspd: mspd_r,
        ar: (vsd + mssd_r + mspd_r) / 3.0,
        add_01d: add_hits as f64 * 100.0 / n as f64,
        vsd_variant: cfg.vsd_variant,
    })
}
