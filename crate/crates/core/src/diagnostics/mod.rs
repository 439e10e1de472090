//! Posterior-quality metrics and representation probes.

mod c2st;
mod probes;

pub use c2st::{c2st, c2st_marginal, c2st_per_coordinate, c2st_rank, rank_transform, rank_transform_per_set, C2stConfig};
pub use probes::{
    cross_theta_probe, empirical_quantile, pinball, quantile_probe, r_squared, ridge_probe, CrossThetaResult, QuantileProbeConfig,
    QuantileProbeResult, RidgeFit, PROBE_QUANTILES, RIDGE_LAMBDAS,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{mean_std, Matrix};

/// Joint, marginal and rank-space C2ST for one pair of sample sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub task: String,
    pub seed: u64,
    pub n_samples: usize,
    pub joint: f64,
    pub marginal: f64,
    pub rank: f64,
    /// Always `joint - marginal`.
    pub gap: f64,
}

impl DiagnosticReport {
    pub fn new(task: impl Into<String>, seed: u64, n_samples: usize, joint: f64, marginal: f64, rank: f64) -> Self {
        Self { task: task.into(), seed, n_samples, joint, marginal, rank, gap: joint - marginal }
    }

    pub fn evaluate(task: &str, approx: &Matrix, reference: &Matrix, cfg: &C2stConfig) -> Result<Self> {
        let joint = c2st(approx, reference, cfg)?;
        let marginal = c2st_marginal(approx, reference, cfg)?;
        let rank = c2st_rank(approx, reference, cfg)?;
        Ok(Self::new(task, cfg.seed, approx.rows().min(reference.rows()), joint, marginal, rank))
    }

    /// Metric name and value pairs in reporting order.
    pub fn metrics(&self) -> Vec<(&'static str, f64)> {
        vec![("c2st_joint", self.joint), ("c2st_marginal", self.marginal), ("c2st_rank", self.rank), ("c2st_gap", self.gap)]
    }
}

/// Probe outputs for one summary source; absent parts were not computed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProbeReport {
    pub r2_matrix: Option<Matrix>,
    pub matched: Vec<f64>,
    pub off_mean: Vec<f64>,
    pub pinball_ratio: Option<f64>,
    pub quantile_corr: Option<f64>,
    pub flagged: Vec<usize>,
}

impl ProbeReport {
    pub fn with_cross_theta(mut self, r: CrossThetaResult) -> Self {
        self.matched = r.matched;
        self.off_mean = r.off_mean;
        self.r2_matrix = Some(r.r2);
        self
    }

    pub fn with_quantiles(mut self, q: &QuantileProbeResult) -> Self {
        self.pinball_ratio = Some(q.pinball_ratio);
        self.quantile_corr = Some(q.quantile_corr);
        self.flagged = q.flagged.clone();
        self
    }

    pub fn metrics(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for (d, (m, o)) in self.matched.iter().zip(&self.off_mean).enumerate() {
            out.push((format!("cross_theta_matched_{d}"), *m));
            out.push((format!("cross_theta_off_{d}"), *o));
        }
        if let Some(p) = self.pinball_ratio {
            out.push(("pinball_ratio".into(), p));
        }
        if let Some(c) = self.quantile_corr {
            out.push(("quantile_corr".into(), c));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentDiagnostics {
    /// `|mean difference| / reference std` per coordinate.
    pub mean_error: Vec<f64>,
    /// `log(approx std / reference std)` per coordinate.
    pub dispersion_log_ratio: Vec<f64>,
    /// Coordinates with zero reference spread; their entries are NaN.
    pub flagged: Vec<usize>,
}

pub fn moment_diagnostics(approx: &Matrix, reference: &Matrix) -> Result<MomentDiagnostics> {
    if approx.rows() == 0 || reference.rows() == 0 {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    if approx.cols() != reference.cols() {
        return Err(Error::DimensionMismatch { expected: reference.cols(), got: approx.cols() });
    }
    let mut out = MomentDiagnostics { mean_error: vec![], dispersion_log_ratio: vec![], flagged: vec![] };
    for d in 0..reference.cols() {
        let (ma, sa) = mean_std(&approx.column(d));
        let (mr, sr) = mean_std(&reference.column(d));
        if sr == 0.0 {
            out.flagged.push(d);
            out.mean_error.push(f64::NAN);
            out.dispersion_log_ratio.push(f64::NAN);
        } else {
            out.mean_error.push((ma - mr).abs() / sr);
            out.dispersion_log_ratio.push((sa / sr).ln());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_is_exact() {
        let r = DiagnosticReport::new("t", 0, 10, 0.713, 0.651, 0.5);
        assert_eq!(r.gap, 0.713 - 0.651);
    }

    #[test]
    fn moments_of_shift_and_scale() {
        let reference = Matrix::from_fn(100, 2, |i, j| (i as f64 * 0.37 + j as f64).sin());
        let (m0, s0) = mean_std(&reference.column(0));
        let shifted = Matrix::from_fn(100, 2, |i, j| reference.get(i, j) + if j == 0 { s0 } else { 0.0 });
        let md = moment_diagnostics(&shifted, &reference).unwrap();
        assert!((md.mean_error[0] - 1.0).abs() < 1e-12 && md.mean_error[1] == 0.0);
        let scaled = Matrix::from_fn(100, 2, |i, j| if j == 0 { m0 + 2.0 * (reference.get(i, j) - m0) } else { reference.get(i, j) });
        let md = moment_diagnostics(&scaled, &reference).unwrap();
        assert!((md.dispersion_log_ratio[0] - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_reference_is_flagged() {
        let reference = Matrix::from_fn(10, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let md = moment_diagnostics(&reference, &reference).unwrap();
        assert_eq!(md.flagged, vec![0]);
        assert!(md.mean_error[0].is_nan() && md.mean_error[1] == 0.0);
    }
}
