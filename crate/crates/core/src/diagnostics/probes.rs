//! Linear read-outs of summaries: quantile, ridge and cross-parameter probes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{optimize, Objective, Schedule, TrainConfig};
use crate::matrix::{gemm, pearson, Matrix};
use crate::summary::{EmbeddingSet, Standardizer};

pub const PROBE_QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];
pub const RIDGE_LAMBDAS: [f64; 7] = [1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3];

/// Standard-deviation threshold below which a summary coordinate is dropped.
const DEGENERATE_STD: f64 = 1e-12;

pub fn pinball(y: f64, qhat: f64, tau: f64) -> f64 {
    let r = y - qhat;
    (tau * r).max((tau - 1.0) * r)
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn empirical_quantile(sorted: &[f64], tau: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * tau;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileProbeConfig {
    pub taus: Vec<f64>,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for QuantileProbeConfig {
    fn default() -> Self {
        Self { taus: PROBE_QUANTILES.to_vec(), lr: 1e-2, epochs: 500, batch_size: 256, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileProbeResult {
    pub pinball_ratio: f64,
    pub quantile_corr: f64,
    /// Indexed `[obs][coord][tau]`, flattened.
    pub predicted: Vec<f64>,
    pub reference: Vec<f64>,
    /// Summary coordinates with zero training variance, excluded from the fit.
    pub flagged: Vec<usize>,
}

/// Every (coordinate, tau) pair shares one weight matrix; the summed losses
/// are separable, so this is equivalent to independent fits.
struct PinballObjective<'a> {
    s: &'a Matrix,
    theta: &'a Matrix,
    taus: &'a [f64],
}

impl PinballObjective<'_> {
    fn outputs(&self) -> usize {
        self.theta.cols() * self.taus.len()
    }
}

fn linear_predict(params: &[f64], s: &[f64], rows: usize, p: usize, k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * k);
    for _ in 0..rows {
        out.extend_from_slice(&params[p * k..]);
    }
    gemm(rows, p, k, 1.0, s, false, &params[..p * k], false, 1.0, &mut out);
    out
}

impl Objective for PinballObjective<'_> {
    fn num_train(&self) -> usize {
        self.s.rows()
    }

    fn loss_and_grad(&self, params: &[f64], rows: &[usize], grad: &mut [f64]) -> f64 {
        let (p, k, nt) = (self.s.cols(), self.outputs(), self.taus.len());
        let b = rows.len();
        let s = self.s.select_rows(rows);
        let pred = linear_predict(params, s.as_slice(), b, p, k);
        let mut g = vec![0.0; b * k];
        let mut loss = 0.0;
        let inv = 1.0 / b as f64;
        for (r, &row) in rows.iter().enumerate() {
            for d in 0..self.theta.cols() {
                let y = self.theta.get(row, d);
                for (t, &tau) in self.taus.iter().enumerate() {
                    let j = d * nt + t;
                    let q = pred[r * k + j];
                    loss += pinball(y, q, tau);
                    g[r * k + j] = if y > q { -tau * inv } else { (1.0 - tau) * inv };
                }
            }
        }
        gemm(p, b, k, 1.0, s.as_slice(), true, &g, false, 1.0, &mut grad[..p * k]);
        for row in g.chunks_exact(k) {
            grad[p * k..].iter_mut().zip(row).for_each(|(a, v)| *a += v);
        }
        loss * inv
    }

    fn validation_loss(&self, _params: &[f64]) -> Option<f64> {
        None
    }
}

fn drop_degenerate(std: &Standardizer) -> (Vec<usize>, Vec<usize>) {
    (0..std.dim()).partition(|&j| std.std[j] > DEGENERATE_STD)
}

/// Fits linear quantile read-outs from summaries to parameters and scores
/// them against reference-posterior draws at each reference observation.
/// `ref_summaries` has one row per observation, matching `ref_samples`.
pub fn quantile_probe(
    train_summaries: &Matrix,
    train_theta: &Matrix,
    ref_summaries: &Matrix,
    ref_samples: &[Matrix],
    cfg: &QuantileProbeConfig,
) -> Result<QuantileProbeResult> {
    if train_summaries.rows() != train_theta.rows() {
        return Err(Error::DimensionMismatch { expected: train_theta.rows(), got: train_summaries.rows() });
    }
    if ref_summaries.rows() != ref_samples.len() || ref_samples.is_empty() {
        return Err(Error::DimensionMismatch { expected: ref_summaries.rows(), got: ref_samples.len() });
    }
    if cfg.taus.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
        return Err(Error::InvalidInput("quantile levels must lie in (0, 1)".into()));
    }
    let raw_std = Standardizer::fit(train_summaries);
    // The population-std floor hides exact zeros, so recompute them.
    let mut exact = raw_std.clone();
    for j in 0..exact.dim() {
        let col = train_summaries.column(j);
        let m = raw_std.mean[j];
        exact.std[j] = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / col.len().max(1) as f64).sqrt();
    }
    let (keep, flagged) = drop_degenerate(&exact);
    let s_std = Standardizer { mean: keep.iter().map(|&j| raw_std.mean[j]).collect(), std: keep.iter().map(|&j| raw_std.std[j]).collect() };
    let s = s_std.standardize(&train_summaries.select_cols(&keep))?;
    let t_std = Standardizer::fit(train_theta);
    let theta = t_std.standardize(train_theta)?;
    let obj = PinballObjective { s: &s, theta: &theta, taus: &cfg.taus };
    let (p, k) = (s.cols(), obj.outputs());
    let mut params = vec![0.0; p * k + k];
    let tc = TrainConfig {
        lr: cfg.lr,
        batch_size: cfg.batch_size.min(s.rows()),
        max_epochs: cfg.epochs,
        patience: usize::MAX,
        clip_norm: None,
        schedule: Schedule::Constant,
        seed: cfg.seed,
        ..TrainConfig::default()
    };
    optimize(&obj, &mut params, &tc)?;

    let rs = s_std.standardize(&ref_summaries.select_cols(&keep))?;
    let pred = linear_predict(&params, rs.as_slice(), rs.rows(), p, k);
    let nt = cfg.taus.len();
    let dim = train_theta.cols();
    let (mut predicted, mut reference) = (Vec::new(), Vec::new());
    let (mut probe_loss, mut ref_loss) = (0.0, 0.0);
    for (o, samples) in ref_samples.iter().enumerate() {
        if samples.cols() != dim || samples.rows() == 0 {
            return Err(Error::DimensionMismatch { expected: dim, got: samples.cols() });
        }
        for d in 0..dim {
            let mut col = samples.column(d);
            col.sort_by(f64::total_cmp);
            for (t, &tau) in cfg.taus.iter().enumerate() {
                let qhat = t_std.mean[d] + t_std.std[d] * pred[o * k + d * nt + t];
                let q = empirical_quantile(&col, tau);
                probe_loss += col.iter().map(|y| pinball(*y, qhat, tau)).sum::<f64>() / col.len() as f64;
                ref_loss += col.iter().map(|y| pinball(*y, q, tau)).sum::<f64>() / col.len() as f64;
                predicted.push(qhat);
                reference.push(q);
            }
        }
    }
    Ok(QuantileProbeResult { pinball_ratio: probe_loss / ref_loss, quantile_corr: pearson(&predicted, &reference), predicted, reference, flagged })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeFit {
    pub r2: f64,
    pub lambda: f64,
    /// Weights on standardized features, then the intercept.
    pub weights: Vec<f64>,
    pub feature_standardizer: Standardizer,
}

impl RidgeFit {
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        let xs = self.feature_standardizer.standardize(x)?;
        let p = xs.cols();
        Ok(xs.row_iter().map(|r| r.iter().zip(&self.weights).map(|(a, w)| a * w).sum::<f64>() + self.weights[p]).collect())
    }
}

pub fn r_squared(y: &[f64], pred: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if sst == 0.0 {
        return 0.0;
    }
    let sse: f64 = y.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum();
    1.0 - sse / sst
}

/// Closed-form ridge on standardized features; returns the fit with the best
/// validation R² over `lambdas`.
pub fn ridge_probe(x_train: &Matrix, y_train: &[f64], x_val: &Matrix, y_val: &[f64], lambdas: &[f64]) -> Result<RidgeFit> {
    if x_train.rows() != y_train.len() || x_val.rows() != y_val.len() {
        return Err(Error::DimensionMismatch { expected: x_train.rows(), got: y_train.len() });
    }
    if x_train.rows() == 0 || y_val.is_empty() || lambdas.is_empty() {
        return Err(Error::InvalidInput("ridge probe needs training rows, validation rows and a lambda".into()));
    }
    let fs = Standardizer::fit(x_train);
    let xs = fs.standardize(x_train)?;
    let (n, p) = (xs.rows(), xs.cols());
    let y_mean = y_train.iter().sum::<f64>() / n as f64;
    let x = DMatrix::from_row_slice(n, p, xs.as_slice());
    let yc = DVector::from_iterator(n, y_train.iter().map(|v| v - y_mean));
    let gram = x.transpose() * &x;
    let xty = x.transpose() * yc;
    let mut best: Option<RidgeFit> = None;
    for &lambda in lambdas {
        let mut a = gram.clone();
        for i in 0..p {
            a[(i, i)] += lambda;
        }
        let w = match a.cholesky() {
            Some(c) => c.solve(&xty),
            None => continue,
        };
        let mut weights: Vec<f64> = w.iter().copied().collect();
        weights.push(y_mean);
        let fit = RidgeFit { r2: 0.0, lambda, weights, feature_standardizer: fs.clone() };
        let r2 = r_squared(y_val, &fit.predict(x_val)?);
        if best.as_ref().is_none_or(|b| r2 > b.r2) {
            best = Some(RidgeFit { r2, ..fit });
        }
    }
    best.ok_or_else(|| Error::InvalidInput("ridge system is singular for every lambda".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossThetaResult {
    /// Chunks in rows, parameters in columns.
    pub r2: Matrix,
    pub matched: Vec<f64>,
    pub off_mean: Vec<f64>,
}

impl CrossThetaResult {
    /// Matched minus off-diagonal score for each chunk.
    pub fn delta(&self) -> Vec<f64> {
        self.matched.iter().zip(&self.off_mean).map(|(a, b)| a - b).collect()
    }
}

/// Ridge probe from each embedding chunk to each parameter coordinate.
/// `train` and `val` index rows of `embeddings` and `theta`.
pub fn cross_theta_probe(embeddings: &EmbeddingSet, theta: &Matrix, train: &[usize], val: &[usize]) -> Result<CrossThetaResult> {
    let dim = theta.cols();
    if dim < 2 {
        return Err(Error::InvalidInput("cross-parameter probes need at least two parameters".into()));
    }
    if embeddings.num_chunks() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: embeddings.num_chunks() });
    }
    if embeddings.len() != theta.rows() {
        return Err(Error::DimensionMismatch { expected: theta.rows(), got: embeddings.len() });
    }
    let mut r2 = Matrix::zeros(dim, dim);
    for (i, chunk) in embeddings.chunks.iter().enumerate() {
        let (xt, xv) = (chunk.select_rows(train), chunk.select_rows(val));
        for j in 0..dim {
            let col = theta.column(j);
            let yt: Vec<f64> = train.iter().map(|&r| col[r]).collect();
            let yv: Vec<f64> = val.iter().map(|&r| col[r]).collect();
            r2.set(i, j, ridge_probe(&xt, &yt, &xv, &yv, &RIDGE_LAMBDAS)?.r2);
        }
    }
    let matched = (0..dim).map(|i| r2.get(i, i)).collect();
    let off_mean = (0..dim).map(|i| (0..dim).filter(|&j| j != i).map(|j| r2.get(i, j)).sum::<f64>() / (dim - 1) as f64).collect();
    Ok(CrossThetaResult { r2, matched, off_mean })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinball_formula() {
        assert_eq!(pinball(1.0, 0.0, 0.5), 0.5);
        assert_eq!(pinball(2.0, 2.0, 0.3), 0.0);
        assert!((pinball(0.0, 1.0, 0.05) - 0.95).abs() < 1e-15);
    }

    #[test]
    fn interpolated_quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(empirical_quantile(&s, 0.5), 3.0);
        assert_eq!(empirical_quantile(&s, 0.25), 2.0);
        assert!((empirical_quantile(&s, 0.1) - 1.4).abs() < 1e-12);
    }

    #[test]
    fn constant_target_scores_zero() {
        let x = Matrix::from_fn(20, 2, |i, j| (i * (j + 1)) as f64);
        let y = vec![3.0; 20];
        assert_eq!(ridge_probe(&x, &y, &x, &y, &RIDGE_LAMBDAS).unwrap().r2, 0.0);
    }
}
