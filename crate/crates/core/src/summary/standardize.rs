use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const STD_FLOOR: f64 = 1e-8;

/// Per-coordinate affine standardization with training statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Column means and population standard deviations, floored at `1e-8`.
    pub fn fit(data: &Matrix) -> Self {
        let mean = data.column_means();
        let mut var = vec![0.0; data.cols()];
        for r in data.row_iter() {
            for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
                *v += (x - m).powi(2);
            }
        }
        let n = data.rows().max(1) as f64;
        let std = var.into_iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
        Self { mean, std }
    }

    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, m: &Matrix) -> Result<()> {
        if m.cols() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: m.cols() });
        }
        Ok(())
    }

    pub fn standardize(&self, m: &Matrix) -> Result<Matrix> {
        self.check(m)?;
        let mut out = m.clone();
        for i in 0..out.rows() {
            self.standardize_in_place(out.row_mut(i));
        }
        Ok(out)
    }

    pub fn unstandardize(&self, m: &Matrix) -> Result<Matrix> {
        self.check(m)?;
        let mut out = m.clone();
        for i in 0..out.rows() {
            for ((v, mu), s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = mu + s * *v;
            }
        }
        Ok(out)
    }

    #[inline]
    pub fn standardize_in_place(&self, row: &mut [f64]) {
        for ((v, mu), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - mu) / s;
        }
    }

    /// `sum(log std)`, the log-Jacobian of the standardization.
    pub fn log_scale(&self) -> f64 {
        self.std.iter().map(|s| s.ln()).sum()
    }
}
