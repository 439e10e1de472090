//! Fixed linear summary map `g`: PCA fitted once on training embeddings.

use nalgebra::{DMatrix, SymmetricEigen};

use super::container::{Container, ContainerMeta, Tensor};
use crate::error::{Error, Result};
use crate::matrix::{gemm, Matrix};

/// Default summary width.
pub const SUMMARY_DIM: usize = 64;

/// Eigenvalues below `RANK_TOL * max eigenvalue` count as null directions.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryMap {
    pub mean: Vec<f64>,
    /// `k x D`, orthonormal rows sorted by explained variance.
    pub components: Matrix,
    pub explained_variance: Vec<f64>,
    pub total_variance: f64,
    /// Some components were filled in by orthonormal completion.
    pub rank_deficient: bool,
}

impl SummaryMap {
    /// No-PCA pass-through of width `dim`.
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            components: Matrix::from_fn(dim, dim, |i, j| if i == j { 1.0 } else { 0.0 }),
            explained_variance: vec![0.0; dim],
            total_variance: 0.0,
            rank_deficient: false,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.rows()
    }

    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        let t = self.total_variance.max(f64::MIN_POSITIVE);
        self.explained_variance.iter().map(|v| v / t).collect()
    }

    /// `(raw - mean) C^T`.
    pub fn apply(&self, raw: &Matrix) -> Result<Matrix> {
        if raw.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: raw.cols() });
        }
        let mut centered = raw.clone();
        for i in 0..centered.rows() {
            centered.row_mut(i).iter_mut().zip(&self.mean).for_each(|(v, m)| *v -= m);
        }
        let (n, d, k) = (raw.rows(), self.input_dim(), self.output_dim());
        let mut out = Matrix::zeros(n, k);
        gemm(n, d, k, 1.0, centered.as_slice(), false, self.components.as_slice(), true, 0.0, out.as_mut_slice());
        Ok(out)
    }

    /// Map summaries back to embedding space (`s C + mean`).
    pub fn reconstruct(&self, summaries: &Matrix) -> Result<Matrix> {
        if summaries.cols() != self.output_dim() {
            return Err(Error::DimensionMismatch { expected: self.output_dim(), got: summaries.cols() });
        }
        let (n, d, k) = (summaries.rows(), self.input_dim(), self.output_dim());
        let mut out = Matrix::zeros(n, d);
        gemm(n, k, d, 1.0, summaries.as_slice(), false, self.components.as_slice(), false, 0.0, out.as_mut_slice());
        for i in 0..n {
            out.row_mut(i).iter_mut().zip(&self.mean).for_each(|(v, m)| *v += m);
        }
        Ok(out)
    }

    pub fn to_container(&self, task: &str) -> Container {
        let meta = ContainerMeta::new(task, 0)
            .with("kind", "summary_map")
            .with("total_variance", self.total_variance)
            .with("rank_deficient", self.rank_deficient);
        let mut c = Container::new(meta);
        c.push(Tensor::f64("mean", vec![self.input_dim()], self.mean.clone()));
        c.push(Tensor::matrix_f64("components", &self.components));
        c.push(Tensor::f64("explained_variance", vec![self.output_dim()], self.explained_variance.clone()));
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let mean = c.get("mean")?.values_f64();
        let components = c.matrix("components")?;
        if components.cols() != mean.len() {
            return Err(Error::DimensionMismatch { expected: mean.len(), got: components.cols() });
        }
        Ok(Self {
            mean,
            components,
            explained_variance: c.get("explained_variance")?.values_f64(),
            total_variance: c.meta.extra.get("total_variance").and_then(|v| v.as_f64()).unwrap_or(0.0),
            rank_deficient: c.meta.extra.get("rank_deficient").and_then(|v| v.as_bool()).unwrap_or(false),
        })
    }
}

/// Flip `v` so its largest-magnitude entry (first on ties) is positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Top-`k` principal directions of `train` via the eigendecomposition of
/// the sample covariance. Missing directions of a rank-deficient input are
/// completed by Gram-Schmidt against the standard basis.
pub fn fit_pca(train: &Matrix, k: usize) -> Result<SummaryMap> {
    let (n, d) = (train.rows(), train.cols());
    if n <= k {
        return Err(Error::InsufficientSamples { needed: k + 1, got: n });
    }
    if k > d || k == 0 {
        return Err(Error::InvalidInput(format!("cannot keep {k} components of a {d}-dimensional input")));
    }
    let mean = train.column_means();
    let mut centered = train.clone();
    for i in 0..n {
        centered.row_mut(i).iter_mut().zip(&mean).for_each(|(v, m)| *v -= m);
    }
    let mut cov = vec![0.0; d * d];
    gemm(d, n, d, 1.0 / (n - 1) as f64, centered.as_slice(), true, centered.as_slice(), false, 0.0, &mut cov);
    // Symmetrize exactly; the product is symmetric only up to rounding.
    for i in 0..d {
        for j in 0..i {
            let v = 0.5 * (cov[i * d + j] + cov[j * d + i]);
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    let total_variance: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, &cov));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let max_eig = eig.eigenvalues[order[0]].max(0.0);

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut explained = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let lambda = eig.eigenvalues[idx];
        if lambda <= RANK_TOL * max_eig || lambda <= 0.0 {
            break;
        }
        let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        fix_sign(&mut v);
        rows.push(v);
        explained.push(lambda);
    }
    let rank_deficient = rows.len() < k;
    let mut basis = 0;
    while rows.len() < k {
        let mut v = vec![0.0; d];
        v[basis] = 1.0;
        basis += 1;
        for _ in 0..2 {
            for r in &rows {
                let dot: f64 = r.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(r).for_each(|(x, a)| *x -= dot * a);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            fix_sign(&mut v);
            rows.push(v);
            explained.push(0.0);
        }
    }
    Ok(SummaryMap {
        mean,
        components: Matrix::from_rows(&rows)?,
        explained_variance: explained,
        total_variance,
        rank_deficient,
    })
}
