//! Summaries that need no pretrained model: standardized raw observations,
//! or per-parameter random feature chunks.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::context::context_fingerprint;
use super::embedding::{EmbeddingSet, EmbeddingSource};
use super::standardize::Standardizer;
use crate::error::Result;
use crate::matrix::{gemm, Matrix};
use crate::rng::{derive_seed, rng_from_seed};
use crate::tasks::SimulationBatch;

/// Chunk width of the random-feature surrogate.
pub const SURROGATE_WIDTH: usize = 192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateKind {
    RawStandardized,
    RandomProjection,
}

/// Surrogate embedder with statistics frozen on the training observations.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateSummarizer {
    pub kind: SurrogateKind,
    pub x_standardizer: Standardizer,
    /// One `Dx x E` Gaussian matrix per parameter coordinate.
    pub projections: Vec<Matrix>,
    fingerprint: String,
}

impl SurrogateSummarizer {
    pub fn fit(train_x: &Matrix, kind: SurrogateKind, theta_dim: usize, seed: u64) -> Self {
        let x_standardizer = Standardizer::fit(train_x);
        let dx = train_x.cols();
        let projections = match kind {
            SurrogateKind::RawStandardized => Vec::new(),
            SurrogateKind::RandomProjection => (0..theta_dim)
                .map(|d| {
                    let mut rng = rng_from_seed(derive_seed(seed, d as u64));
                    let scale = 1.0 / (dx as f64).sqrt();
                    Matrix::from_fn(dx, SURROGATE_WIDTH, |_, _| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z * scale
                    })
                })
                .collect(),
        };
        let tag = match kind {
            SurrogateKind::RawStandardized => 0,
            SurrogateKind::RandomProjection => 1,
        };
        let fingerprint = context_fingerprint(tag, &[seed as usize, theta_dim, dx]);
        Self { kind, x_standardizer, projections, fingerprint }
    }

    /// `raw_standardized`: a single chunk of standardized `x`.
    /// `random_projection`: chunk `d` is `tanh(x_std G_d)`.
    pub fn embed(&self, x: &Matrix) -> Result<EmbeddingSet> {
        let xs = self.x_standardizer.standardize(x)?;
        let chunks = match self.kind {
            SurrogateKind::RawStandardized => vec![xs],
            SurrogateKind::RandomProjection => self
                .projections
                .iter()
                .map(|g| {
                    let mut out = Matrix::zeros(xs.rows(), g.cols());
                    gemm(xs.rows(), xs.cols(), g.cols(), 1.0, xs.as_slice(), false, g.as_slice(), false, 0.0, out.as_mut_slice());
                    out.as_mut_slice().iter_mut().for_each(|v| *v = v.tanh());
                    out
                })
                .collect(),
        };
        EmbeddingSet::new(chunks, 0, EmbeddingSource::Surrogate, self.fingerprint.clone())
    }
}

/// Fit on `batch` and embed the same batch.
pub fn surrogate_summary(batch: &SimulationBatch, kind: SurrogateKind, seed: u64) -> Result<EmbeddingSet> {
    SurrogateSummarizer::fit(&batch.x, kind, batch.theta.cols(), seed).embed(&batch.x)
}
