use serde::{Deserialize, Serialize};

use super::container::{Container, ContainerMeta, Tensor};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    Pretrained,
    Surrogate,
}

impl EmbeddingSource {
    pub fn as_str(self) -> &'static str {
        match self {
            EmbeddingSource::Pretrained => "pretrained",
            EmbeddingSource::Surrogate => "surrogate",
        }
    }
}

/// Parameter-indexed embedding chunks: chunk `d` holds the `n x E` query
/// embeddings produced under the context of parameter coordinate `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub chunks: Vec<Matrix>,
    pub layer: i64,
    pub source: EmbeddingSource,
    pub context_fingerprint: String,
}

impl EmbeddingSet {
    pub fn new(chunks: Vec<Matrix>, layer: i64, source: EmbeddingSource, context_fingerprint: String) -> Result<Self> {
        let es = Self { chunks, layer, source, context_fingerprint };
        es.validate()?;
        Ok(es)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self.chunks.first().ok_or_else(|| Error::InvalidInput("embedding set has no chunks".into()))?;
        for c in &self.chunks[1..] {
            if c.rows() != first.rows() {
                return Err(Error::DimensionMismatch { expected: first.rows(), got: c.rows() });
            }
            if c.cols() != first.cols() {
                return Err(Error::DimensionMismatch { expected: first.cols(), got: c.cols() });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.chunks[0].rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-chunk width `E`.
    pub fn width(&self) -> usize {
        self.chunks[0].cols()
    }

    pub fn num_chunks(&self) -> usize {
        self.chunks.len()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            chunks: self.chunks.iter().map(|c| c.select_rows(idx)).collect(),
            layer: self.layer,
            source: self.source,
            context_fingerprint: self.context_fingerprint.clone(),
        }
    }

    pub fn to_container(&self, task: &str, seed: u64) -> Container {
        let mut meta = ContainerMeta::new(task, seed).with("source", self.source.as_str()).with("kind", "embeddings");
        meta.layer = self.layer;
        meta.context_fingerprint = self.context_fingerprint.clone();
        let mut c = Container::new(meta);
        for (d, chunk) in self.chunks.iter().enumerate() {
            c.push(Tensor::matrix_f32(format!("chunk_{d}"), chunk));
        }
        c
    }

    /// Reads tensors `chunk_0 .. chunk_{D-1}`. The chunk width is taken from
    /// the tensors themselves.
    pub fn from_container(c: &Container) -> Result<Self> {
        let mut chunks = Vec::new();
        while let Some(t) = c.tensors.iter().find(|t| t.name == format!("chunk_{}", chunks.len())) {
            chunks.push(t.to_matrix()?);
        }
        if chunks.is_empty() {
            return Err(Error::Manifest("container holds no `chunk_0` tensor".into()));
        }
        let source = match c.meta.extra_str("source") {
            Some("surrogate") => EmbeddingSource::Surrogate,
            _ => EmbeddingSource::Pretrained,
        };
        Self::new(chunks, c.meta.layer, source, c.meta.context_fingerprint.clone())
    }
}

/// `h_raw`: chunk `d` occupies columns `[d E, (d + 1) E)`.
pub fn concat_chunks(es: &EmbeddingSet) -> Matrix {
    let parts: Vec<&Matrix> = es.chunks.iter().collect();
    Matrix::hcat(&parts).expect("validated chunk shapes")
}
