//! Summary pipeline: embedding containers, the parameter-wise chunk
//! layout, the fixed PCA map and the TabPFN-free surrogate embedders.

pub mod container;
mod context;
mod embedding;
mod pca;
mod standardize;
mod surrogate;

pub use container::{Container, ContainerMeta, Tensor, TensorData};
pub use context::{build_context_indices, context_fingerprint, ContextIndices, MAX_CONTEXT};
pub use embedding::{concat_chunks, EmbeddingSet, EmbeddingSource};
pub use pca::{fit_pca, SummaryMap, SUMMARY_DIM};
pub use standardize::{Standardizer, STD_FLOOR};
pub use surrogate::{surrogate_summary, SurrogateKind, SurrogateSummarizer, SURROGATE_WIDTH};

use std::path::Path;

use crate::error::Result;
use crate::matrix::Matrix;
use crate::tasks::SimulationBatch;

/// Read an embedding container written by the exporter.
pub fn read_embedding_container(path: &Path) -> Result<EmbeddingSet> {
    EmbeddingSet::from_container(&Container::read(path)?)
}

/// Serialize a simulation batch (tensors `theta`, `x`), optionally with the
/// run's context indices so an external embedder can reuse them.
pub fn batch_to_container(task: &str, batch: &SimulationBatch, context: Option<&ContextIndices>) -> Container {
    let mut meta = ContainerMeta::new(task, batch.seed).with("kind", "simulation_batch");
    let mut c = Container::new(meta.clone());
    c.push(Tensor::matrix_f32("theta", &batch.theta));
    c.push(Tensor::matrix_f32("x", &batch.x));
    if let Some(ctx) = context {
        meta.context_fingerprint = ctx.fingerprint.clone();
        c.meta = meta;
        c.push(Tensor::f32("context_indices", vec![ctx.indices.len()], ctx.indices.iter().map(|&i| i as f32).collect()));
    }
    c
}

pub fn batch_from_container(c: &Container) -> Result<SimulationBatch> {
    let theta = c.matrix("theta")?;
    let x = c.matrix("x")?;
    if theta.rows() != x.rows() {
        return Err(crate::error::Error::DimensionMismatch { expected: theta.rows(), got: x.rows() });
    }
    Ok(SimulationBatch { theta, x, seed: c.meta.seed })
}

pub fn read_batch_container(path: &Path) -> Result<SimulationBatch> {
    batch_from_container(&Container::read(path)?)
}

/// Lossless storage for matrices the engine itself produces.
pub fn matrix_container(task: &str, kind: &str, name: &str, m: &Matrix) -> Container {
    let mut c = Container::new(ContainerMeta::new(task, 0).with("kind", kind));
    c.push(Tensor::matrix_f64(name, m));
    c
}
