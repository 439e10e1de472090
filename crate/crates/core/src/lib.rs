//! Simulation-based inference toolkit: benchmark simulators, grid reference
//! posteriors, summary pipelines, a conditional spline flow and calibration
//! diagnostics.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod diagnostics;
pub mod flow;
pub mod harness;
pub mod matrix;
pub mod reference;
pub mod rng;
pub mod summary;
pub mod tasks;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use tasks::{SimulationBatch, TaskKind, TaskSpec};
