//! Conditional normalizing flow density estimator.

mod gradcheck;
mod joint;
mod model;
pub mod nn;
pub mod spline;
mod train;

pub use gradcheck::{grad_check, GradCheck, GRAD_CHECK_STEP};
pub use joint::{train_joint, JointModel, LearnedSummary, SummaryNetConfig};
pub use model::{layer_orders, Coupling, FlowConfig, FlowModel};
pub use spline::SplineShape;
pub use train::{learning_rate, optimize, train, Adam, EpochRecord, FlowObjective, Objective, Schedule, TrainConfig, TrainHistory};
