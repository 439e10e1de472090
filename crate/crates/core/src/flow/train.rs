//! Adam with cosine decay, gradient clipping and early stopping.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::FlowModel;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, rng_from_seed, streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Per-step cosine decay from `lr` to zero over `max_epochs`.
    Cosine,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub clip_norm: Option<f64>,
    pub schedule: Schedule,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            batch_size: 256,
            max_epochs: 200,
            patience: 20,
            clip_norm: Some(5.0),
            schedule: Schedule::Cosine,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::InvalidInput("lr, batch size, epochs and patience must be positive".into()));
        }
        if matches!(self.clip_norm, Some(c) if !(c > 0.0)) {
            return Err(Error::InvalidInput("clip norm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_nll: f64,
    pub val_nll: Option<f64>,
    pub lr: f64,
    /// Mean pre-clip global gradient norm over the epoch.
    pub grad_norm: f64,
    /// Largest post-clip norm applied during the epoch.
    pub max_applied_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val: Option<f64>,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn epochs(&self) -> usize {
        self.records.len()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["epoch", "train_nll", "val_nll", "lr", "grad_norm"])?;
        for r in &self.records {
            out.write_record([
                r.epoch.to_string(),
                r.train_nll.to_string(),
                r.val_nll.map(|v| v.to_string()).unwrap_or_default(),
                r.lr.to_string(),
                r.grad_norm.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// A differentiable training loss over indexed examples.
pub trait Objective {
    fn num_train(&self) -> usize;
    /// Mean loss over `rows`; gradients are added to the zeroed `grad`.
    fn loss_and_grad(&self, params: &[f64], rows: &[usize], grad: &mut [f64]) -> f64;
    /// Held-out loss used for early stopping, if any.
    fn validation_loss(&self, params: &[f64]) -> Option<f64>;
}

pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(n: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0, beta1, beta2, eps }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

pub fn learning_rate(tc: &TrainConfig, step: usize, total_steps: usize) -> f64 {
    match tc.schedule {
        Schedule::Constant => tc.lr,
        Schedule::Cosine => 0.5 * tc.lr * (1.0 + (std::f64::consts::PI * step as f64 / total_steps.max(1) as f64).cos()),
    }
}

/// Runs the optimizer on `params` in place. With a validation loss the best
/// epoch's parameters are restored at the end.
pub fn optimize<O: Objective + ?Sized>(obj: &O, params: &mut Vec<f64>, tc: &TrainConfig) -> Result<TrainHistory> {
    tc.validate()?;
    let n = obj.num_train();
    if n < tc.batch_size {
        return Err(Error::InsufficientSamples { needed: tc.batch_size, got: n });
    }
    let steps_per_epoch = n.div_ceil(tc.batch_size);
    let total = steps_per_epoch * tc.max_epochs;
    let mut rng = rng_from_seed(derive_seed(tc.seed, streams::SHUFFLE));
    let mut order: Vec<usize> = (0..n).collect();
    let mut adam = Adam::new(params.len(), tc.beta1, tc.beta2, tc.eps);
    let mut grad = vec![0.0; params.len()];
    let mut history = TrainHistory::default();
    let mut best_params = params.clone();
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    let mut step = 0;
    for epoch in 1..=tc.max_epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut norm_sum, mut max_applied) = (0.0, 0.0, 0.0f64);
        let mut lr = tc.lr;
        for rows in order.chunks(tc.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let loss = obj.loss_and_grad(params, rows, &mut grad);
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if !loss.is_finite() || !norm.is_finite() {
                return Err(Error::TrainingDivergence { epoch });
            }
            let mut applied = norm;
            if let Some(c) = tc.clip_norm {
                if norm > c {
                    let s = c / norm;
                    grad.iter_mut().for_each(|g| *g *= s);
                    applied = c;
                }
            }
            lr = learning_rate(tc, step, total);
            adam.step(params, &grad, lr);
            step += 1;
            loss_sum += loss * rows.len() as f64;
            norm_sum += norm;
            max_applied = max_applied.max(applied);
        }
        let val = obj.validation_loss(params);
        if matches!(val, Some(v) if !v.is_finite()) {
            return Err(Error::TrainingDivergence { epoch });
        }
        history.records.push(EpochRecord {
            epoch,
            train_nll: loss_sum / n as f64,
            val_nll: val,
            lr,
            grad_norm: norm_sum / steps_per_epoch as f64,
            max_applied_norm: max_applied,
        });
        match val {
            Some(v) if v < best => {
                best = v;
                best_params.clone_from(params);
                history.best_epoch = epoch;
                since_best = 0;
            }
            Some(_) => {
                since_best += 1;
                if since_best >= tc.patience {
                    history.stopped_early = true;
                    break;
                }
            }
            None => history.best_epoch = epoch,
        }
    }
    if best.is_finite() {
        *params = best_params;
        history.best_val = Some(best);
    }
    Ok(history)
}

/// Standardized training data for a single flow.
pub struct FlowObjective<'a> {
    pub model: &'a FlowModel,
    theta: Matrix,
    context: Matrix,
    val: Option<(Matrix, Matrix)>,
    log_scale: f64,
}

impl<'a> FlowObjective<'a> {
    pub fn new(model: &'a FlowModel, theta: &Matrix, context: &Matrix, val: Option<(&Matrix, &Matrix)>) -> Result<Self> {
        let t = model.theta_standardizer.standardize(theta)?;
        let c = model.context_standardizer.standardize(context)?;
        if t.rows() != c.rows() {
            return Err(Error::DimensionMismatch { expected: t.rows(), got: c.rows() });
        }
        let val = match val {
            Some((vt, vc)) => Some((model.theta_standardizer.standardize(vt)?, model.context_standardizer.standardize(vc)?)),
            None => None,
        };
        Ok(Self { model, theta: t, context: c, val, log_scale: model.theta_standardizer.log_scale() })
    }
}

/// Mean standardized NLL without gradients, in chunks.
pub(crate) fn mean_nll_std(model: &FlowModel, params: &[f64], theta_std: &Matrix, ctx_std: &Matrix) -> f64 {
    let d = model.theta_dim();
    let cd = model.context_dim();
    let n = theta_std.rows();
    let mut total = 0.0;
    let mut start = 0;
    while start < n {
        let b = 1024.min(n - start);
        let t = &theta_std.as_slice()[start * d..(start + b) * d];
        let c = &ctx_std.as_slice()[start * cd..(start + b) * cd];
        total += model.nll_sum(params, t, c, b);
        start += b;
    }
    total / n as f64
}

impl Objective for FlowObjective<'_> {
    fn num_train(&self) -> usize {
        self.theta.rows()
    }

    fn loss_and_grad(&self, params: &[f64], rows: &[usize], grad: &mut [f64]) -> f64 {
        let t = self.theta.select_rows(rows);
        let c = self.context.select_rows(rows);
        self.model.loss_and_grad(params, t.as_slice(), c.as_slice(), rows.len(), grad, None) + self.log_scale
    }

    fn validation_loss(&self, params: &[f64]) -> Option<f64> {
        self.val.as_ref().map(|(t, c)| mean_nll_std(self.model, params, t, c) + self.log_scale)
    }
}

/// Fits `model` to raw-unit pairs. Losses in the history are raw-unit NLL.
pub fn train(
    model: &mut FlowModel,
    train_theta: &Matrix,
    train_context: &Matrix,
    val: Option<(&Matrix, &Matrix)>,
    tc: &TrainConfig,
) -> Result<TrainHistory> {
    let mut params = model.params.clone();
    let history = {
        let obj = FlowObjective::new(model, train_theta, train_context, val)?;
        optimize(&obj, &mut params, tc)?
    };
    model.params = params;
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Quadratic bowl with a fixed validation curve.
    struct Bowl {
        flat_from: usize,
        calls: std::cell::Cell<usize>,
    }

    impl Objective for Bowl {
        fn num_train(&self) -> usize {
            10
        }
        fn loss_and_grad(&self, params: &[f64], _rows: &[usize], grad: &mut [f64]) -> f64 {
            for (g, p) in grad.iter_mut().zip(params) {
                *g += 2.0 * (p - 3.0);
            }
            params.iter().map(|p| (p - 3.0).powi(2)).sum()
        }
        fn validation_loss(&self, _params: &[f64]) -> Option<f64> {
            let e = self.calls.get() + 1;
            self.calls.set(e);
            Some(if e < self.flat_from { 10.0 - e as f64 } else { 10.0 - self.flat_from as f64 })
        }
    }

    #[test]
    fn patience_stops_on_a_flat_curve() {
        let obj = Bowl { flat_from: 3, calls: Default::default() };
        let tc = TrainConfig { batch_size: 10, lr: 0.1, ..TrainConfig::default() };
        let mut p = vec![0.0];
        let h = optimize(&obj, &mut p, &tc).unwrap();
        assert!(h.stopped_early);
        assert_eq!(h.best_epoch, 3);
        assert_eq!(h.epochs(), 23);
    }

    #[test]
    fn clipping_bounds_the_step_norm() {
        let obj = Bowl { flat_from: 1000, calls: Default::default() };
        let tc = TrainConfig { batch_size: 5, lr: 0.01, max_epochs: 5, ..TrainConfig::default() };
        let mut p = vec![-100.0, 50.0];
        let h = optimize(&obj, &mut p, &tc).unwrap();
        assert!(h.records.iter().all(|r| r.max_applied_norm <= 5.0 + 1e-12));
        assert!(h.records[0].grad_norm > 5.0);
    }

    #[test]
    fn cosine_reaches_zero() {
        let tc = TrainConfig::default();
        assert_eq!(learning_rate(&tc, 0, 100), 5e-4);
        assert!(learning_rate(&tc, 100, 100).abs() < 1e-20);
        assert!((learning_rate(&tc, 50, 100) - 2.5e-4).abs() < 1e-15);
    }

    #[test]
    fn too_few_rows_is_an_error() {
        let obj = Bowl { flat_from: 3, calls: Default::default() };
        let mut p = vec![0.0];
        assert!(matches!(optimize(&obj, &mut p, &TrainConfig::default()), Err(Error::InsufficientSamples { .. })));
    }
}
