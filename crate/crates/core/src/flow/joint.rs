//! Learned MLP summary trained jointly with the flow.

use serde::{Deserialize, Serialize};

use super::model::{FlowConfig, FlowModel};
use super::nn::{Mlp, ParamLayout};
use super::train::{mean_nll_std, optimize, Objective, TrainConfig, TrainHistory};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, rng_from_seed, streams};
use crate::summary::container::{Container, ContainerMeta, Tensor};
use crate::summary::{Standardizer, SUMMARY_DIM};
use crate::tasks::SimulationBatch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryNetConfig {
    pub hidden_widths: Vec<usize>,
    pub output_dim: usize,
}

impl Default for SummaryNetConfig {
    fn default() -> Self {
        Self { hidden_widths: vec![128, 128], output_dim: SUMMARY_DIM }
    }
}

/// `x -> a(x)`: standardize the raw observation then apply a ReLU MLP.
#[derive(Debug, Clone)]
pub struct LearnedSummary {
    pub config: SummaryNetConfig,
    pub x_standardizer: Standardizer,
    pub params: Vec<f64>,
    net: Mlp,
}

impl LearnedSummary {
    pub fn new(config: SummaryNetConfig, x_standardizer: Standardizer, seed: u64) -> Result<Self> {
        if config.output_dim == 0 || config.hidden_widths.contains(&0) {
            return Err(Error::InvalidInput("summary widths must be positive".into()));
        }
        let net = Self::build(&config, x_standardizer.dim());
        let mut params = vec![0.0; net.layers.iter().map(|l| l.n_in * l.n_out + l.n_out).sum()];
        net.init(&mut params, &mut rng_from_seed(derive_seed(seed, streams::SUMMARY_INIT)), false);
        Ok(Self { config, x_standardizer, params, net })
    }

    /// A single linear layer fixed at the identity.
    pub fn identity(x_standardizer: Standardizer) -> Self {
        let d = x_standardizer.dim();
        let config = SummaryNetConfig { hidden_widths: vec![], output_dim: d };
        let net = Self::build(&config, d);
        let mut params = vec![0.0; d * d + d];
        for i in 0..d {
            params[i * d + i] = 1.0;
        }
        Self { config, x_standardizer, params, net }
    }

    fn build(config: &SummaryNetConfig, x_dim: usize) -> Mlp {
        let mut sizes = vec![x_dim];
        sizes.extend(&config.hidden_widths);
        sizes.push(config.output_dim);
        Mlp::new(&sizes, &mut ParamLayout::default())
    }

    pub fn input_dim(&self) -> usize {
        self.x_standardizer.dim()
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim
    }

    fn apply_std(&self, params: &[f64], x_std: &Matrix) -> Matrix {
        let out = self.net.predict(params, x_std.as_slice(), x_std.rows());
        Matrix::from_vec(x_std.rows(), self.config.output_dim, out).expect("network output shape")
    }

    pub fn summarize(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.apply_std(&self.params, &self.x_standardizer.standardize(x)?))
    }

    pub fn to_container(&self, task: &str, seed: u64) -> Result<Container> {
        let meta = ContainerMeta::new(task, seed).with("kind", "learned_summary").with("summary_config", serde_json::to_value(&self.config)?);
        let mut c = Container::new(meta);
        let d = self.input_dim();
        c.push(Tensor::f64("params", vec![self.params.len()], self.params.clone()))
            .push(Tensor::f64("x_mean", vec![d], self.x_standardizer.mean.clone()))
            .push(Tensor::f64("x_std", vec![d], self.x_standardizer.std.clone()));
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let config: SummaryNetConfig = serde_json::from_value(
            c.meta.extra.get("summary_config").cloned().ok_or_else(|| Error::Manifest("missing summary_config".into()))?,
        )?;
        let x_standardizer = Standardizer { mean: c.get("x_mean")?.values_f64(), std: c.get("x_std")?.values_f64() };
        let mut s = Self::new(config, x_standardizer, 0)?;
        let params = c.get("params")?.values_f64();
        if params.len() != s.params.len() {
            return Err(Error::DimensionMismatch { expected: s.params.len(), got: params.len() });
        }
        s.params = params;
        Ok(s)
    }
}

/// Summary network plus the flow it feeds.
#[derive(Debug, Clone)]
pub struct JointModel {
    pub summary: LearnedSummary,
    pub flow: FlowModel,
}

impl JointModel {
    /// Default architecture for a training batch: summary standardizer on
    /// `x`, flow standardizer on `theta`, unstandardized summary context.
    pub fn for_data(batch: &SimulationBatch, config: SummaryNetConfig, seed: u64) -> Result<Self> {
        let summary = LearnedSummary::new(config, Standardizer::fit(&batch.x), seed)?;
        let flow_cfg = FlowConfig::for_dims(batch.theta.cols(), summary.output_dim());
        let flow = FlowModel::new(flow_cfg, Standardizer::fit(&batch.theta), Standardizer::identity(summary.output_dim()), seed)?;
        Self::new(summary, flow)
    }

    pub fn new(summary: LearnedSummary, flow: FlowModel) -> Result<Self> {
        if flow.context_dim() != summary.output_dim() {
            return Err(Error::DimensionMismatch { expected: summary.output_dim(), got: flow.context_dim() });
        }
        Ok(Self { summary, flow })
    }

    pub fn log_prob(&self, theta: &Matrix, x: &Matrix) -> Result<Vec<f64>> {
        self.flow.log_prob(theta, &self.summary.summarize(x)?)
    }

    pub fn sample(&self, x_o: &[f64], n: usize, seed: u64) -> Result<Matrix> {
        let s = self.summary.summarize(&Matrix::from_vec(1, x_o.len(), x_o.to_vec())?)?;
        self.flow.sample(s.row(0), n, seed)
    }
}

struct JointObjective<'a> {
    model: &'a JointModel,
    x: Matrix,
    theta: Matrix,
    val: Option<(Matrix, Matrix)>,
    freeze_summary: bool,
    log_scale: f64,
}

impl JointObjective<'_> {
    fn split<'p>(&self, params: &'p [f64]) -> (&'p [f64], &'p [f64]) {
        params.split_at(self.model.summary.params.len())
    }
}

impl Objective for JointObjective<'_> {
    fn num_train(&self) -> usize {
        self.x.rows()
    }

    fn loss_and_grad(&self, params: &[f64], rows: &[usize], grad: &mut [f64]) -> f64 {
        let (ps, pf) = self.split(params);
        let (gs, gf) = grad.split_at_mut(ps.len());
        let b = rows.len();
        let x = self.x.select_rows(rows);
        let theta = self.theta.select_rows(rows);
        let trace = self.model.summary.net.forward(ps, x.into_vec(), b);
        let flow = &self.model.flow;
        let loss = if self.freeze_summary {
            flow.loss_and_grad(pf, theta.as_slice(), &trace.output, b, gf, None)
        } else {
            let mut g_ctx = vec![0.0; trace.output.len()];
            let l = flow.loss_and_grad(pf, theta.as_slice(), &trace.output, b, gf, Some(&mut g_ctx));
            self.model.summary.net.backward(ps, &trace, &g_ctx, gs, false);
            l
        };
        loss + self.log_scale
    }

    fn validation_loss(&self, params: &[f64]) -> Option<f64> {
        let (ps, pf) = self.split(params);
        self.val.as_ref().map(|(x, t)| {
            let s = self.model.summary.apply_std(ps, x);
            mean_nll_std(&self.model.flow, pf, t, &s) + self.log_scale
        })
    }
}

/// Trains the summary and flow on the same simulations. Gradients reach the
/// summary network unless `freeze_summary` is set.
pub fn train_joint(
    model: &mut JointModel,
    train: &SimulationBatch,
    val: Option<&SimulationBatch>,
    tc: &TrainConfig,
    freeze_summary: bool,
) -> Result<TrainHistory> {
    let prep = |b: &SimulationBatch| -> Result<(Matrix, Matrix)> {
        let x = model.summary.x_standardizer.standardize(&b.x)?;
        let t = model.flow.theta_standardizer.standardize(&b.theta)?;
        Ok((x, t))
    };
    if model.flow.context_standardizer != Standardizer::identity(model.flow.context_dim()) {
        return Err(Error::InvalidInput("joint training expects an identity context standardizer".into()));
    }
    let (x, theta) = prep(train)?;
    let val = val.map(prep).transpose()?;
    let mut params = model.summary.params.clone();
    params.extend_from_slice(&model.flow.params);
    let history = {
        let obj = JointObjective {
            model,
            x,
            theta,
            val,
            freeze_summary,
            log_scale: model.flow.theta_standardizer.log_scale(),
        };
        optimize(&obj, &mut params, tc)?
    };
    let ns = model.summary.params.len();
    model.flow.params = params.split_off(ns);
    model.summary.params = params;
    Ok(history)
}
