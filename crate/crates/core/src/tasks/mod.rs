//! Task registry: priors, simulators, reference observations and the
//! distractor wrapper.

mod distractors;
mod simulators;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, rng_from_seed};

pub use distractors::{apply_distractors, DistractorConfig, MixtureComponent};
pub use simulators::{ou_transition, solar_growth};

/// Base seed of the ten fixed reference observations.
pub const REFERENCE_SEED: u64 = 12345;
pub const NUM_REFERENCE_OBSERVATIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    #[serde(rename = "ar1_ts_t50")]
    Ar1,
    Ou,
    SolarDynamo,
    GaussianLinear,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Ar1 => "ar1_ts_t50",
            TaskKind::Ou => "ou",
            TaskKind::SolarDynamo => "solar_dynamo",
            TaskKind::GaussianLinear => "gaussian_linear",
        }
    }

    pub fn all() -> [TaskKind; 4] {
        [TaskKind::Ar1, TaskKind::Ou, TaskKind::SolarDynamo, TaskKind::GaussianLinear]
    }
}

/// How prior mass is spread over the box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorVariant {
    Uniform,
    /// Independent Gaussian coordinates; the box is the `±10 std` support
    /// envelope used for containment checks.
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub variant: PriorVariant,
}

impl PriorBox {
    pub fn uniform(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let b = Self { lower, upper, variant: PriorVariant::Uniform };
        b.validate()?;
        Ok(b)
    }

    pub fn gaussian(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        let lower = mean.iter().zip(&std).map(|(m, s)| m - 10.0 * s).collect();
        let upper = mean.iter().zip(&std).map(|(m, s)| m + 10.0 * s).collect();
        let b = Self { lower, upper, variant: PriorVariant::Gaussian { mean, std } };
        b.validate()?;
        Ok(b)
    }

    fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() || self.lower.is_empty() {
            return Err(Error::InvalidInput("prior bounds must be nonempty and equal length".into()));
        }
        if let Some(d) = (0..self.lower.len()).find(|&d| !(self.lower[d] < self.upper[d])) {
            return Err(Error::InvalidInput(format!("prior box has empty width in dimension {d}")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(t, (lo, hi))| *t >= *lo && *t <= *hi)
    }

    /// Log prior density, up to the constant for uniform boxes (0 inside).
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        if !self.contains(theta) {
            return f64::NEG_INFINITY;
        }
        match &self.variant {
            PriorVariant::Uniform => 0.0,
            PriorVariant::Gaussian { mean, std } => theta
                .iter()
                .zip(mean.iter().zip(std))
                .map(|(t, (m, s))| -0.5 * ((t - m) / s).powi(2) - s.ln())
                .sum(),
        }
    }
}

/// Numerical floors applied inside simulators and likelihoods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Clamps {
    /// Lower bound on `1 - rho^2` in the AR(1) stationary variance.
    pub ar1_var_floor: f64,
    /// Lower bound on the OU mean-reversion rate.
    pub ou_beta_floor: f64,
    /// Below this value of `f(p) p` the solar transition is the pure noise uniform.
    pub solar_growth_floor: f64,
}

impl Default for Clamps {
    fn default() -> Self {
        Self { ar1_var_floor: 1e-4, ou_beta_floor: 1e-6, solar_growth_floor: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub kind: TaskKind,
    pub theta_dim: usize,
    pub x_dim: usize,
    pub prior: PriorBox,
    pub clamps: Clamps,
    pub parameter_names: Vec<String>,
    /// Present for `<base>_distractors` variants; `x_dim` already includes
    /// the appended coordinates.
    pub distractors: Option<DistractorConfig>,
}

/// OU discretization step.
pub const OU_DT: f64 = 0.1;
/// Gaussian-linear prior and likelihood variance.
pub const GAUSSIAN_LINEAR_VAR: f64 = 0.1;

impl TaskSpec {
    /// Look up a task by registry name. `<name>_distractors` wraps any base
    /// task with the default distractor configuration.
    pub fn by_name(name: &str) -> Result<Self> {
        if let Some(base) = name.strip_suffix("_distractors") {
            let base = Self::by_name(base)?;
            return base.with_distractors(DistractorConfig::default());
        }
        let kind = TaskKind::all()
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::UnknownTask(name.to_owned()))?;
        Ok(Self::new(kind))
    }

    pub fn new(kind: TaskKind) -> Self {
        let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let (theta_dim, x_dim, prior, parameter_names) = match kind {
            TaskKind::Ar1 => (
                2,
                50,
                PriorBox::uniform(vec![-0.95, 0.05f64.ln()], vec![0.95, 2f64.ln()]),
                names(&["rho", "log_sigma"]),
            ),
            TaskKind::Ou => (
                3,
                100,
                PriorBox::uniform(vec![0.0, 0.0, 0.0], vec![10.0, 5.0, 2.0]),
                names(&["alpha", "beta", "sigma"]),
            ),
            TaskKind::SolarDynamo => (
                3,
                100,
                PriorBox::uniform(vec![0.9, 0.05, 0.02], vec![1.4, 0.25, 0.15]),
                names(&["alpha_min", "alpha_range", "eps_max"]),
            ),
            TaskKind::GaussianLinear => (
                10,
                10,
                PriorBox::gaussian(vec![0.0; 10], vec![GAUSSIAN_LINEAR_VAR.sqrt(); 10]),
                (0..10).map(|d| format!("theta_{d}")).collect(),
            ),
        };
        Self {
            name: kind.name().to_owned(),
            kind,
            theta_dim,
            x_dim,
            prior: prior.expect("built-in prior boxes are valid"),
            clamps: Clamps::default(),
            parameter_names,
            distractors: None,
        }
    }

    pub fn with_distractors(mut self, cfg: DistractorConfig) -> Result<Self> {
        cfg.validate()?;
        if self.distractors.is_some() {
            return Err(Error::InvalidInput("task already carries distractors".into()));
        }
        self.name = format!("{}_distractors", self.name);
        self.x_dim += cfg.count;
        self.distractors = Some(cfg);
        Ok(self)
    }

    /// Observation dimension of the undecorated simulator.
    pub fn base_x_dim(&self) -> usize {
        self.x_dim - self.distractors.as_ref().map_or(0, |d| d.count)
    }
}

/// Paired parameters and observations.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationBatch {
    pub theta: Matrix,
    pub x: Matrix,
    pub seed: u64,
}

impl SimulationBatch {
    pub fn len(&self) -> usize {
        self.theta.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.rows() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self { theta: self.theta.select_rows(idx), x: self.x.select_rows(idx), seed: self.seed }
    }
}

/// Draw `n` parameter vectors from the task prior.
pub fn sample_prior(task: &TaskSpec, n: usize, seed: u64) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::InvalidInput("sample_prior needs n >= 1".into()));
    }
    let d = task.theta_dim;
    let mut rng = rng_from_seed(seed);
    let mut out = Matrix::zeros(n, d);
    for i in 0..n {
        let row = out.row_mut(i);
        match &task.prior.variant {
            PriorVariant::Uniform => {
                for (j, v) in row.iter_mut().enumerate() {
                    let (lo, hi) = (task.prior.lower[j], task.prior.upper[j]);
                    // `random::<f64>()` is in [0, 1); keep the upper edge inside.
                    *v = (lo + (hi - lo) * rng.random::<f64>()).min(hi);
                }
            }
            PriorVariant::Gaussian { mean, std } => {
                for (j, v) in row.iter_mut().enumerate() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v = (mean[j] + std[j] * z).clamp(task.prior.lower[j], task.prior.upper[j]);
                }
            }
        }
    }
    Ok(out)
}

/// Run the task simulator for every parameter row. Row `i` draws its noise
/// from sub-stream `i` of `seed`, so the result does not depend on how rows
/// are scheduled.
pub fn simulate(task: &TaskSpec, theta: &Matrix, seed: u64) -> Result<Matrix> {
    if theta.cols() != task.theta_dim {
        return Err(Error::DimensionMismatch { expected: task.theta_dim, got: theta.cols() });
    }
    let base_dim = task.base_x_dim();
    let mut x = Matrix::zeros(theta.rows(), base_dim);
    for i in 0..theta.rows() {
        let th = theta.row(i);
        if !task.prior.contains(th) {
            return Err(Error::InvalidInput(format!("theta row {i} lies outside the prior box")));
        }
        let mut rng = rng_from_seed(derive_seed(seed, i as u64));
        simulators::simulate_row(task, th, &mut rng, x.row_mut(i));
        if x.row(i).iter().any(|v| !v.is_finite()) {
            return Err(Error::SimulatorFault { row: i });
        }
    }
    match &task.distractors {
        None => Ok(x),
        Some(cfg) => {
            let batch = SimulationBatch { theta: theta.clone(), x, seed };
            let wrapped = apply_distractors(&batch, cfg, derive_seed(seed, crate::rng::streams::DISTRACTORS))?;
            Ok(wrapped.x)
        }
    }
}

/// Prior draw plus simulation.
pub fn simulate_batch(task: &TaskSpec, n: usize, seed: u64) -> Result<SimulationBatch> {
    use crate::rng::streams;
    let theta = sample_prior(task, n, derive_seed(seed, streams::PRIOR))?;
    let x = simulate(task, &theta, derive_seed(seed, streams::SIMULATE))?;
    Ok(SimulationBatch { theta, x, seed })
}

/// The ten fixed reference observations: observation `k` draws its
/// parameter with seed `12345 + k` and its noise with seed `12345 + 1000 + k`.
pub fn make_reference_observations(task: &TaskSpec) -> Result<SimulationBatch> {
    let mut theta = Matrix::zeros(NUM_REFERENCE_OBSERVATIONS, task.theta_dim);
    let mut x = Matrix::zeros(NUM_REFERENCE_OBSERVATIONS, task.x_dim);
    for k in 0..NUM_REFERENCE_OBSERVATIONS {
        let th = sample_prior(task, 1, REFERENCE_SEED + k as u64)?;
        let obs = simulate(task, &th, REFERENCE_SEED + 1000 + k as u64)?;
        theta.row_mut(k).copy_from_slice(th.row(0));
        x.row_mut(k).copy_from_slice(obs.row(0));
    }
    Ok(SimulationBatch { theta, x, seed: REFERENCE_SEED })
}
