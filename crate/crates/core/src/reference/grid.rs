use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{log_likelihood, PosteriorSamples, SampleSource};
use crate::error::{Error, Result};
use crate::matrix::{log_sum_exp, Matrix};
use crate::rng::rng_from_seed;
use crate::tasks::{TaskKind, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub low: f64,
    pub high: f64,
    pub resolution: usize,
}

impl GridAxis {
    pub fn width(&self) -> f64 {
        (self.high - self.low) / self.resolution as f64
    }

    /// Center of cell `i`; the cells partition `[low, high]`.
    pub fn center(&self, i: usize) -> f64 {
        self.low + (i as f64 + 0.5) * self.width()
    }
}

/// Parameter grid spanning the prior box of a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub task: String,
    pub axes: Vec<GridAxis>,
}

impl GridSpec {
    pub fn new(task: &TaskSpec, resolutions: &[usize]) -> Result<Self> {
        if resolutions.len() != task.theta_dim {
            return Err(Error::DimensionMismatch { expected: task.theta_dim, got: resolutions.len() });
        }
        if resolutions.iter().any(|&r| r < 2) {
            return Err(Error::InvalidInput("grid resolution must be at least 2 per axis".into()));
        }
        let axes = resolutions
            .iter()
            .enumerate()
            .map(|(d, &resolution)| GridAxis { low: task.prior.lower[d], high: task.prior.upper[d], resolution })
            .collect();
        Ok(Self { task: task.name.clone(), axes })
    }

    /// 401 x 301 for AR(1), 80^3 for OU and the solar dynamo.
    pub fn default_for(task: &TaskSpec) -> Result<Self> {
        match task.kind {
            TaskKind::Ar1 => Self::new(task, &[401, 301]),
            TaskKind::Ou | TaskKind::SolarDynamo => Self::new(task, &[80, 80, 80]),
            TaskKind::GaussianLinear => {
                Err(Error::InvalidInput("gaussian_linear uses the analytic posterior, not a grid".into()))
            }
        }
    }

    pub fn num_cells(&self) -> usize {
        self.axes.iter().map(|a| a.resolution).product()
    }

    /// Cell center of flat index `cell` (last axis varies fastest).
    pub fn cell_center(&self, mut cell: usize, out: &mut [f64]) {
        for (d, axis) in self.axes.iter().enumerate().rev() {
            out[d] = axis.center(cell % axis.resolution);
            cell /= axis.resolution;
        }
    }
}

/// Unnormalized log posterior over the cells of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPosterior {
    pub log_post: Vec<f64>,
    pub spec: GridSpec,
    pub x_o: Vec<f64>,
}

impl GridPosterior {
    pub fn new(log_post: Vec<f64>, spec: GridSpec, x_o: Vec<f64>) -> Result<Self> {
        if log_post.len() != spec.num_cells() {
            return Err(Error::DimensionMismatch { expected: spec.num_cells(), got: log_post.len() });
        }
        if log_post.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::InvalidInput("grid log posterior contains NaN or +inf".into()));
        }
        if !log_post.iter().any(|v| v.is_finite()) {
            return Err(Error::EmptyPosterior);
        }
        Ok(Self { log_post, spec, x_o })
    }

    /// Cell probabilities via log-sum-exp normalization.
    pub fn probabilities(&self) -> Vec<f64> {
        let lse = log_sum_exp(&self.log_post);
        self.log_post.iter().map(|v| (v - lse).exp()).collect()
    }

    pub fn argmax(&self) -> usize {
        self.log_post
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
            .0
    }

    pub fn cell_center(&self, cell: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.spec.axes.len()];
        self.spec.cell_center(cell, &mut out);
        out
    }

    /// Posterior mean over cell centers.
    pub fn mean(&self) -> Vec<f64> {
        let probs = self.probabilities();
        let mut mean = vec![0.0; self.spec.axes.len()];
        let mut c = vec![0.0; mean.len()];
        for (cell, p) in probs.iter().enumerate() {
            if *p > 0.0 {
                self.spec.cell_center(cell, &mut c);
                mean.iter_mut().zip(&c).for_each(|(m, v)| *m += p * v);
            }
        }
        mean
    }
}

/// Exact log likelihood plus log prior at every cell center.
pub fn evaluate_grid(task: &TaskSpec, x_o: &[f64], spec: &GridSpec) -> Result<GridPosterior> {
    if spec.axes.len() != task.theta_dim {
        return Err(Error::DimensionMismatch { expected: task.theta_dim, got: spec.axes.len() });
    }
    // Nuisance coordinates carry no information about theta.
    let x_base = base_observation(task, x_o)?;
    let log_post: Vec<f64> = (0..spec.num_cells())
        .into_par_iter()
        .map_init(
            || vec![0.0; task.theta_dim],
            |theta, cell| {
                spec.cell_center(cell, theta);
                let lp = task.prior.log_density(theta);
                if lp == f64::NEG_INFINITY {
                    return lp;
                }
                let ll = log_likelihood(task, theta, &x_base);
                if ll.is_nan() {
                    f64::NEG_INFINITY
                } else {
                    ll + lp
                }
            },
        )
        .collect();
    GridPosterior::new(log_post, spec.clone(), x_o.to_vec())
}

/// Undo the distractor permutation and drop the nuisance columns.
pub(crate) fn base_observation(task: &TaskSpec, x_o: &[f64]) -> Result<Vec<f64>> {
    if x_o.len() != task.x_dim {
        return Err(Error::DimensionMismatch { expected: task.x_dim, got: x_o.len() });
    }
    match &task.distractors {
        None => Ok(x_o.to_vec()),
        Some(cfg) => {
            let base = task.base_x_dim();
            let perm = cfg.permutation(task.x_dim);
            let mut out = vec![0.0; base];
            for (j, &src) in perm.iter().enumerate() {
                if src < base {
                    out[src] = x_o[j];
                }
            }
            Ok(out)
        }
    }
}

/// Draw `n` cells with replacement from the normalized grid posterior and
/// return their centers. With `jitter`, each draw is spread uniformly over
/// its cell instead.
pub fn sample_grid_with(gp: &GridPosterior, n: usize, seed: u64, jitter: bool) -> PosteriorSamples {
    let probs = gp.probabilities();
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in &probs {
        acc += p;
        cdf.push(acc);
    }
    let total = acc;
    let last_positive = probs.iter().rposition(|p| *p > 0.0).unwrap_or(0);
    let mut rng = rng_from_seed(seed);
    let d = gp.spec.axes.len();
    let mut samples = Matrix::zeros(n, d);
    for i in 0..n {
        let u: f64 = rng.random::<f64>() * total;
        let cell = cdf.partition_point(|c| *c <= u).min(last_positive);
        let row = samples.row_mut(i);
        gp.spec.cell_center(cell, row);
        if jitter {
            for (v, axis) in row.iter_mut().zip(&gp.spec.axes) {
                *v += (rng.random::<f64>() - 0.5) * axis.width();
            }
        }
    }
    PosteriorSamples { samples, source: SampleSource::Grid, observation_index: None }
}

pub fn sample_grid(gp: &GridPosterior, n: usize, seed: u64) -> PosteriorSamples {
    sample_grid_with(gp, n, seed, false)
}
