//! Reference posteriors: exact likelihoods, grid posteriors and the
//! conjugate Gaussian-linear posterior.

mod grid;
mod likelihood;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use grid::{evaluate_grid, sample_grid, sample_grid_with, GridAxis, GridPosterior, GridSpec};
pub use likelihood::{
    loglik_ar1, loglik_ou, loglik_solar, solar_transition_logpdf, uniform_sum_density, OuLogLik,
};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::rng_from_seed;
use crate::tasks::{PriorVariant, TaskKind, TaskSpec, GAUSSIAN_LINEAR_VAR};

/// Default number of cached reference samples per observation.
pub const REFERENCE_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSource {
    Grid,
    Analytic,
    Flow,
}

impl SampleSource {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleSource::Grid => "grid",
            SampleSource::Analytic => "analytic",
            SampleSource::Flow => "flow",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    pub samples: Matrix,
    pub source: SampleSource,
    pub observation_index: Option<usize>,
}

impl PosteriorSamples {
    pub fn for_observation(mut self, index: usize) -> Self {
        self.observation_index = Some(index);
        self
    }
}

/// Log-likelihood of the undecorated task simulator.
pub fn log_likelihood(task: &TaskSpec, theta: &[f64], x: &[f64]) -> f64 {
    match task.kind {
        TaskKind::Ar1 => loglik_ar1(theta, x, &task.clamps),
        TaskKind::Ou => loglik_ou(theta, x, &task.clamps).value,
        TaskKind::SolarDynamo => loglik_solar(theta, x, &task.clamps),
        TaskKind::GaussianLinear => x
            .iter()
            .zip(theta)
            .map(|(xi, t)| {
                -0.5 * (xi - t).powi(2) / GAUSSIAN_LINEAR_VAR
                    - 0.5 * (2.0 * std::f64::consts::PI * GAUSSIAN_LINEAR_VAR).ln()
            })
            .sum(),
    }
}

/// Diagonal Gaussian posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mean: Vec<f64>,
    /// Diagonal of the covariance.
    pub variance: Vec<f64>,
}

impl GaussianPosterior {
    pub fn sample(&self, n: usize, seed: u64) -> PosteriorSamples {
        let mut rng = rng_from_seed(seed);
        let d = self.mean.len();
        let mut samples = Matrix::zeros(n, d);
        for i in 0..n {
            for (j, v) in samples.row_mut(i).iter_mut().enumerate() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = self.mean[j] + self.variance[j].sqrt() * z;
            }
        }
        PosteriorSamples { samples, source: SampleSource::Analytic, observation_index: None }
    }
}

/// Conjugate posterior of the Gaussian-linear task: prior `N(m, s0^2 I)`,
/// likelihood `N(theta, s^2 I)`; with `s0^2 = s^2 = 0.1` this is
/// `N(x_o / 2, 0.05 I)`.
pub fn analytic_gaussian_linear_posterior(task: &TaskSpec, x_o: &[f64]) -> Result<GaussianPosterior> {
    let PriorVariant::Gaussian { mean, std } = &task.prior.variant else {
        return Err(Error::InvalidInput("analytic posterior needs a Gaussian prior".into()));
    };
    let x_base = grid::base_observation(task, x_o)?;
    if x_base.len() != mean.len() {
        return Err(Error::DimensionMismatch { expected: mean.len(), got: x_base.len() });
    }
    let lik_var = GAUSSIAN_LINEAR_VAR;
    let (m, v) = x_base
        .iter()
        .zip(mean.iter().zip(std))
        .map(|(x, (m0, s0))| {
            let prior_var = s0 * s0;
            let post_var = 1.0 / (1.0 / prior_var + 1.0 / lik_var);
            (post_var * (m0 / prior_var + x / lik_var), post_var)
        })
        .unzip();
    Ok(GaussianPosterior { mean: m, variance: v })
}

/// Reference posterior samples for one observation: analytic for the
/// Gaussian-linear task, the default exact-likelihood grid otherwise.
pub fn reference_samples(task: &TaskSpec, x_o: &[f64], n: usize, seed: u64) -> Result<PosteriorSamples> {
    match task.kind {
        TaskKind::GaussianLinear => Ok(analytic_gaussian_linear_posterior(task, x_o)?.sample(n, seed)),
        _ => {
            let spec = GridSpec::default_for(task)?;
            let gp = evaluate_grid(task, x_o, &spec)?;
            Ok(sample_grid(&gp, n, seed))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conjugate_posterior_halves_the_observation() {
        let task = TaskSpec::by_name("gaussian_linear").unwrap();
        let zero = analytic_gaussian_linear_posterior(&task, &[0.0; 10]).unwrap();
        assert!(zero.mean.iter().all(|m| m.abs() < 1e-15));
        assert!(zero.variance.iter().all(|v| (v - 0.05).abs() < 1e-15));
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.3 - 1.0).collect();
        let post = analytic_gaussian_linear_posterior(&task, &x).unwrap();
        for (m, xi) in post.mean.iter().zip(&x) {
            assert!((m - xi / 2.0).abs() < 1e-14);
        }
        assert!(analytic_gaussian_linear_posterior(&task, &[0.0; 9]).is_err());
        let ar1 = TaskSpec::by_name("ar1_ts_t50").unwrap();
        assert!(analytic_gaussian_linear_posterior(&ar1, &[0.0; 50]).is_err());
    }

    #[test]
    fn distractor_variant_shares_the_base_posterior() {
        let base = TaskSpec::by_name("gaussian_linear").unwrap();
        let wrapped = TaskSpec::by_name("gaussian_linear_distractors").unwrap();
        let batch = crate::tasks::simulate_batch(&wrapped, 1, 4).unwrap();
        let plain = crate::tasks::simulate(&base, &batch.theta, crate::rng::derive_seed(4, crate::rng::streams::SIMULATE)).unwrap();
        let a = analytic_gaussian_linear_posterior(&wrapped, batch.x.row(0)).unwrap();
        let b = analytic_gaussian_linear_posterior(&base, plain.row(0)).unwrap();
        assert_eq!(a, b);
    }
}
