use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SimulationBatch;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub std: f64,
}

/// Nuisance coordinates appended to every observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistractorConfig {
    pub count: usize,
    pub mixture: Vec<MixtureComponent>,
    pub permutation_seed: u64,
}

impl Default for DistractorConfig {
    fn default() -> Self {
        Self {
            count: 50,
            mixture: vec![
                MixtureComponent { weight: 0.5, mean: -1.0, std: 1.0 },
                MixtureComponent { weight: 0.5, mean: 1.0, std: 1.0 },
            ],
            permutation_seed: 7,
        }
    }
}

impl DistractorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count > 0 && self.mixture.is_empty() {
            return Err(Error::InvalidInput("distractor mixture is empty".into()));
        }
        if self.mixture.iter().any(|c| !(c.weight > 0.0) || !(c.std > 0.0) || !c.mean.is_finite()) {
            return Err(Error::InvalidInput("mixture weights and stds must be positive".into()));
        }
        let total: f64 = self.mixture.iter().map(|c| c.weight).sum();
        if !self.mixture.is_empty() && (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(())
    }

    /// Column permutation applied after appending: output column `j` is
    /// input column `perm[j]`.
    pub fn permutation(&self, total_dim: usize) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..total_dim).collect();
        perm.shuffle(&mut rng_from_seed(self.permutation_seed));
        perm
    }
}

/// Append `cfg.count` iid mixture coordinates to each observation and
/// permute the columns with the fixed permutation of `cfg.permutation_seed`.
pub fn apply_distractors(batch: &SimulationBatch, cfg: &DistractorConfig, seed: u64) -> Result<SimulationBatch> {
    cfg.validate()?;
    let (n, base) = (batch.x.rows(), batch.x.cols());
    let total = base + cfg.count;
    let perm = cfg.permutation(total);
    let mut x = Matrix::zeros(n, total);
    let mut scratch = vec![0.0; total];
    for i in 0..n {
        let mut rng = rng_from_seed(derive_seed(seed, i as u64));
        scratch[..base].copy_from_slice(batch.x.row(i));
        for v in &mut scratch[base..] {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let comp = cfg
                .mixture
                .iter()
                .find(|c| {
                    acc += c.weight;
                    u < acc
                })
                .unwrap_or(cfg.mixture.last().expect("validated nonempty"));
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = comp.mean + comp.std * z;
        }
        for (o, &p) in x.row_mut(i).iter_mut().zip(&perm) {
            *o = scratch[p];
        }
    }
    Ok(SimulationBatch { theta: batch.theta.clone(), x, seed: batch.seed })
}
