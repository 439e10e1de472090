//! Classifier two-sample tests.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::nn::{Mlp, ParamLayout};
use crate::flow::{optimize, Objective, Schedule, TrainConfig};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, rng_from_seed, streams};
use crate::summary::Standardizer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C2stConfig {
    pub folds: usize,
    /// Hidden width; `None` uses `max(10 d, 16)`.
    pub hidden_width: Option<usize>,
    pub max_epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Fraction of each training fold held out for early stopping.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for C2stConfig {
    fn default() -> Self {
        Self { folds: 5, hidden_width: None, max_epochs: 300, patience: 20, lr: 1e-3, batch_size: 200, holdout_fraction: 0.1, seed: 0 }
    }
}

impl C2stConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn width_for(&self, dim: usize) -> usize {
        self.hidden_width.unwrap_or((10 * dim).max(16))
    }
}

struct Bce<'a> {
    net: &'a Mlp,
    x: Matrix,
    y: Vec<f64>,
    holdout: (Matrix, Vec<f64>),
}

fn bce(z: f64, y: f64) -> f64 {
    z.max(0.0) - y * z + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl Objective for Bce<'_> {
    fn num_train(&self) -> usize {
        self.x.rows()
    }

    fn loss_and_grad(&self, params: &[f64], rows: &[usize], grad: &mut [f64]) -> f64 {
        let b = rows.len();
        let x = self.x.select_rows(rows);
        let trace = self.net.forward(params, x.into_vec(), b);
        let inv = 1.0 / b as f64;
        let mut loss = 0.0;
        let g: Vec<f64> = rows
            .iter()
            .zip(&trace.output)
            .map(|(&r, &z)| {
                loss += bce(z, self.y[r]);
                (sigmoid(z) - self.y[r]) * inv
            })
            .collect();
        self.net.backward(params, &trace, &g, grad, false);
        loss * inv
    }

    fn validation_loss(&self, params: &[f64]) -> Option<f64> {
        let (x, y) = &self.holdout;
        if y.is_empty() {
            return None;
        }
        let z = self.net.predict(params, x.as_slice(), x.rows());
        Some(z.iter().zip(y).map(|(z, y)| bce(*z, *y)).sum::<f64>() / y.len() as f64)
    }
}

/// Trains one classifier on `train` rows and returns test-fold accuracy.
fn fold_accuracy(x: &Matrix, y: &[f64], train: &[usize], test: &[usize], cfg: &C2stConfig, seed: u64) -> Result<f64> {
    let d = x.cols();
    let w = cfg.width_for(d);
    let mut layout = ParamLayout::default();
    let net = Mlp::new(&[d, w, w, 1], &mut layout);
    let mut params = vec![0.0; layout.len()];
    let mut rng = rng_from_seed(seed);
    net.init(&mut params, &mut rng, false);

    let mut train = train.to_vec();
    train.shuffle(&mut rng);
    let n_hold = ((train.len() as f64) * cfg.holdout_fraction).round() as usize;
    let (hold, fit) = train.split_at(n_hold);
    let gather_y = |idx: &[usize]| idx.iter().map(|&i| y[i]).collect::<Vec<_>>();
    let obj = Bce { net: &net, x: x.select_rows(fit), y: gather_y(fit), holdout: (x.select_rows(hold), gather_y(hold)) };
    let tc = TrainConfig {
        lr: cfg.lr,
        batch_size: cfg.batch_size.min(fit.len()),
        max_epochs: cfg.max_epochs,
        patience: cfg.patience,
        clip_norm: None,
        schedule: Schedule::Constant,
        seed,
        ..TrainConfig::default()
    };
    optimize(&obj, &mut params, &tc)?;
    let z = net.predict(&params, x.select_rows(test).as_slice(), test.len());
    let correct = z.iter().zip(test).filter(|(z, &i)| (**z > 0.0) == (y[i] > 0.5)).count();
    Ok(correct as f64 / test.len() as f64)
}

fn subsample(m: &Matrix, n: usize, seed: u64) -> Matrix {
    if m.rows() == n {
        return m.clone();
    }
    let mut rng = rng_from_seed(seed);
    let mut idx = rand::seq::index::sample(&mut rng, m.rows(), n).into_vec();
    idx.sort_unstable();
    m.select_rows(&idx)
}

/// Cross-validated accuracy of a classifier separating `p` from `q`.
/// 0.5 means indistinguishable.
pub fn c2st(p: &Matrix, q: &Matrix, cfg: &C2stConfig) -> Result<f64> {
    if p.cols() != q.cols() {
        return Err(Error::DimensionMismatch { expected: p.cols(), got: q.cols() });
    }
    if cfg.folds < 2 {
        return Err(Error::InvalidInput("c2st needs at least two folds".into()));
    }
    let n = p.rows().min(q.rows());
    if n < 2 * cfg.folds {
        return Err(Error::InsufficientSamples { needed: 2 * cfg.folds, got: n });
    }
    let base = derive_seed(cfg.seed, streams::C2ST);
    let p = subsample(p, n, derive_seed(base, 1));
    let q = subsample(q, n, derive_seed(base, 2));
    let pooled = Matrix::vcat(&[&p, &q])?;
    let x = Standardizer::fit(&pooled).standardize(&pooled)?;
    let y: Vec<f64> = (0..2 * n).map(|i| if i < n { 0.0 } else { 1.0 }).collect();

    // Stratified folds: each class is shuffled and dealt round-robin.
    let mut rng = rng_from_seed(derive_seed(base, 3));
    let mut fold_of = vec![0usize; 2 * n];
    for class in 0..2 {
        let mut idx: Vec<usize> = (class * n..(class + 1) * n).collect();
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            fold_of[i] = pos % cfg.folds;
        }
    }
    let accs: Vec<Result<f64>> = (0..cfg.folds)
        .into_par_iter()
        .map(|f| {
            let test: Vec<usize> = (0..2 * n).filter(|&i| fold_of[i] == f).collect();
            let train: Vec<usize> = (0..2 * n).filter(|&i| fold_of[i] != f).collect();
            fold_accuracy(&x, &y, &train, &test, cfg, derive_seed(base, 100 + f as u64))
        })
        .collect();
    let mut total = 0.0;
    for a in accs {
        total += a?;
    }
    Ok(total / cfg.folds as f64)
}

/// Mean of one-dimensional C2STs over coordinates.
pub fn c2st_marginal(p: &Matrix, q: &Matrix, cfg: &C2stConfig) -> Result<f64> {
    Ok(c2st_per_coordinate(p, q, cfg)?.iter().sum::<f64>() / p.cols() as f64)
}

pub fn c2st_per_coordinate(p: &Matrix, q: &Matrix, cfg: &C2stConfig) -> Result<Vec<f64>> {
    if p.cols() != q.cols() {
        return Err(Error::DimensionMismatch { expected: p.cols(), got: q.cols() });
    }
    (0..p.cols())
        .map(|j| c2st(&p.select_cols(&[j]), &q.select_cols(&[j]), &cfg.clone().with_seed(derive_seed(cfg.seed, j as u64))))
        .collect()
}

fn average_ranks(col: &[f64]) -> Vec<f64> {
    let n = col.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && col[idx[end]] == col[idx[start]] {
            end += 1;
        }
        // 1-based ranks start+1..=end share their average.
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn rank_columns(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    let scale = (m.rows() + 1) as f64;
    for j in 0..m.cols() {
        for (i, r) in average_ranks(&m.column(j)).into_iter().enumerate() {
            out.set(i, j, r / scale);
        }
    }
    out
}

/// Replaces each value by its average rank in the pooled coordinate divided
/// by `2n + 1`. One shared monotone map per coordinate, so one-dimensional
/// separability is unchanged.
pub fn rank_transform(p: &Matrix, q: &Matrix) -> Result<(Matrix, Matrix)> {
    if p.cols() != q.cols() {
        return Err(Error::DimensionMismatch { expected: p.cols(), got: q.cols() });
    }
    let out = rank_columns(&Matrix::vcat(&[p, q])?);
    let total = out.rows();
    Ok((out.select_rows(&(0..p.rows()).collect::<Vec<_>>()), out.select_rows(&(p.rows()..total).collect::<Vec<_>>())))
}

/// Ranks each set against its own empirical CDF. Both outputs have uniform
/// marginals, leaving only the dependence structure to compare.
pub fn rank_transform_per_set(p: &Matrix, q: &Matrix) -> Result<(Matrix, Matrix)> {
    if p.cols() != q.cols() {
        return Err(Error::DimensionMismatch { expected: p.cols(), got: q.cols() });
    }
    Ok((rank_columns(p), rank_columns(q)))
}

/// Joint C2ST after the pooled rank transform.
pub fn c2st_rank(p: &Matrix, q: &Matrix, cfg: &C2stConfig) -> Result<f64> {
    let n = p.rows().min(q.rows());
    let base = derive_seed(cfg.seed, streams::C2ST);
    let (p, q) = (subsample(p, n, derive_seed(base, 1)), subsample(q, n, derive_seed(base, 2)));
    let (pr, qr) = rank_transform(&p, &q)?;
    c2st(&pr, &qr, cfg)
}
