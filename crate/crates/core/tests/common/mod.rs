//! Oracle measurements shared by the integration tests and the acceptance
//! binary. Each function returns the measured quantity; callers decide the
//! tolerance.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use sbi_forge::diagnostics::*;
use sbi_forge::flow::spline::{rq_forward, rq_inverse};
use sbi_forge::flow::{grad_check, FlowConfig, FlowModel, GradCheck, SplineShape};
use sbi_forge::reference::*;
use sbi_forge::rng::rng_from_seed;
use sbi_forge::summary::{EmbeddingSet, EmbeddingSource, Standardizer};
use sbi_forge::tasks::{Clamps, TaskKind};
use sbi_forge::{Matrix, TaskSpec};
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn gaussian(n: usize, d: usize, shift: &[f64], seed: u64) -> Matrix {
    let mut rng = rng_from_seed(seed);
    Matrix::from_fn(n, d, |_, j| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z + shift.get(j).copied().unwrap_or(0.0)
    })
}

pub fn halves(m: &Matrix) -> (Matrix, Matrix) {
    let n = m.rows() / 2;
    (m.select_rows(&(0..n).collect::<Vec<_>>()), m.select_rows(&(n..2 * n).collect::<Vec<_>>()))
}

// ---- reference posteriors ----

/// Multivariate-normal log density with the stationary AR(1) covariance
/// `sigma^2 rho^|i-j| / (1 - rho^2)`.
pub fn ar1_dense_loglik(rho: f64, sigma: f64, x: &[f64]) -> f64 {
    let t = x.len();
    let cov = DMatrix::from_fn(t, t, |i, j| sigma * sigma * rho.powi((i as i32 - j as i32).abs()) / (1.0 - rho * rho));
    let chol = cov.cholesky().expect("AR(1) covariance is positive definite");
    let v = DVector::from_column_slice(x);
    let quad = v.dot(&chol.solve(&v));
    let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    -0.5 * (quad + logdet + t as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// Largest absolute error of the AR(1) likelihood against the dense
/// covariance form over `cases` random length-5 series.
pub fn ar1_dense_max_error(cases: usize, seed: u64) -> f64 {
    let mut rng = rng_from_seed(seed);
    let clamps = Clamps::default();
    (0..cases)
        .map(|_| {
            let rho = rng.random_range(-0.95..0.95);
            let log_sigma = rng.random_range(0.05f64.ln()..2f64.ln());
            let x: Vec<f64> = (0..5).map(|_| 2.0 * rng.random::<f64>() - 1.0).map(|u| 3.0 * u).collect();
            (loglik_ar1(&[rho, log_sigma], &x, &clamps) - ar1_dense_loglik(rho, log_sigma.exp(), &x)).abs()
        })
        .fold(0.0, f64::max)
}

fn solar_case(rng: &mut impl Rng) -> ([f64; 3], f64) {
    let theta = [rng.random_range(0.9..1.4), rng.random_range(0.05..0.25), rng.random_range(0.02..0.15)];
    (theta, rng.random_range(0.3..1.6))
}

/// Largest `|integral - 1|` of the solar transition density over `cases`
/// random parameters and previous states, by trapezoid quadrature.
pub fn solar_integral_max_error(cases: usize, seed: u64) -> f64 {
    let mut rng = rng_from_seed(seed);
    let clamps = Clamps::default();
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let (theta, prev) = solar_case(&mut rng);
        let c = sbi_forge::tasks::solar_growth(prev) * prev;
        let lo = theta[0] * c - 0.01;
        let hi = (theta[0] + theta[1]) * c + theta[2] + 0.01;
        let n = 400_000;
        let h = (hi - lo) / n as f64;
        let f = |p: f64| solar_transition_logpdf(&theta, prev, p, &clamps).exp();
        let mut s = 0.5 * (f(lo) + f(hi));
        for i in 1..n {
            s += f(lo + i as f64 * h);
        }
        worst = worst.max((s * h - 1.0).abs());
    }
    worst
}

/// Largest error of the closed-form uniform-sum density against a numerical
/// convolution: the CDF of `A + E` is integrated by the midpoint rule and
/// differentiated by central differences. Probe points closer than 1e-3 to
/// a kink are skipped.
pub fn solar_convolution_max_error(probes: usize, seed: u64) -> f64 {
    let mut rng = rng_from_seed(seed);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < probes {
        let (lo, wa, we): (f64, f64, f64) = (rng.random_range(0.0..1.0), rng.random_range(0.01..0.4), rng.random_range(0.02..0.15));
        let y: f64 = rng.random_range(lo - 0.05..lo + wa + we + 0.05);
        let kinks = [lo, lo + wa.min(we), lo + wa.max(we), lo + wa + we];
        if kinks.iter().any(|k| (y - k).abs() < 1e-3) {
            continue;
        }
        let f_a = |a: f64| ((a - lo) / wa).clamp(0.0, 1.0);
        let cdf = |t: f64| {
            let n = 200_000;
            let h = we / n as f64;
            (0..n).map(|i| f_a(t - (i as f64 + 0.5) * h)).sum::<f64>() * h / we
        };
        let delta = 1e-4;
        let numeric = (cdf(y + delta) - cdf(y - delta)) / (2.0 * delta);
        worst = worst.max((uniform_sum_density(y, lo, wa, we) - numeric).abs());
        done += 1;
    }
    worst
}

/// Chi-squared statistic of `n` grid-sampler draws on a uniform 10 x 10
/// grid, with the 0.99 quantile of chi-squared(99).
pub fn grid_chi_squared(n: usize, seed: u64) -> (f64, f64) {
    let task = TaskSpec::new(TaskKind::Ar1);
    let spec = GridSpec::new(&task, &[10, 10]).unwrap();
    let gp = GridPosterior::new(vec![0.0; 100], spec.clone(), vec![]).unwrap();
    let draws = sample_grid(&gp, n, seed);
    let mut counts = [0usize; 100];
    for r in draws.samples.row_iter() {
        let cell = |d: usize| ((r[d] - spec.axes[d].low) / spec.axes[d].width()).floor() as usize;
        counts[cell(0) * 10 + cell(1)] += 1;
    }
    let e = n as f64 / 100.0;
    let stat = counts.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
    (stat, ChiSquared::new(99.0).unwrap().inverse_cdf(0.99))
}

// ---- flow ----

pub fn random_raw(shape: &SplineShape, rng: &mut impl Rng, scale: f64) -> Vec<f64> {
    (0..shape.params_per_dim()).map(|_| { let z: f64 = StandardNormal.sample(rng); scale * z }).collect::<Vec<f64>>()
}

/// Largest `|inverse(forward(u)) - u|` over `n` points in `[-B, B]`, each
/// with its own spline of unit-scale raw parameters.
pub fn spline_round_trip_max_error(n: usize, seed: u64) -> f64 {
    spline_round_trip(n, seed, 1.0).0
}

/// Round trip at raw-parameter scale `scale`: the largest error, and the
/// largest error relative to the conditioning limit `eps * |y| / slope`.
pub fn spline_round_trip(n: usize, seed: u64, scale: f64) -> (f64, f64) {
    let shape = SplineShape::default();
    let mut rng = rng_from_seed(seed);
    let b = shape.tail_bound;
    (0..n)
        .map(|_| {
            let raw = random_raw(&shape, &mut rng, scale);
            let u = rng.random_range(-b..b);
            let (y, logdet) = rq_forward(&shape, &raw, u);
            let err = (rq_inverse(&shape, &raw, y).0 - u).abs();
            let limit = f64::EPSILON * y.abs().max(1.0) / logdet.exp();
            (err, err / limit)
        })
        .fold((0.0, 0.0), |a, e| (a.0.max(e.0), a.1.max(e.1)))
}

/// Largest gap between the analytic log-derivative and the log of a
/// central-difference slope.
pub fn spline_logdet_max_error(n: usize, seed: u64) -> f64 {
    let shape = SplineShape::default();
    let mut rng = rng_from_seed(seed);
    let h = 1e-6;
    (0..n)
        .map(|_| {
            let raw = random_raw(&shape, &mut rng, 1.0);
            let u = rng.random_range(-4.9..4.9);
            let slope = (rq_forward(&shape, &raw, u + h).0 - rq_forward(&shape, &raw, u - h).0) / (2.0 * h);
            (rq_forward(&shape, &raw, u).1 - slope.ln()).abs()
        })
        .fold(0.0, f64::max)
}

/// A small 2-D flow; with `randomize` every parameter is redrawn so the
/// conditioners' output layers are non-zero.
pub fn toy_flow(context_dim: usize, randomize: bool, seed: u64) -> FlowModel {
    let cfg = FlowConfig { hidden_widths: vec![16, 16], ..FlowConfig::for_dims(2, context_dim) };
    let mut m = FlowModel::new(cfg, Standardizer::identity(2), Standardizer::identity(context_dim), seed).unwrap();
    if randomize {
        let mut rng = rng_from_seed(seed + 1);
        m.params.iter_mut().for_each(|p| *p = rng.random_range(-0.3..0.3));
    }
    m
}

pub fn flow_grad_check(randomize: bool, seed: u64) -> GradCheck {
    let m = toy_flow(2, randomize, seed);
    let theta = gaussian(16, 2, &[], seed + 2);
    let ctx = gaussian(16, 2, &[], seed + 3);
    grad_check(&m, &theta, &ctx).unwrap()
}

/// Midpoint quadrature of a random 2-D flow density over `[-L, L]^2` at a
/// fixed context.
pub fn flow_density_mass(seed: u64) -> f64 {
    let m = toy_flow(1, true, seed);
    let (l, n) = (9.0, 900);
    let h = 2.0 * l / n as f64;
    let mut total = 0.0;
    for i in 0..n {
        let a = -l + (i as f64 + 0.5) * h;
        let theta = Matrix::from_fn(n, 2, |j, d| if d == 0 { a } else { -l + (j as f64 + 0.5) * h });
        total += m.log_prob_at(&theta, &[0.7]).unwrap().iter().map(|v| v.exp()).sum::<f64>();
    }
    total * h * h
}

// ---- C2ST ----

pub fn c2st_null(seed: u64) -> f64 {
    let (p, q) = halves(&gaussian(2000, 5, &[], seed));
    c2st(&p, &q, &C2stConfig::default()).unwrap()
}

/// N(0,1) vs N(1,1) at n = 2000 per set.
pub fn c2st_unit_shift(seed: u64) -> f64 {
    c2st(&gaussian(2000, 1, &[0.0], seed), &gaussian(2000, 1, &[1.0], seed + 1), &C2stConfig::default()).unwrap()
}

/// Rank-space C2ST of N(0,1) vs N(5,1): pooled ECDF and per-set ECDF.
pub fn c2st_rank_shifted(seed: u64) -> (f64, f64) {
    let p = gaussian(1000, 1, &[0.0], seed);
    let q = gaussian(1000, 1, &[5.0], seed + 1);
    let cfg = C2stConfig::default();
    let (ps, qs) = rank_transform_per_set(&p, &q).unwrap();
    (c2st_rank(&p, &q, &cfg).unwrap(), c2st(&ps, &qs, &cfg).unwrap())
}

// ---- probes ----

/// Chunk `d` carries `theta_d` plus noise in its first column; with
/// `identical` every chunk carries `theta_0`.
pub fn chunked_embeddings(theta: &Matrix, noise: f64, identical: bool, seed: u64) -> EmbeddingSet {
    let mut rng = rng_from_seed(seed);
    let nd = Normal::new(0.0, noise).unwrap();
    let chunks = (0..theta.cols())
        .map(|c| {
            let src = if identical { 0 } else { c };
            Matrix::from_fn(theta.rows(), 4, |i, k| if k == 0 { theta.get(i, src) } else { 0.0 } + nd.sample(&mut rng))
        })
        .collect();
    EmbeddingSet::new(chunks, -1, EmbeddingSource::Surrogate, String::new()).unwrap()
}

/// Smallest `matched - off_mean` of the synthetic diagonal construction.
pub fn cross_theta_min_delta(seed: u64) -> f64 {
    let theta = gaussian(1000, 3, &[], seed);
    let emb = chunked_embeddings(&theta, 0.3, false, seed + 1);
    let r = cross_theta_probe(&emb, &theta, &(0..800).collect::<Vec<_>>(), &(800..1000).collect::<Vec<_>>()).unwrap();
    r.delta().into_iter().fold(f64::INFINITY, f64::min)
}

/// Pinball ratio of a probe whose summary is the posterior location of
/// `theta | s ~ N(s, 0.5^2)`.
pub fn oracle_quantile_probe(seed: u64) -> QuantileProbeResult {
    let n = 5000;
    let mut rng = rng_from_seed(seed);
    let s = Matrix::from_fn(n, 1, |_, _| rng.random_range(-2.0..2.0));
    let post = Normal::new(0.0, 0.5).unwrap();
    let theta = Matrix::from_fn(n, 1, |i, _| s.get(i, 0) + post.sample(&mut rng));
    let ref_s = Matrix::from_fn(10, 1, |i, _| -1.8 + 0.4 * i as f64);
    let refs: Vec<Matrix> = (0..10).map(|k| Matrix::from_fn(1000, 1, |_, _| ref_s.get(k, 0) + post.sample(&mut rng))).collect();
    quantile_probe(&s, &theta, &ref_s, &refs, &QuantileProbeConfig::default()).unwrap()
}
