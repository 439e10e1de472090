mod common;

use common::*;
use rand::Rng;
use sbi_forge::diagnostics::{c2st, C2stConfig};
use sbi_forge::matrix::mean_std;
use sbi_forge::reference::*;
use sbi_forge::rng::rng_from_seed;
use sbi_forge::tasks::{make_reference_observations, simulate, Clamps, TaskKind};
use sbi_forge::{Matrix, TaskSpec};

#[test]
fn ar1_matches_dense_covariance() {
    let err = ar1_dense_max_error(50, 1);
    assert!(err < 1e-8, "{err}");
}

#[test]
fn ou_with_zero_mean_is_an_ar1() {
    // rho = exp(-beta dt), innovation variance sigma^2 (1 - rho^2) / (2 beta),
    // and both start from their stationary laws.
    let clamps = Clamps::default();
    let mut rng = rng_from_seed(2);
    let x: Vec<f64> = (0..100).map(|t| (t as f64 * 0.21).sin() + 0.3 * rng.random::<f64>()).collect();
    for (beta, sigma) in [(0.5, 1.0), (3.0, 0.4), (0.05, 1.7)] {
        let rho = (-beta * sbi_forge::tasks::OU_DT).exp();
        let ar_sigma = sigma * ((1.0 - rho * rho) / (2.0 * beta)).sqrt();
        let ou = loglik_ou(&[0.0, beta, sigma], &x, &clamps).value;
        let ar = loglik_ar1(&[rho, ar_sigma.ln()], &x, &clamps);
        assert!((ou - ar).abs() < 1e-6, "beta {beta}: {ou} vs {ar}");
    }
}

#[test]
fn solar_transition_is_normalized() {
    let err = solar_integral_max_error(10, 3);
    assert!(err < 1e-6, "{err}");
}

#[test]
fn solar_density_matches_numerical_convolution() {
    let err = solar_convolution_max_error(20, 4);
    assert!(err < 1e-6, "{err}");
}

#[test]
fn grid_sampler_passes_chi_squared() {
    let (stat, crit) = grid_chi_squared(1_000_000, 5);
    assert!(stat < crit, "{stat} >= {crit}");
}

/// Profile likelihood maximizer of the stationary AR(1) by golden-section
/// search over rho, with sigma^2 at its closed-form optimum.
fn ar1_mle(x: &[f64]) -> (f64, f64) {
    let t = x.len() as f64;
    let s2 = |rho: f64| (x[0] * x[0] * (1.0 - rho * rho) + x.windows(2).map(|w| (w[1] - rho * w[0]).powi(2)).sum::<f64>()) / t;
    let profile = |rho: f64| -0.5 * t * s2(rho).ln() + 0.5 * (1.0 - rho * rho).ln();
    let (mut a, mut b) = (-0.999, 0.999);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let (c, d) = (b - g * (b - a), a + g * (b - a));
        if profile(c) > profile(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let rho = 0.5 * (a + b);
    (rho, 0.5 * s2(rho).ln())
}

#[test]
fn ar1_grid_argmax_is_near_the_mle() {
    let mut task = TaskSpec::new(TaskKind::Ar1);
    task.x_dim = 2000;
    let theta = Matrix::from_vec(1, 2, vec![0.5, 0.0]).unwrap();
    let x = simulate(&task, &theta, 6).unwrap();
    let spec = GridSpec::default_for(&task).unwrap();
    let gp = evaluate_grid(&task, x.row(0), &spec).unwrap();
    let best = gp.cell_center(gp.argmax());
    let (rho, log_sigma) = ar1_mle(x.row(0));
    for (d, want) in [rho, log_sigma].into_iter().enumerate() {
        let cells = (best[d] - want).abs() / spec.axes[d].width();
        assert!(cells <= 2.0, "axis {d}: {} vs {want}", best[d]);
    }
    assert!((rho - 0.5).abs() < 0.1);
}

#[test]
fn refined_grid_moves_the_mean_little() {
    let task = TaskSpec::new(TaskKind::Ar1);
    let obs = make_reference_observations(&task).unwrap();
    let coarse = evaluate_grid(&task, obs.x.row(0), &GridSpec::new(&task, &[201, 151]).unwrap()).unwrap();
    let fine = evaluate_grid(&task, obs.x.row(0), &GridSpec::default_for(&task).unwrap()).unwrap();
    for (a, b) in coarse.mean().iter().zip(fine.mean()) {
        assert!((a - b).abs() < 5e-3, "{a} vs {b}");
    }
}

#[test]
fn analytic_posterior_matches_a_fine_grid() {
    let task = TaskSpec::by_name("gaussian_linear").unwrap();
    let obs = make_reference_observations(&task).unwrap();
    let x0 = obs.x.get(3, 0);
    let analytic = analytic_gaussian_linear_posterior(&task, obs.x.row(3)).unwrap();
    assert!((analytic.mean[0] - x0 / 2.0).abs() < 1e-12);
    assert!((analytic.variance[0] - 0.05).abs() < 1e-12);
    // One-coordinate grid of prior times likelihood.
    let axis = GridAxis { low: -2.0, high: 2.0, resolution: 4000 };
    let log_post: Vec<f64> = (0..axis.resolution)
        .map(|i| {
            let t = axis.center(i);
            -0.5 * t * t / 0.1 - 0.5 * (x0 - t).powi(2) / 0.1
        })
        .collect();
    let gp = GridPosterior::new(log_post, GridSpec { task: task.name.clone(), axes: vec![axis] }, vec![x0]).unwrap();
    let grid = sample_grid_with(&gp, 1000, 7, true).samples;
    let exact = analytic.sample(1000, 8).samples.select_cols(&[0]);
    let acc = c2st(&exact, &grid, &C2stConfig::default()).unwrap();
    assert!(acc <= 0.55, "{acc}");
    let (m, s) = mean_std(&grid.column(0));
    assert!((m - x0 / 2.0).abs() < 0.03 && (s - 0.05f64.sqrt()).abs() < 0.02);
}

#[test]
fn reference_samples_follow_the_task() {
    let task = TaskSpec::new(TaskKind::Ar1);
    let obs = make_reference_observations(&task).unwrap();
    let a = reference_samples(&task, obs.x.row(0), 500, 9).unwrap();
    assert_eq!(a.source, SampleSource::Grid);
    assert_eq!(a.samples.rows(), 500);
    assert!(a.samples.row_iter().all(|r| task.prior.contains(r)));
    assert_eq!(a, reference_samples(&task, obs.x.row(0), 500, 9).unwrap());
    let gl = TaskSpec::by_name("gaussian_linear").unwrap();
    let obs = make_reference_observations(&gl).unwrap();
    assert_eq!(reference_samples(&gl, obs.x.row(0), 10, 1).unwrap().source, SampleSource::Analytic);
    assert_eq!(REFERENCE_SAMPLES, 10_000);
}

#[test]
fn distractor_columns_do_not_move_the_grid() {
    let base = TaskSpec::new(TaskKind::Ou);
    let wrapped = TaskSpec::by_name("ou_distractors").unwrap();
    let obs = make_reference_observations(&wrapped).unwrap();
    let base_obs = make_reference_observations(&base).unwrap();
    let spec = GridSpec::new(&base, &[20, 20, 20]).unwrap();
    let a = evaluate_grid(&wrapped, obs.x.row(2), &GridSpec { task: wrapped.name.clone(), ..spec.clone() }).unwrap();
    let b = evaluate_grid(&base, base_obs.x.row(2), &spec).unwrap();
    assert_eq!(a.log_post, b.log_post);
}
