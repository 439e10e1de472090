use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Clamps, TaskKind, TaskSpec, GAUSSIAN_LINEAR_VAR, OU_DT};
use crate::rng::SbiRng;

/// Mean and variance of the exact OU transition over one step `dt`, with the
/// rate floored at `beta_floor`.
pub fn ou_transition(alpha: f64, beta: f64, sigma: f64, x_prev: f64, dt: f64, beta_floor: f64) -> (f64, f64) {
    let beta = beta.max(beta_floor);
    let decay = (-beta * dt).exp();
    let var = sigma * sigma * -(-2.0 * beta * dt).exp_m1() / (2.0 * beta);
    (alpha + (x_prev - alpha) * decay, var)
}

/// Growth nonlinearity `f(p)` of the solar-dynamo map.
pub fn solar_growth(p: f64) -> f64 {
    0.5 * (1.0 + libm::erf((p - 0.6) / 0.2)) * (1.0 - libm::erf((p - 1.0) / 0.8))
}

pub(super) fn simulate_row(task: &TaskSpec, theta: &[f64], rng: &mut SbiRng, out: &mut [f64]) {
    match task.kind {
        TaskKind::Ar1 => ar1(theta, &task.clamps, rng, out),
        TaskKind::Ou => ou(theta, &task.clamps, rng, out),
        TaskKind::SolarDynamo => solar(theta, rng, out),
        TaskKind::GaussianLinear => {
            let s = GAUSSIAN_LINEAR_VAR.sqrt();
            for (o, t) in out.iter_mut().zip(theta) {
                let z: f64 = StandardNormal.sample(rng);
                *o = t + s * z;
            }
        }
    }
}

fn ar1(theta: &[f64], clamps: &Clamps, rng: &mut SbiRng, out: &mut [f64]) {
    let (rho, sigma) = (theta[0], theta[1].exp());
    let var0 = sigma * sigma / (1.0 - rho * rho).max(clamps.ar1_var_floor);
    let z: f64 = StandardNormal.sample(rng);
    let mut x = var0.sqrt() * z;
    out[0] = x;
    for o in out.iter_mut().skip(1) {
        let e: f64 = StandardNormal.sample(rng);
        x = rho * x + sigma * e;
        *o = x;
    }
}

fn ou(theta: &[f64], clamps: &Clamps, rng: &mut SbiRng, out: &mut [f64]) {
    let (alpha, beta, sigma) = (theta[0], theta[1], theta[2]);
    let beta_eff = beta.max(clamps.ou_beta_floor);
    let z: f64 = StandardNormal.sample(rng);
    let mut x = alpha + (sigma * sigma / (2.0 * beta_eff)).sqrt() * z;
    out[0] = x;
    for o in out.iter_mut().skip(1) {
        let (mean, var) = ou_transition(alpha, beta, sigma, x, OU_DT, clamps.ou_beta_floor);
        let e: f64 = StandardNormal.sample(rng);
        x = mean + var.sqrt() * e;
        *o = x;
    }
}

fn solar(theta: &[f64], rng: &mut SbiRng, out: &mut [f64]) {
    let (a_min, a_range, eps_max) = (theta[0], theta[1], theta[2]);
    let mut p = 1.0;
    for o in out.iter_mut() {
        let a = a_min + a_range * rng.random::<f64>();
        let eps = eps_max * rng.random::<f64>();
        p = a * solar_growth(p) * p + eps;
        *o = p;
    }
}
