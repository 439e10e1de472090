//! Exact log-likelihoods of the custom time-series tasks.

use std::f64::consts::PI;

use crate::tasks::{ou_transition, solar_growth, Clamps, OU_DT};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[inline]
fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (x - mean).powi(2) / var - 0.5 * var.ln() - HALF_LN_2PI
}

/// AR(1) log-likelihood at `theta = (rho, log sigma)`.
pub fn loglik_ar1(theta: &[f64], x: &[f64], clamps: &Clamps) -> f64 {
    let (rho, log_sigma) = (theta[0], theta[1]);
    let var = (2.0 * log_sigma).exp();
    let Some((&first, _)) = x.split_first() else {
        return 0.0;
    };
    let mut ll = normal_logpdf(first, 0.0, var / (1.0 - rho * rho).max(clamps.ar1_var_floor));
    // Transition terms share the variance; accumulate squared residuals.
    let mut ss = 0.0;
    for w in x.windows(2) {
        ss += (w[1] - rho * w[0]).powi(2);
    }
    let m = (x.len() - 1) as f64;
    ll += -0.5 * ss / var - m * (log_sigma + HALF_LN_2PI);
    ll
}

/// OU log-likelihood with the degenerate-noise flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuLogLik {
    pub value: f64,
    /// `sigma == 0`: the density is a point mass and the value is `-inf`.
    pub degenerate: bool,
}

/// OU log-likelihood at `theta = (alpha, beta, sigma)` with `dt = 0.1`.
pub fn loglik_ou(theta: &[f64], x: &[f64], clamps: &Clamps) -> OuLogLik {
    let (alpha, beta, sigma) = (theta[0], theta[1], theta[2]);
    if sigma <= 0.0 {
        return OuLogLik { value: f64::NEG_INFINITY, degenerate: true };
    }
    let beta_eff = beta.max(clamps.ou_beta_floor);
    let Some((&first, _)) = x.split_first() else {
        return OuLogLik { value: 0.0, degenerate: false };
    };
    let mut ll = normal_logpdf(first, alpha, sigma * sigma / (2.0 * beta_eff));
    let (_, var) = ou_transition(alpha, beta, sigma, 0.0, OU_DT, clamps.ou_beta_floor);
    let decay = (-beta_eff * OU_DT).exp();
    let mut ss = 0.0;
    for w in x.windows(2) {
        let mean = alpha + (w[0] - alpha) * decay;
        ss += (w[1] - mean).powi(2);
    }
    let m = (x.len() - 1) as f64;
    ll += -0.5 * ss / var - 0.5 * m * (2.0 * PI * var).ln();
    OuLogLik { value: ll, degenerate: false }
}

/// Density of `A + E` with `A ~ U(lo, lo + width_a)` and `E ~ U(0, width_e)`:
/// the overlap length of `[0, width_a]` and `[z - width_e, z]` over the
/// product of the widths, where `z = y - lo`.
#[inline]
pub fn uniform_sum_density(y: f64, lo: f64, width_a: f64, width_e: f64) -> f64 {
    let z = y - lo;
    let overlap = z.min(width_a) - (z - width_e).max(0.0);
    if overlap <= 0.0 {
        0.0
    } else {
        overlap / (width_a * width_e)
    }
}

/// Log density of one solar-dynamo transition `p_prev -> p`.
#[inline]
pub fn solar_transition_logpdf(theta: &[f64], p_prev: f64, p: f64, clamps: &Clamps) -> f64 {
    let (a_min, a_range, eps_max) = (theta[0], theta[1], theta[2]);
    let c = solar_growth(p_prev) * p_prev;
    let density = if c < clamps.solar_growth_floor {
        if (0.0..=eps_max).contains(&p) {
            1.0 / eps_max
        } else {
            0.0
        }
    } else {
        uniform_sum_density(p, a_min * c, a_range * c, eps_max)
    };
    density.ln()
}

/// Solar-dynamo log-likelihood of `x = (p_1, ..., p_T)` given `p_0 = 1`.
pub fn loglik_solar(theta: &[f64], x: &[f64], clamps: &Clamps) -> f64 {
    let mut prev = 1.0;
    let mut ll = 0.0;
    for &p in x {
        ll += solar_transition_logpdf(theta, prev, p, clamps);
        if ll == f64::NEG_INFINITY {
            return ll;
        }
        prev = p;
    }
    ll
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ar1_zero_series() {
        let ll = loglik_ar1(&[0.0, 0.0], &[0.0; 50], &Clamps::default());
        assert!((ll - 50.0 * (1.0 / (2.0 * PI).sqrt()).ln()).abs() < 1e-10);
        assert!((ll + 45.9469).abs() < 1e-4);
    }

    #[test]
    fn ar1_white_noise_is_iid() {
        let x: Vec<f64> = (0..50).map(|t| ((t * 7919) % 13) as f64 / 5.0 - 1.0).collect();
        let ls: f64 = 0.3;
        let want: f64 = x.iter().map(|v| normal_logpdf(*v, 0.0, (2.0 * ls).exp())).sum();
        assert!((loglik_ar1(&[0.0, ls], &x, &Clamps::default()) - want).abs() < 1e-10);
    }

    #[test]
    fn ar1_sign_flip_symmetry() {
        let x: Vec<f64> = (0..50).map(|t| (t as f64 * 0.37).sin() * 2.0).collect();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        for th in [[0.5, -0.2], [-0.9, 0.6], [0.949, -2.9]] {
            let c = Clamps::default();
            assert_eq!(loglik_ar1(&th, &x, &c), loglik_ar1(&th, &neg, &c));
        }
    }

    #[test]
    fn ou_flat_series_at_mean() {
        let c = Clamps::default();
        let x = vec![3.0; 100];
        let th = [3.0, 1.5, 0.4];
        let (_, var) = ou_transition(3.0, 1.5, 0.4, 3.0, OU_DT, c.ou_beta_floor);
        let want = normal_logpdf(3.0, 3.0, 0.16 / 3.0) + 99.0 * normal_logpdf(0.0, 0.0, var);
        assert!((loglik_ou(&th, &x, &c).value - want).abs() < 1e-9);
    }

    #[test]
    fn ou_zero_sigma_is_degenerate() {
        let r = loglik_ou(&[1.0, 1.0, 0.0], &[1.0; 100], &Clamps::default());
        assert!(r.degenerate);
        assert_eq!(r.value, f64::NEG_INFINITY);
        assert!(loglik_ou(&[1.0, 0.0, 0.1], &[1.0; 100], &Clamps::default()).value.is_finite());
    }

    #[test]
    fn solar_wide_noise_plateau() {
        // growth width ~ 0.001 * c, noise width 0.15: plateau height 1/0.15
        let th = [1.0, 1e-3, 0.15];
        let c = solar_growth(1.0);
        let d = solar_transition_logpdf(&th, 1.0, 1.0 * c + 0.07, &Clamps::default()).exp();
        assert!((d - 1.0 / 0.15).abs() < 1e-9);
        let outside = solar_transition_logpdf(&th, 1.0, c - 0.01, &Clamps::default());
        assert_eq!(outside, f64::NEG_INFINITY);
    }
}
