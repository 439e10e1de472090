use super::model::FlowModel;
use crate::error::Result;
use crate::matrix::Matrix;

pub const GRAD_CHECK_STEP: f64 = 1e-4;

/// Smaller steps tried when a central difference crosses a piece boundary.
const FALLBACK_STEPS: [f64; 2] = [1e-5, 1e-6];

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub num_params: usize,
    /// Parameters whose analytic and numeric gradients are both exactly zero.
    pub exact_zeros: usize,
    /// Parameters whose central difference left the current ReLU or spline
    /// piece at every step tried; excluded from `max_rel_error`.
    pub kinked: usize,
    /// Parameters that needed a step below `GRAD_CHECK_STEP`.
    pub reduced_step: usize,
    pub analytic: Vec<f64>,
    /// `NaN` for kinked parameters.
    pub numeric: Vec<f64>,
}

/// Compares analytic gradients of the mean standardized NLL against central
/// differences over every parameter. A difference is used only when both
/// endpoints keep every ReLU unit and spline evaluation on the piece it
/// occupies at the base point. Relative errors use
/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn grad_check(model: &FlowModel, theta: &Matrix, context: &Matrix) -> Result<GradCheck> {
    let t = model.theta_standardizer.standardize(theta)?;
    let c = model.context_standardizer.standardize(context)?;
    let b = t.rows();
    let mut analytic = vec![0.0; model.num_params()];
    model.loss_and_grad(&model.params, t.as_slice(), c.as_slice(), b, &mut analytic, None);
    let mut p = model.params.clone();
    let eval = |p: &[f64]| model.nll_sum_and_pattern(p, t.as_slice(), c.as_slice(), b);
    let base = eval(&p).1;
    let mut numeric = Vec::with_capacity(p.len());
    let (mut kinked, mut reduced_step) = (0, 0);
    for i in 0..p.len() {
        let orig = p[i];
        let mut value = f64::NAN;
        for (s, h) in std::iter::once(GRAD_CHECK_STEP).chain(FALLBACK_STEPS).enumerate() {
            p[i] = orig + h;
            let (up, pu) = eval(&p);
            p[i] = orig - h;
            let (down, pd) = eval(&p);
            p[i] = orig;
            if pu == base && pd == base {
                value = (up - down) / (2.0 * h * b as f64);
                reduced_step += usize::from(s > 0);
                break;
            }
        }
        kinked += usize::from(value.is_nan());
        numeric.push(value);
    }
    let mut max_rel_error = 0.0f64;
    let mut exact_zeros = 0;
    for (a, n) in analytic.iter().zip(&numeric) {
        if n.is_nan() {
            continue;
        }
        if *a == 0.0 && *n == 0.0 {
            exact_zeros += 1;
            continue;
        }
        max_rel_error = max_rel_error.max((a - n).abs() / a.abs().max(n.abs()).max(1e-6));
    }
    Ok(GradCheck { max_rel_error, num_params: p.len(), exact_zeros, kinked, reduced_step, analytic, numeric })
}
