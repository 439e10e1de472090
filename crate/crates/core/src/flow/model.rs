//! Coupling stack, densities, sampling and checkpoints.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::nn::{Mlp, MlpTrace, ParamLayout};
use super::spline::{rq_backward, rq_forward, rq_inverse, rq_piece, SplineShape, MAX_BINS};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, rng_from_seed, streams};
use crate::summary::container::{Container, ContainerMeta, Tensor};
use crate::summary::Standardizer;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Rows processed per chunk when evaluating without gradients.
const EVAL_CHUNK: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub theta_dim: usize,
    pub context_dim: usize,
    pub num_transforms: usize,
    pub hidden_widths: Vec<usize>,
    pub spline: SplineShape,
}

impl FlowConfig {
    /// Five transforms with `[128, 128]` conditioners up to five parameters,
    /// eight transforms with `[256, 256]` beyond.
    pub fn for_dims(theta_dim: usize, context_dim: usize) -> Self {
        let (num_transforms, hidden_widths) = if theta_dim <= 5 { (5, vec![128, 128]) } else { (8, vec![256, 256]) };
        Self { theta_dim, context_dim, num_transforms, hidden_widths, spline: SplineShape::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.spline;
        if self.theta_dim == 0 {
            return Err(Error::InvalidInput("flow needs at least one parameter".into()));
        }
        if s.bins < 2 || s.bins > MAX_BINS {
            return Err(Error::InvalidInput(format!("bins must lie in [2, {MAX_BINS}], got {}", s.bins)));
        }
        if !(s.tail_bound > 0.0) {
            return Err(Error::InvalidInput("tail bound must be positive".into()));
        }
        if s.min_bin_width * s.bins as f64 >= 1.0 || s.min_bin_height * s.bins as f64 >= 1.0 || s.min_derivative <= 0.0 {
            return Err(Error::InvalidInput("spline minimums leave no free mass".into()));
        }
        if self.num_transforms == 0 || self.hidden_widths.contains(&0) {
            return Err(Error::InvalidInput("transforms and widths must be positive".into()));
        }
        Ok(())
    }
}

/// One affine-free coupling layer: `identity` coordinates condition the
/// spline applied to each `transformed` coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub identity: Vec<usize>,
    pub transformed: Vec<usize>,
    pub conditioner: Mlp,
}

/// Coordinate order at each layer: identity first, reversed every other layer.
pub fn layer_orders(dim: usize, layers: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..dim).collect();
    (0..layers)
        .map(|_| {
            let cur = order.clone();
            order.reverse();
            cur
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FlowModel {
    pub config: FlowConfig,
    pub params: Vec<f64>,
    pub couplings: Vec<Coupling>,
    pub theta_standardizer: Standardizer,
    pub context_standardizer: Standardizer,
}

pub(crate) struct ForwardTrace {
    z: Vec<f64>,
    logdet: Vec<f64>,
    layers: Vec<(MlpTrace, Vec<f64>)>,
    batch: usize,
}

impl FlowModel {
    /// Identity-initialized flow: conditioner output layers are zero.
    pub fn new(config: FlowConfig, theta_standardizer: Standardizer, context_standardizer: Standardizer, seed: u64) -> Result<Self> {
        config.validate()?;
        if theta_standardizer.dim() != config.theta_dim {
            return Err(Error::DimensionMismatch { expected: config.theta_dim, got: theta_standardizer.dim() });
        }
        if context_standardizer.dim() != config.context_dim {
            return Err(Error::DimensionMismatch { expected: config.context_dim, got: context_standardizer.dim() });
        }
        let (couplings, n_params) = Self::build(&config);
        let mut params = vec![0.0; n_params];
        let mut rng = rng_from_seed(derive_seed(seed, streams::FLOW_INIT));
        for c in &couplings {
            c.conditioner.init(&mut params, &mut rng, true);
        }
        Ok(Self { config, params, couplings, theta_standardizer, context_standardizer })
    }

    /// Fits both standardizers on the training pairs.
    pub fn for_data(config: FlowConfig, theta: &Matrix, context: &Matrix, seed: u64) -> Result<Self> {
        Self::new(config, Standardizer::fit(theta), Standardizer::fit(context), seed)
    }

    fn build(config: &FlowConfig) -> (Vec<Coupling>, usize) {
        let d = config.theta_dim;
        let h = d / 2;
        let p = config.spline.params_per_dim();
        let mut layout = ParamLayout::default();
        let couplings = layer_orders(d, config.num_transforms)
            .into_iter()
            .map(|order| {
                let identity = order[..h].to_vec();
                let transformed = order[h..].to_vec();
                let mut sizes = vec![h + config.context_dim];
                sizes.extend(&config.hidden_widths);
                sizes.push(transformed.len() * p);
                let conditioner = Mlp::new(&sizes, &mut layout);
                Coupling { identity, transformed, conditioner }
            })
            .collect();
        (couplings, layout.len())
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn theta_dim(&self) -> usize {
        self.config.theta_dim
    }

    pub fn context_dim(&self) -> usize {
        self.config.context_dim
    }

    fn conditioner_input(c: &Coupling, z: &[f64], ctx: &[f64], d: usize, cd: usize, batch: usize) -> Vec<f64> {
        let width = c.identity.len() + cd;
        let mut input = Vec::with_capacity(batch * width);
        for r in 0..batch {
            let row = &z[r * d..(r + 1) * d];
            input.extend(c.identity.iter().map(|&i| row[i]));
            input.extend_from_slice(&ctx[r * cd..(r + 1) * cd]);
        }
        input
    }

    /// Standardized `theta -> z` with per-row log-determinants. `params`
    /// may differ from `self.params` during training.
    pub(crate) fn forward_with(&self, params: &[f64], theta_std: &[f64], ctx_std: &[f64], batch: usize, keep: bool) -> ForwardTrace {
        let d = self.config.theta_dim;
        let cd = self.config.context_dim;
        let shape = &self.config.spline;
        let p = shape.params_per_dim();
        let mut z = theta_std.to_vec();
        let mut logdet = vec![0.0; batch];
        let mut layers = Vec::new();
        for c in &self.couplings {
            let input = Self::conditioner_input(c, &z, ctx_std, d, cd, batch);
            let trace = c.conditioner.forward(params, input, batch);
            let ntr = c.transformed.len();
            let mut saved = Vec::with_capacity(if keep { batch * ntr } else { 0 });
            for r in 0..batch {
                for (t, &dim) in c.transformed.iter().enumerate() {
                    let raw = &trace.output[(r * ntr + t) * p..(r * ntr + t + 1) * p];
                    let x = z[r * d + dim];
                    if keep {
                        saved.push(x);
                    }
                    let (y, l) = rq_forward(shape, raw, x);
                    z[r * d + dim] = y;
                    logdet[r] += l;
                }
            }
            if keep {
                layers.push((trace, saved));
            }
        }
        ForwardTrace { z, logdet, layers, batch }
    }

    /// Mean negative log density in standardized units and its gradients.
    /// Parameter gradients are added to `grads`; context gradients, if
    /// requested, are written to `ctx_grad` (`batch x context_dim`).
    pub(crate) fn loss_and_grad(
        &self,
        params: &[f64],
        theta_std: &[f64],
        ctx_std: &[f64],
        batch: usize,
        grads: &mut [f64],
        mut ctx_grad: Option<&mut [f64]>,
    ) -> f64 {
        let d = self.config.theta_dim;
        let cd = self.config.context_dim;
        let shape = &self.config.spline;
        let p = shape.params_per_dim();
        let trace = self.forward_with(params, theta_std, ctx_std, batch, true);
        let inv_b = 1.0 / batch as f64;
        let mut loss = 0.0;
        for r in 0..batch {
            let zr = &trace.z[r * d..(r + 1) * d];
            loss += 0.5 * zr.iter().map(|v| v * v).sum::<f64>() + d as f64 * HALF_LN_2PI - trace.logdet[r];
        }
        let mut gz: Vec<f64> = trace.z.iter().map(|v| v * inv_b).collect();
        let gl = -inv_b;
        if let Some(g) = ctx_grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        for (c, (mt, saved)) in self.couplings.iter().zip(&trace.layers).rev() {
            let ntr = c.transformed.len();
            let mut g_raw = vec![0.0; batch * ntr * p];
            for r in 0..batch {
                for (t, &dim) in c.transformed.iter().enumerate() {
                    let off = (r * ntr + t) * p;
                    let raw = &mt.output[off..off + p];
                    let gx = rq_backward(shape, raw, saved[r * ntr + t], gz[r * d + dim], gl, &mut g_raw[off..off + p]);
                    gz[r * d + dim] = gx;
                }
            }
            let need_input = !c.identity.is_empty() || ctx_grad.is_some();
            if let Some(g_in) = c.conditioner.backward(params, mt, &g_raw, grads, need_input) {
                let h = c.identity.len();
                let width = h + cd;
                for r in 0..batch {
                    let row = &g_in[r * width..(r + 1) * width];
                    for (i, &dim) in c.identity.iter().enumerate() {
                        gz[r * d + dim] += row[i];
                    }
                    if let Some(g) = ctx_grad.as_deref_mut() {
                        g[r * cd..(r + 1) * cd].iter_mut().zip(&row[h..]).for_each(|(a, b)| *a += b);
                    }
                }
            }
        }
        debug_assert_eq!(trace.batch, batch);
        loss * inv_b
    }

    /// Summed standardized NLL together with the piece every ReLU unit and
    /// spline evaluation sits on. The loss is smooth in the parameters as
    /// long as the pattern does not change.
    pub(crate) fn nll_sum_and_pattern(&self, params: &[f64], theta_std: &[f64], ctx_std: &[f64], batch: usize) -> (f64, Vec<u32>) {
        let d = self.config.theta_dim;
        let shape = &self.config.spline;
        let p = shape.params_per_dim();
        let tr = self.forward_with(params, theta_std, ctx_std, batch, true);
        let mut pattern = Vec::new();
        for (mt, saved) in &tr.layers {
            pattern.extend(mt.active_units().map(u32::from));
            pattern.extend(saved.iter().enumerate().map(|(j, &x)| rq_piece(shape, &mt.output[j * p..(j + 1) * p], x) as u32));
        }
        let sq: f64 = tr.z.iter().map(|v| v * v).sum();
        (0.5 * sq + (batch * d) as f64 * HALF_LN_2PI - tr.logdet.iter().sum::<f64>(), pattern)
    }

    /// Summed standardized negative log density over `batch` rows.
    pub(crate) fn nll_sum(&self, params: &[f64], theta_std: &[f64], ctx_std: &[f64], batch: usize) -> f64 {
        let d = self.config.theta_dim;
        let tr = self.forward_with(params, theta_std, ctx_std, batch, false);
        let sq: f64 = tr.z.iter().map(|v| v * v).sum();
        0.5 * sq + (batch * d) as f64 * HALF_LN_2PI - tr.logdet.iter().sum::<f64>()
    }

    /// Log density in standardized parameter space given standardized context.
    pub fn log_prob_standardized(&self, theta_std: &Matrix, ctx_std: &Matrix) -> Result<Vec<f64>> {
        self.check_pairs(theta_std, ctx_std)?;
        let d = self.config.theta_dim;
        let cd = self.config.context_dim;
        let mut out = Vec::with_capacity(theta_std.rows());
        let n = theta_std.rows();
        let mut start = 0;
        while start < n {
            let b = EVAL_CHUNK.min(n - start);
            let t = &theta_std.as_slice()[start * d..(start + b) * d];
            let c = &ctx_std.as_slice()[start * cd..(start + b) * cd];
            let tr = self.forward_with(&self.params, t, c, b, false);
            for r in 0..b {
                let zr = &tr.z[r * d..(r + 1) * d];
                out.push(-0.5 * zr.iter().map(|v| v * v).sum::<f64>() - d as f64 * HALF_LN_2PI + tr.logdet[r]);
            }
            start += b;
        }
        Ok(out)
    }

    /// Log density of raw-unit parameters given raw contexts.
    pub fn log_prob(&self, theta: &Matrix, context: &Matrix) -> Result<Vec<f64>> {
        let t = self.theta_standardizer.standardize(theta)?;
        let c = self.context_standardizer.standardize(context)?;
        let shift = self.theta_standardizer.log_scale();
        Ok(self.log_prob_standardized(&t, &c)?.into_iter().map(|v| v - shift).collect())
    }

    /// Log density with one context shared by every row.
    pub fn log_prob_at(&self, theta: &Matrix, context: &[f64]) -> Result<Vec<f64>> {
        self.log_prob(theta, &self.repeat_context(context, theta.rows())?)
    }

    fn repeat_context(&self, context: &[f64], n: usize) -> Result<Matrix> {
        if context.len() != self.config.context_dim {
            return Err(Error::DimensionMismatch { expected: self.config.context_dim, got: context.len() });
        }
        let mut data = Vec::with_capacity(n * context.len());
        for _ in 0..n {
            data.extend_from_slice(context);
        }
        Matrix::from_vec(n, context.len(), data)
    }

    fn check_pairs(&self, theta: &Matrix, ctx: &Matrix) -> Result<()> {
        if theta.cols() != self.config.theta_dim {
            return Err(Error::DimensionMismatch { expected: self.config.theta_dim, got: theta.cols() });
        }
        if ctx.cols() != self.config.context_dim {
            return Err(Error::DimensionMismatch { expected: self.config.context_dim, got: ctx.cols() });
        }
        if theta.rows() != ctx.rows() {
            return Err(Error::DimensionMismatch { expected: theta.rows(), got: ctx.rows() });
        }
        Ok(())
    }

    /// Standardized `theta -> z` with log-determinants.
    pub fn transform(&self, theta_std: &Matrix, ctx_std: &Matrix) -> Result<(Matrix, Vec<f64>)> {
        self.check_pairs(theta_std, ctx_std)?;
        let tr = self.forward_with(&self.params, theta_std.as_slice(), ctx_std.as_slice(), theta_std.rows(), false);
        Ok((Matrix::from_vec(theta_std.rows(), self.config.theta_dim, tr.z)?, tr.logdet))
    }

    /// Standardized `z -> theta`, running the couplings in reverse.
    pub fn inverse(&self, z: &Matrix, ctx_std: &Matrix) -> Result<Matrix> {
        self.check_pairs(z, ctx_std)?;
        let d = self.config.theta_dim;
        let cd = self.config.context_dim;
        let shape = &self.config.spline;
        let p = shape.params_per_dim();
        let batch = z.rows();
        let mut u = z.as_slice().to_vec();
        for c in self.couplings.iter().rev() {
            let input = Self::conditioner_input(c, &u, ctx_std.as_slice(), d, cd, batch);
            let out = c.conditioner.predict(&self.params, &input, batch);
            let ntr = c.transformed.len();
            for r in 0..batch {
                for (t, &dim) in c.transformed.iter().enumerate() {
                    let raw = &out[(r * ntr + t) * p..(r * ntr + t + 1) * p];
                    u[r * d + dim] = rq_inverse(shape, raw, u[r * d + dim]).0;
                }
            }
        }
        Matrix::from_vec(batch, d, u)
    }

    /// `n` raw-unit draws given one raw context.
    pub fn sample(&self, context: &[f64], n: usize, seed: u64) -> Result<Matrix> {
        let mut ctx = context.to_vec();
        if ctx.len() != self.config.context_dim {
            return Err(Error::DimensionMismatch { expected: self.config.context_dim, got: ctx.len() });
        }
        self.context_standardizer.standardize_in_place(&mut ctx);
        let d = self.config.theta_dim;
        let mut rng = rng_from_seed(derive_seed(seed, streams::SAMPLE));
        let z: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut rows = Vec::with_capacity(n * d);
        let mut start = 0;
        while start < n {
            let b = EVAL_CHUNK.min(n - start);
            let zm = Matrix::from_vec(b, d, z[start * d..(start + b) * d].to_vec())?;
            let cm = self.repeat_context(&ctx, b)?;
            rows.extend(self.inverse(&zm, &cm)?.into_vec());
            start += b;
        }
        self.theta_standardizer.unstandardize(&Matrix::from_vec(n, d, rows)?)
    }

    /// SHA-256 over the little-endian parameter bytes.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.params {
            h.update(p.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_container(&self, task: &str, seed: u64) -> Result<Container> {
        let config = serde_json::to_value(&self.config)?;
        let meta = ContainerMeta::new(task, seed)
            .with("kind", "flow")
            .with("flow_config", config)
            .with("checksum", self.checksum())
            .with("adam_betas", serde_json::json!([0.9, 0.999]))
            .with("adam_eps", 1e-8);
        let mut c = Container::new(meta);
        let orders = layer_orders(self.config.theta_dim, self.config.num_transforms);
        let flat: Vec<f64> = orders.iter().flatten().map(|&i| i as f64).collect();
        c.push(Tensor::f64("params", vec![self.params.len()], self.params.clone()))
            .push(Tensor::f64("permutations", vec![orders.len(), self.config.theta_dim], flat))
            .push(Tensor::f64("theta_mean", vec![self.config.theta_dim], self.theta_standardizer.mean.clone()))
            .push(Tensor::f64("theta_std", vec![self.config.theta_dim], self.theta_standardizer.std.clone()))
            .push(Tensor::f64("context_mean", vec![self.config.context_dim], self.context_standardizer.mean.clone()))
            .push(Tensor::f64("context_std", vec![self.config.context_dim], self.context_standardizer.std.clone()));
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let config: FlowConfig = serde_json::from_value(
            c.meta.extra.get("flow_config").cloned().ok_or_else(|| Error::Manifest("missing flow_config".into()))?,
        )?;
        config.validate()?;
        let theta = Standardizer { mean: c.get("theta_mean")?.values_f64(), std: c.get("theta_std")?.values_f64() };
        let context = Standardizer { mean: c.get("context_mean")?.values_f64(), std: c.get("context_std")?.values_f64() };
        let mut model = Self::new(config, theta, context, 0)?;
        let params = c.get("params")?.values_f64();
        if params.len() != model.params.len() {
            return Err(Error::DimensionMismatch { expected: model.params.len(), got: params.len() });
        }
        let stored = c.get("permutations")?.values_f64();
        let expected: Vec<f64> =
            layer_orders(model.config.theta_dim, model.config.num_transforms).iter().flatten().map(|&i| i as f64).collect();
        if stored != expected {
            return Err(Error::Manifest("checkpoint permutations do not match the coupling scheme".into()));
        }
        model.params = params;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy(theta_dim: usize, context_dim: usize, randomize: bool) -> FlowModel {
        let cfg = FlowConfig { num_transforms: 3, hidden_widths: vec![16, 16], ..FlowConfig::for_dims(theta_dim, context_dim) };
        let mut m = FlowModel::new(cfg, Standardizer::identity(theta_dim), Standardizer::identity(context_dim), 5).unwrap();
        if randomize {
            let mut rng = rng_from_seed(77);
            m.params.iter_mut().for_each(|p| *p = rng.random_range(-0.3..0.3));
        }
        m
    }

    fn rows(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = rng_from_seed(seed);
        Matrix::from_fn(n, d, |_, _| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn identity_flow_density() {
        let theta_std = Standardizer { mean: vec![1.0, -2.0], std: vec![0.5, 3.0] };
        let cfg = FlowConfig::for_dims(2, 3);
        let m = FlowModel::new(cfg, theta_std.clone(), Standardizer::identity(3), 0).unwrap();
        let lp = m.log_prob_at(&Matrix::from_rows(&[vec![1.0, -2.0]]).unwrap(), &[0.3, 0.1, -4.0]).unwrap();
        let want = -(2.0 / 2.0) * (2.0 * std::f64::consts::PI).ln() - theta_std.log_scale();
        assert!((lp[0] - want).abs() < 1e-12);
    }

    #[test]
    fn inverse_undoes_transform() {
        for d in [1, 2, 3, 5] {
            let m = toy(d, 2, true);
            let t = rows(64, d, 1);
            let c = rows(64, 2, 2);
            let (z, _) = m.transform(&t, &c).unwrap();
            let back = m.inverse(&z, &c).unwrap();
            for (a, b) in t.as_slice().iter().zip(back.as_slice()) {
                assert!((a - b).abs() < 1e-9, "dim {d}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let m = toy(3, 2, true);
        let t = rows(8, 3, 3);
        let c = rows(8, 2, 4);
        let mut grads = vec![0.0; m.num_params()];
        let mut ctx_grad = vec![0.0; 16];
        m.loss_and_grad(&m.params, t.as_slice(), c.as_slice(), 8, &mut grads, Some(&mut ctx_grad));
        let f = |p: &[f64], cc: &[f64]| {
            let mut g = vec![0.0; p.len()];
            m.loss_and_grad(p, t.as_slice(), cc, 8, &mut g, None)
        };
        let h = 1e-5;
        let mut rng = rng_from_seed(9);
        for _ in 0..200 {
            let i = rng.random_range(0..m.num_params());
            let mut pp = m.params.clone();
            pp[i] += h;
            let mut pm = m.params.clone();
            pm[i] -= h;
            let fd = (f(&pp, c.as_slice()) - f(&pm, c.as_slice())) / (2.0 * h);
            assert!((fd - grads[i]).abs() < 1e-6 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", grads[i]);
        }
        for i in 0..16 {
            let mut cp = c.as_slice().to_vec();
            cp[i] += h;
            let mut cm = c.as_slice().to_vec();
            cm[i] -= h;
            let fd = (f(&m.params, &cp) - f(&m.params, &cm)) / (2.0 * h);
            assert!((fd - ctx_grad[i]).abs() < 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = toy(2, 3, true);
        let bytes = m.to_container("toy", 1).unwrap().to_bytes().unwrap();
        let back = FlowModel::from_container(&Container::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(back.checksum(), m.checksum());
        let t = rows(5, 2, 1);
        let c = rows(5, 3, 2);
        assert_eq!(back.log_prob(&t, &c).unwrap(), m.log_prob(&t, &c).unwrap());
    }

    #[test]
    fn sampling_is_seeded() {
        let m = toy(2, 1, true);
        let a = m.sample(&[0.5], 100, 3).unwrap();
        assert_eq!(a, m.sample(&[0.5], 100, 3).unwrap());
        assert_ne!(a, m.sample(&[0.5], 100, 4).unwrap());
    }
}
