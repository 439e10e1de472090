//! Fully connected networks over a flat parameter vector.

use rand::Rng;

use crate::matrix::gemm;
use crate::rng::SbiRng;

/// Hands out contiguous ranges of a flat parameter vector.
#[derive(Debug, Default, Clone)]
pub struct ParamLayout {
    len: usize,
}

impl ParamLayout {
    pub fn alloc(&mut self, n: usize) -> usize {
        let at = self.len;
        self.len += n;
        at
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// `y = x W + b` with `W` stored `n_in x n_out` row-major at `weight`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: usize,
    pub bias: usize,
    pub n_in: usize,
    pub n_out: usize,
}

/// ReLU network with a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    /// Input followed by every hidden post-activation.
    acts: Vec<Vec<f64>>,
    pub output: Vec<f64>,
    batch: usize,
}

impl MlpTrace {
    /// On/off state of every hidden ReLU unit.
    pub fn active_units(&self) -> impl Iterator<Item = bool> + '_ {
        self.acts[1..].iter().flatten().map(|&v| v > 0.0)
    }
}

impl Mlp {
    pub fn new(sizes: &[usize], layout: &mut ParamLayout) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|w| {
                let weight = layout.alloc(w[0] * w[1]);
                let bias = layout.alloc(w[1]);
                Dense { weight, bias, n_in: w[0], n_out: w[1] }
            })
            .collect();
        Self { layers }
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_out(&self) -> usize {
        self.layers.last().expect("nonempty").n_out
    }

    /// Uniform `±1/sqrt(fan_in)` initialization; with `zero_last` the output
    /// layer starts at exactly zero.
    pub fn init(&self, params: &mut [f64], rng: &mut SbiRng, zero_last: bool) {
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let bound = 1.0 / (layer.n_in.max(1) as f64).sqrt();
            let n = layer.n_in * layer.n_out;
            for p in &mut params[layer.weight..layer.weight + n] {
                *p = if zero_last && l == last { 0.0 } else { rng.random_range(-bound..bound) };
            }
            for p in &mut params[layer.bias..layer.bias + layer.n_out] {
                *p = if zero_last && l == last { 0.0 } else { rng.random_range(-bound..bound) };
            }
        }
    }

    fn affine(layer: &Dense, params: &[f64], input: &[f64], batch: usize) -> Vec<f64> {
        let bias = &params[layer.bias..layer.bias + layer.n_out];
        let mut out = Vec::with_capacity(batch * layer.n_out);
        for _ in 0..batch {
            out.extend_from_slice(bias);
        }
        let w = &params[layer.weight..layer.weight + layer.n_in * layer.n_out];
        gemm(batch, layer.n_in, layer.n_out, 1.0, input, false, w, false, 1.0, &mut out);
        out
    }

    pub fn forward(&self, params: &[f64], input: Vec<f64>, batch: usize) -> MlpTrace {
        debug_assert_eq!(input.len(), batch * self.n_in());
        let mut acts = Vec::with_capacity(self.layers.len());
        acts.push(input);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut out = Self::affine(layer, params, acts.last().expect("input present"), batch);
            if l == last {
                return MlpTrace { acts, output: out, batch };
            }
            out.iter_mut().for_each(|v| *v = v.max(0.0));
            acts.push(out);
        }
        unreachable!("loop returns at the output layer")
    }

    /// Forward pass without keeping activations.
    pub fn predict(&self, params: &[f64], input: &[f64], batch: usize) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut cur = Self::affine(&self.layers[0], params, input, batch);
        for (l, layer) in self.layers.iter().enumerate().skip(1) {
            cur.iter_mut().for_each(|v| *v = v.max(0.0));
            cur = Self::affine(layer, params, &cur, batch);
            debug_assert!(l <= last);
        }
        cur
    }

    /// Accumulate parameter gradients into `grads` given `d loss / d output`.
    /// Returns `d loss / d input` when `want_input` is set.
    pub fn backward(
        &self,
        params: &[f64],
        trace: &MlpTrace,
        grad_out: &[f64],
        grads: &mut [f64],
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let batch = trace.batch;
        let mut g = grad_out.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.acts[l];
            let (n_in, n_out) = (layer.n_in, layer.n_out);
            gemm(n_in, batch, n_out, 1.0, input, true, &g, false, 1.0, &mut grads[layer.weight..layer.weight + n_in * n_out]);
            let gb = &mut grads[layer.bias..layer.bias + n_out];
            for row in g.chunks_exact(n_out) {
                gb.iter_mut().zip(row).for_each(|(a, b)| *a += b);
            }
            if l == 0 && !want_input {
                return None;
            }
            let w = &params[layer.weight..layer.weight + n_in * n_out];
            let mut gx = vec![0.0; batch * n_in];
            gemm(batch, n_out, n_in, 1.0, &g, false, w, true, 0.0, &mut gx);
            if l > 0 {
                gx.iter_mut().zip(input).for_each(|(gv, a)| {
                    if *a <= 0.0 {
                        *gv = 0.0;
                    }
                });
            } else {
                return Some(gx);
            }
            g = gx;
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn loss(mlp: &Mlp, p: &[f64], x: &[f64], batch: usize) -> f64 {
        mlp.predict(p, x, batch).iter().enumerate().map(|(i, v)| v * (1.0 + i as f64 * 0.1)).sum()
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut layout = ParamLayout::default();
        let mlp = Mlp::new(&[3, 5, 4, 2], &mut layout);
        let mut p = vec![0.0; layout.len()];
        let mut rng = rng_from_seed(1);
        mlp.init(&mut p, &mut rng, false);
        let batch = 4;
        let x: Vec<f64> = (0..batch * 3).map(|i| (i as f64 * 0.7).sin()).collect();
        let trace = mlp.forward(&p, x.clone(), batch);
        assert_eq!(trace.output, mlp.predict(&p, &x, batch));
        let g_out: Vec<f64> = (0..batch * 2).map(|i| 1.0 + i as f64 * 0.1).collect();
        let mut grads = vec![0.0; p.len()];
        let gx = mlp.backward(&p, &trace, &g_out, &mut grads, true).unwrap();
        let h = 1e-6;
        for i in 0..p.len() {
            let mut pp = p.clone();
            pp[i] += h;
            let mut pm = p.clone();
            pm[i] -= h;
            let fd = (loss(&mlp, &pp, &x, batch) - loss(&mlp, &pm, &x, batch)) / (2.0 * h);
            assert!((fd - grads[i]).abs() < 1e-6, "param {i}: {fd} vs {}", grads[i]);
        }
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fd = (loss(&mlp, &p, &xp, batch) - loss(&mlp, &p, &xm, batch)) / (2.0 * h);
            assert!((fd - gx[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_last_layer_outputs_zero() {
        let mut layout = ParamLayout::default();
        let mlp = Mlp::new(&[2, 8, 3], &mut layout);
        let mut p = vec![0.0; layout.len()];
        mlp.init(&mut p, &mut rng_from_seed(0), true);
        assert!(mlp.predict(&p, &[1.0, -2.0], 1).iter().all(|v| *v == 0.0));
    }
}
