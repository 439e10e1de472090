//! Monotone rational-quadratic spline on `[-B, B]`, identity outside.
//!
//! Each transformed coordinate reads `3K + 1` unconstrained values: `K` bin
//! width logits, `K` bin height logits and `K + 1` knot derivative
//! pre-activations. All-zero raw values give the identity map.

use serde::{Deserialize, Serialize};

pub const MAX_BINS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplineShape {
    pub bins: usize,
    pub tail_bound: f64,
    pub min_bin_width: f64,
    pub min_bin_height: f64,
    pub min_derivative: f64,
}

impl Default for SplineShape {
    fn default() -> Self {
        Self { bins: 8, tail_bound: 5.0, min_bin_width: 1e-3, min_bin_height: 1e-3, min_derivative: 1e-3 }
    }
}

impl SplineShape {
    pub fn params_per_dim(&self) -> usize {
        3 * self.bins + 1
    }

    fn derivative_offset(&self) -> f64 {
        ((1.0 - self.min_derivative).exp() - 1.0).ln()
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct Knots {
    cw: [f64; MAX_BINS + 1],
    ch: [f64; MAX_BINS + 1],
    d: [f64; MAX_BINS + 1],
    pw: [f64; MAX_BINS],
    ph: [f64; MAX_BINS],
}

fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, l) in out.iter_mut().zip(logits) {
        *o = (l - m).exp();
        s += *o;
    }
    out.iter_mut().for_each(|o| *o /= s);
}

fn knots(shape: &SplineShape, raw: &[f64]) -> Knots {
    let k = shape.bins;
    let b = shape.tail_bound;
    let mut kn = Knots {
        cw: [0.0; MAX_BINS + 1],
        ch: [0.0; MAX_BINS + 1],
        d: [0.0; MAX_BINS + 1],
        pw: [0.0; MAX_BINS],
        ph: [0.0; MAX_BINS],
    };
    softmax_into(&raw[..k], &mut kn.pw[..k]);
    softmax_into(&raw[k..2 * k], &mut kn.ph[..k]);
    let (sw, sh) = (1.0 - shape.min_bin_width * k as f64, 1.0 - shape.min_bin_height * k as f64);
    let (mut cum_w, mut cum_h) = (0.0, 0.0);
    kn.cw[0] = -b;
    kn.ch[0] = -b;
    for i in 0..k {
        cum_w += shape.min_bin_width + sw * kn.pw[i];
        cum_h += shape.min_bin_height + sh * kn.ph[i];
        kn.cw[i + 1] = -b + 2.0 * b * cum_w;
        kn.ch[i + 1] = -b + 2.0 * b * cum_h;
    }
    kn.cw[k] = b;
    kn.ch[k] = b;
    let off = shape.derivative_offset();
    for j in 0..=k {
        kn.d[j] = shape.min_derivative + softplus(raw[2 * k + j] + off);
    }
    kn
}

fn find_bin(edges: &[f64], v: f64) -> usize {
    let k = edges.len() - 1;
    let mut bin = 0;
    for (i, e) in edges.iter().enumerate().take(k).skip(1) {
        if v >= *e {
            bin = i;
        }
    }
    bin
}

/// The piece of the map containing `x`: a bin index, or `bins` and
/// `bins + 1` for the lower and upper tails.
pub fn rq_piece(shape: &SplineShape, raw: &[f64], x: f64) -> usize {
    let b = shape.tail_bound;
    if x <= -b {
        return shape.bins;
    }
    if x >= b {
        return shape.bins + 1;
    }
    find_bin(&knots(shape, raw).cw[..=shape.bins], x)
}

/// Forward map `x -> y` and `log |dy/dx|`.
pub fn rq_forward(shape: &SplineShape, raw: &[f64], x: f64) -> (f64, f64) {
    let b = shape.tail_bound;
    if x <= -b || x >= b {
        return (x, 0.0);
    }
    let kn = knots(shape, raw);
    let k = find_bin(&kn.cw[..=shape.bins], x);
    let (a, w) = (kn.cw[k], kn.cw[k + 1] - kn.cw[k]);
    let (yb, h) = (kn.ch[k], kn.ch[k + 1] - kn.ch[k]);
    let (d0, d1) = (kn.d[k], kn.d[k + 1]);
    let xi = ((x - a) / w).clamp(0.0, 1.0);
    let s = h / w;
    let t = xi * (1.0 - xi);
    let num = h * (s * xi * xi + d0 * t);
    let den = s + (d1 + d0 - 2.0 * s) * t;
    let g = d1 * xi * xi + 2.0 * s * t + d0 * (1.0 - xi) * (1.0 - xi);
    (yb + num / den, 2.0 * s.ln() + g.ln() - 2.0 * den.ln())
}

/// Inverse map `y -> x`; the returned log-determinant is that of the forward
/// map at `x`.
pub fn rq_inverse(shape: &SplineShape, raw: &[f64], y: f64) -> (f64, f64) {
    let b = shape.tail_bound;
    if y <= -b || y >= b {
        return (y, 0.0);
    }
    let kn = knots(shape, raw);
    let k = find_bin(&kn.ch[..=shape.bins], y);
    let (a, w) = (kn.cw[k], kn.cw[k + 1] - kn.cw[k]);
    let (yb, h) = (kn.ch[k], kn.ch[k + 1] - kn.ch[k]);
    let (d0, d1) = (kn.d[k], kn.d[k + 1]);
    let s = h / w;
    let dy = y - yb;
    let sum = d1 + d0 - 2.0 * s;
    let qa = h * (s - d0) + dy * sum;
    let qb = h * d0 - dy * sum;
    let qc = -s * dy;
    let disc = (qb * qb - 4.0 * qa * qc).max(0.0);
    let denom = -qb - disc.sqrt();
    let xi = if denom == 0.0 { 0.0 } else { (2.0 * qc / denom).clamp(0.0, 1.0) };
    let t = xi * (1.0 - xi);
    let den = s + sum * t;
    let g = d1 * xi * xi + 2.0 * s * t + d0 * (1.0 - xi) * (1.0 - xi);
    (a + xi * w, 2.0 * s.ln() + g.ln() - 2.0 * den.ln())
}

/// Backward pass of [`rq_forward`]. Given upstream gradients for `y` and the
/// log-determinant, accumulates into `g_raw` and returns the gradient for `x`.
pub fn rq_backward(shape: &SplineShape, raw: &[f64], x: f64, gy: f64, gl: f64, g_raw: &mut [f64]) -> f64 {
    let bound = shape.tail_bound;
    if x <= -bound || x >= bound {
        return gy;
    }
    let nb = shape.bins;
    let kn = knots(shape, raw);
    let k = find_bin(&kn.cw[..=nb], x);
    let (a, w) = (kn.cw[k], kn.cw[k + 1] - kn.cw[k]);
    let h = kn.ch[k + 1] - kn.ch[k];
    let (d0, d1) = (kn.d[k], kn.d[k + 1]);
    let xi = ((x - a) / w).clamp(0.0, 1.0);
    let s = h / w;
    let t = xi * (1.0 - xi);
    let sum = d1 + d0 - 2.0 * s;
    let num = h * (s * xi * xi + d0 * t);
    let den = s + sum * t;
    let g = d1 * xi * xi + 2.0 * s * t + d0 * (1.0 - xi) * (1.0 - xi);
    let inv = 1.0 / den;
    let yq = num * inv;

    let dn_dxi = h * (2.0 * s * xi + d0 * (1.0 - 2.0 * xi));
    let dd_dxi = sum * (1.0 - 2.0 * xi);
    let dd_ds = 1.0 - 2.0 * t;

    let dy_dxi = (dn_dxi - yq * dd_dxi) * inv;
    let dy_ds = (h * xi * xi - yq * dd_ds) * inv;
    let dy_dh = (s * xi * xi + d0 * t) * inv;
    let dy_dd0 = (h * t - yq * t) * inv;
    let dy_dd1 = -yq * t * inv;

    let dg_dxi = 2.0 * d1 * xi + 2.0 * s * (1.0 - 2.0 * xi) - 2.0 * d0 * (1.0 - xi);
    let dl_dxi = dg_dxi / g - 2.0 * dd_dxi * inv;
    let dl_ds = 2.0 / s + 2.0 * t / g - 2.0 * dd_ds * inv;
    let dl_dd0 = (1.0 - xi) * (1.0 - xi) / g - 2.0 * t * inv;
    let dl_dd1 = xi * xi / g - 2.0 * t * inv;

    let g_xi = gy * dy_dxi + gl * dl_dxi;
    let g_s = gy * dy_ds + gl * dl_ds;
    let g_d0 = gy * dy_dd0 + gl * dl_dd0;
    let g_d1 = gy * dy_dd1 + gl * dl_dd1;

    let gx = g_xi / w;
    let g_a = -g_xi / w;
    let g_w = -g_xi * xi / w - g_s * s / w;
    let g_h = gy * dy_dh + g_s / w;

    let mut g_cw = [0.0; MAX_BINS + 1];
    let mut g_ch = [0.0; MAX_BINS + 1];
    g_cw[k] += g_a - g_w;
    g_cw[k + 1] += g_w;
    // The bin bottom enters y additively.
    g_ch[k] += gy - g_h;
    g_ch[k + 1] += g_h;

    let accumulate = |g_edges: &[f64], p: &[f64], min_bin: f64, out: &mut [f64]| {
        // Interior edge j is -B + 2B * sum_{i<j} (min + scale * p_i).
        let scale = 1.0 - min_bin * nb as f64;
        let mut g_p = [0.0; MAX_BINS];
        let mut tail = 0.0;
        for i in (0..nb).rev() {
            if i + 1 < nb {
                tail += 2.0 * bound * g_edges[i + 1];
            }
            g_p[i] = scale * tail;
        }
        let dot: f64 = (0..nb).map(|i| p[i] * g_p[i]).sum();
        for i in 0..nb {
            out[i] += p[i] * (g_p[i] - dot);
        }
    };
    accumulate(&g_cw, &kn.pw, shape.min_bin_width, &mut g_raw[..nb]);
    accumulate(&g_ch, &kn.ph, shape.min_bin_height, &mut g_raw[nb..2 * nb]);
    let off = shape.derivative_offset();
    g_raw[2 * nb + k] += g_d0 * sigmoid(raw[2 * nb + k] + off);
    g_raw[2 * nb + k + 1] += g_d1 * sigmoid(raw[2 * nb + k + 1] + off);
    gx
}
