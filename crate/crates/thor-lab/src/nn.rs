//! Minimal dense network stack: an MLP with tanh hidden layers and an
//! identity output, a diagonal-Gaussian policy head with a learnable
//! state-independent log-std, and a bias-corrected Adam optimizer.
//!
//! Parameters live in one flat `Vec<f64>` per network, laid out layer by
//! layer as `[W_0 (out x in, row major), b_0, W_1, b_1, ...]`. Checkpoints
//! serialize exactly that vector, so the layout is part of the on-disk
//! format. Everything is 64-bit; reproducibility beats speed at this scale.
//!
//! Networks are immutable during inference and may be read concurrently;
//! parameter updates require exclusive access. The caller sequences phases.

use crate::rng::standard_normal;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LOG_STD_MIN: f64 = -4.0;
pub const LOG_STD_MAX: f64 = 1.0;

/// ln(2*pi*e)/2, the per-dimension entropy of a unit Gaussian.
pub const HALF_LN_TWO_PI_E: f64 = 1.4189385332046727;
/// ln(2*pi)/2.
pub const HALF_LN_TWO_PI: f64 = 0.9189385332046727;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("shape mismatch: expected input of length {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("stale forward cache: cache dims {cache:?} do not match network dims {net:?}")]
    StaleCache { cache: Vec<usize>, net: Vec<usize> },
    #[error("non-finite gradient at parameter index {0}")]
    NonFiniteGradient(usize),
    #[error("gradient length {got} does not match parameter count {expected}")]
    GradientShape { expected: usize, got: usize },
}

/// Dense multilayer perceptron, tanh on hidden layers, identity output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    dims: Vec<usize>,
    params: Vec<f64>,
}

fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Random init: hidden weights scaled by 1/sqrt(fan_in), output layer
    /// scaled down by `output_gain` so initial outputs sit near zero.
    pub fn new(dims: &[usize], rng: &mut ChaCha8Rng, output_gain: f64) -> Self {
        assert!(dims.len() >= 2, "need at least input and output widths");
        let mut params = Vec::with_capacity(param_count(dims));
        let last = dims.len() - 2;
        for (l, w) in dims.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let gain = if l == last { output_gain } else { 1.0 };
            let scale = gain / (n_in as f64).sqrt();
            for _ in 0..n_in * n_out {
                params.push(standard_normal(rng) * scale);
            }
            params.extend(std::iter::repeat(0.0).take(n_out));
        }
        Self { dims: dims.to_vec(), params }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        assert!(dims.len() >= 2);
        Self { dims: dims.to_vec(), params: vec![0.0; param_count(dims)] }
    }

    /// Rebuild a network from its layer widths and flat parameter vector
    /// (the checkpoint representation).
    pub fn from_parts(dims: Vec<usize>, params: Vec<f64>) -> Result<Self, NetError> {
        if dims.len() < 2 {
            return Err(NetError::GradientShape { expected: 2, got: dims.len() });
        }
        let expected = param_count(&dims);
        if params.len() != expected {
            return Err(NetError::GradientShape { expected, got: params.len() });
        }
        Ok(Self { dims, params })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer_count(&self) -> usize {
        self.dims.len() - 1
    }

    /// Offset of layer `l`'s weight block in the flat parameter vector.
    fn layer_offset(&self, l: usize) -> usize {
        param_count(&self.dims[..=l])
    }

    /// Forward pass without cache.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NetError> {
        if x.len() != self.dims[0] {
            return Err(NetError::ShapeMismatch { expected: self.dims[0], got: x.len() });
        }
        let mut a = x.to_vec();
        for l in 0..self.layer_count() {
            a = self.layer_forward(l, &a);
        }
        Ok(a)
    }

    /// Forward pass recording per-layer activations for [`Mlp::backward`].
    pub fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache, NetError> {
        if x.len() != self.dims[0] {
            return Err(NetError::ShapeMismatch { expected: self.dims[0], got: x.len() });
        }
        let mut acts = Vec::with_capacity(self.dims.len());
        acts.push(x.to_vec());
        for l in 0..self.layer_count() {
            let next = self.layer_forward(l, acts.last().unwrap());
            acts.push(next);
        }
        Ok(ForwardCache { dims: self.dims.clone(), activations: acts })
    }

    fn layer_forward(&self, l: usize, a: &[f64]) -> Vec<f64> {
        let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
        let off = self.layer_offset(l);
        let w = &self.params[off..off + n_in * n_out];
        let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
        let mut out = Vec::with_capacity(n_out);
        for o in 0..n_out {
            let row = &w[o * n_in..(o + 1) * n_in];
            let mut z = b[o];
            for (wi, ai) in row.iter().zip(a) {
                z += wi * ai;
            }
            out.push(if l + 1 == self.layer_count() { z } else { z.tanh() });
        }
        out
    }

    /// Exact reverse-mode gradients of the forward map. `upstream` is
    /// dL/d(output); returns dL/d(params) in flat layout, accumulated into
    /// `grads` (which must be `param_count` long).
    pub fn backward(
        &self,
        cache: &ForwardCache,
        upstream: &[f64],
        grads: &mut [f64],
    ) -> Result<(), NetError> {
        if cache.dims != self.dims {
            return Err(NetError::StaleCache { cache: cache.dims.clone(), net: self.dims.clone() });
        }
        if upstream.len() != self.output_dim() {
            return Err(NetError::ShapeMismatch { expected: self.output_dim(), got: upstream.len() });
        }
        if grads.len() != self.params.len() {
            return Err(NetError::GradientShape { expected: self.params.len(), got: grads.len() });
        }
        let mut delta = upstream.to_vec();
        for l in (0..self.layer_count()).rev() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let off = self.layer_offset(l);
            let a_in = &cache.activations[l];
            // Weight/bias gradients for this layer.
            for o in 0..n_out {
                let d = delta[o];
                let g_row = &mut grads[off + o * n_in..off + (o + 1) * n_in];
                for (gi, ai) in g_row.iter_mut().zip(a_in) {
                    *gi += d * ai;
                }
                grads[off + n_in * n_out + o] += d;
            }
            if l == 0 {
                break;
            }
            // Propagate through W^T and the tanh of the layer below.
            let w = &self.params[off..off + n_in * n_out];
            let mut prev = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                let row = &w[o * n_in..(o + 1) * n_in];
                for (p, wi) in prev.iter_mut().zip(row) {
                    *p += d * wi;
                }
            }
            for (p, a) in prev.iter_mut().zip(a_in) {
                *p *= 1.0 - a * a;
            }
            delta = prev;
        }
        Ok(())
    }
}

/// Activations recorded by [`Mlp::forward_cached`]; `activations[0]` is the
/// input, the last entry is the output.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    dims: Vec<usize>,
    pub activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().unwrap()
    }
}

/// Diagonal-Gaussian policy: an MLP mean and a learnable per-action
/// log-std, clamped into [LOG_STD_MIN, LOG_STD_MAX] after every update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub mean: Mlp,
    pub log_std: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new(dims: &[usize], rng: &mut ChaCha8Rng, output_gain: f64, init_log_std: f64) -> Self {
        let mean = Mlp::new(dims, rng, output_gain);
        let dim = mean.output_dim();
        Self { mean, log_std: vec![init_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX); dim] }
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn stds(&self) -> Vec<f64> {
        self.log_std.iter().map(|l| l.exp()).collect()
    }

    /// Sample an action given the mean output; also returns the unit noise
    /// used, so the sample can be re-materialized under new parameters.
    pub fn sample(&self, mean_out: &[f64], rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let mut action = Vec::with_capacity(mean_out.len());
        let mut noise = Vec::with_capacity(mean_out.len());
        for (m, ls) in mean_out.iter().zip(&self.log_std) {
            let eps = standard_normal(rng);
            noise.push(eps);
            action.push(m + ls.exp() * eps);
        }
        (action, noise)
    }

    /// Log-density of `action` under the Gaussian with the given mean.
    pub fn log_prob(&self, mean_out: &[f64], action: &[f64]) -> f64 {
        let mut lp = 0.0;
        for ((m, ls), a) in mean_out.iter().zip(&self.log_std).zip(action) {
            let std = ls.exp();
            let z = (a - m) / std;
            lp += -0.5 * z * z - ls - HALF_LN_TWO_PI;
        }
        lp
    }

    /// Closed-form entropy: sum over dimensions of 1/2 ln(2*pi*e) + ln(std).
    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|ls| HALF_LN_TWO_PI_E + ls).sum()
    }

    /// d(log_prob)/d(mean) and d(log_prob)/d(log_std) at the given point.
    pub fn log_prob_grads(&self, mean_out: &[f64], action: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut d_mean = Vec::with_capacity(mean_out.len());
        let mut d_log_std = Vec::with_capacity(mean_out.len());
        for ((m, ls), a) in mean_out.iter().zip(&self.log_std).zip(action) {
            let var = (2.0 * ls).exp();
            let diff = a - m;
            d_mean.push(diff / var);
            d_log_std.push(diff * diff / var - 1.0);
        }
        (d_mean, d_log_std)
    }

    pub fn clamp_log_std(&mut self) {
        for ls in &mut self.log_std {
            *ls = ls.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    /// Total trainable parameters: mean net plus log-std vector.
    pub fn param_count(&self) -> usize {
        self.mean.param_count() + self.log_std.len()
    }
}

/// Convenience wrapper: log-probability and entropy of an observation/action
/// pair under the policy.
pub fn log_prob_and_entropy(
    policy: &GaussianPolicy,
    obs: &[f64],
    action: &[f64],
) -> Result<(f64, f64), NetError> {
    if action.len() != policy.action_dim() {
        return Err(NetError::ShapeMismatch { expected: policy.action_dim(), got: action.len() });
    }
    let mean = policy.mean.forward(obs)?;
    Ok((policy.log_prob(&mean, action), policy.entropy()))
}

/// Bias-corrected Adam state over one flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn param_count(&self) -> usize {
        self.m.len()
    }

    pub fn new(param_count: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    /// One Adam update in place. Non-finite gradients abort with an error
    /// and leave parameters and moments untouched.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NetError> {
        if grads.len() != params.len() || params.len() != self.m.len() {
            return Err(NetError::GradientShape { expected: self.m.len(), got: grads.len() });
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(NetError::NonFiniteGradient(i));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

/// Compare analytic gradients against central finite differences for a
/// random network and a random linear readout loss. Returns the maximum
/// elementwise relative error.
pub fn finite_difference_check(dims: &[usize], rng: &mut ChaCha8Rng, h: f64) -> f64 {
    let mut net = Mlp::new(dims, rng, 1.0);
    let x: Vec<f64> = (0..dims[0]).map(|_| standard_normal(rng)).collect();
    let readout: Vec<f64> = (0..*dims.last().unwrap()).map(|_| standard_normal(rng)).collect();
    let loss = |net: &Mlp| -> f64 {
        net.forward(&x).unwrap().iter().zip(&readout).map(|(y, c)| y * c).sum()
    };

    let cache = net.forward_cached(&x).unwrap();
    let mut analytic = vec![0.0; net.param_count()];
    net.backward(&cache, &readout, &mut analytic).unwrap();

    let mut max_rel = 0.0_f64;
    for i in 0..net.param_count() {
        let orig = net.params()[i];
        net.params_mut()[i] = orig + h;
        let up = loss(&net);
        net.params_mut()[i] = orig - h;
        let down = loss(&net);
        net.params_mut()[i] = orig;
        let fd = (up - down) / (2.0 * h);
        let denom = analytic[i].abs().max(fd.abs()).max(1e-6);
        max_rel = max_rel.max((analytic[i] - fd).abs() / denom);
    }
    max_rel
}
