//! Scalar-input binary classifiers.
//!
//! [`MlpModel`] is a fully connected network with a sigmoid output. Its
//! parameters are a single flat vector; for each layer the weight matrix
//! (`out x in`, row-major) comes first, then the bias. Gradients with respect
//! to the parameters are reverse-mode; the input derivative used by attacks
//! and alignment checks is forward-mode.
//!
//! The other types here are closed-form reference classifiers used as
//! oracles when checking risks and bounds.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use libm::{sqrt, tanh};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::simplex::ProbVec;
use crate::toydist::{label_of, sigmoid, Label, ToyDist};

pub const DEFAULT_PROB_FLOOR: f64 = 1e-7;
pub const DEFAULT_HIDDEN: usize = 32;

/// Anything that outputs `p_theta(y = 1 | x)` for scalar `x`.
pub trait Classifier {
    /// `eta_hat(x)`, already clamped to the model's floor if it has one.
    fn prob_one(&self, x: f64) -> f64;

    /// `d eta_hat / dx`; zero wherever a clamp is active.
    fn prob_one_dx(&self, x: f64) -> f64;

    fn forward(&self, x: f64) -> ProbVec {
        ProbVec::binary(self.prob_one(x))
    }

    /// Predicted label; `eta_hat = 0.5` resolves to `0`.
    fn label(&self, x: f64) -> Label {
        label_of(self.prob_one(x))
    }
}

impl<C: Classifier + ?Sized> Classifier for &C {
    fn prob_one(&self, x: f64) -> f64 {
        (**self).prob_one(x)
    }

    fn prob_one_dx(&self, x: f64) -> f64 {
        (**self).prob_one_dx(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Self::Tanh => tanh(z),
            Self::Relu => z.max(0.0),
        }
    }

    /// Derivative given the pre-activation `z` and the activation `a`.
    fn slope(self, z: f64, a: f64) -> f64 {
        match self {
            Self::Tanh => 1.0 - a * a,
            Self::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Gradient of a scalar loss with respect to every parameter and the input.
#[derive(Debug, Clone, PartialEq)]
pub struct GradPack {
    pub d_params: Vec<f64>,
    pub d_input: f64,
}

/// Multilayer perceptron `eta_hat(x) = clamp(sigmoid(f(x)), floor, 1 - floor)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Checkpoint")]
pub struct MlpModel {
    layer_sizes: Vec<usize>,
    activation: Activation,
    prob_floor: f64,
    params: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    layer_sizes: Vec<usize>,
    activation: Activation,
    #[serde(default = "default_floor")]
    prob_floor: f64,
    params: Vec<f64>,
}

fn default_floor() -> f64 {
    DEFAULT_PROB_FLOOR
}

impl TryFrom<Checkpoint> for MlpModel {
    type Error = Error;

    fn try_from(c: Checkpoint) -> Result<Self> {
        let mut m = Self::zeros(&c.layer_sizes, c.activation)?;
        m.set_prob_floor(c.prob_floor)?;
        m.set_params(&c.params)?;
        Ok(m)
    }
}

/// Number of parameters for the given layer sizes.
pub fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl MlpModel {
    /// All parameters zero, so `eta_hat = 0.5` everywhere.
    pub fn zeros(layer_sizes: &[usize], activation: Activation) -> Result<Self> {
        if layer_sizes.len() < 2
            || layer_sizes[0] != 1
            || *layer_sizes.last().unwrap() != 1
            || layer_sizes.contains(&0)
        {
            return Err(Error::InvalidConfig(String::from(
                "layer sizes must start and end with 1 and have no empty layer",
            )));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            prob_floor: DEFAULT_PROB_FLOOR,
            params: vec![0.0; param_count(layer_sizes)],
        })
    }

    /// Weights and biases drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init(layer_sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(layer_sizes, activation)?;
        let mut rng = seeded(seed);
        let mut offset = 0;
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / sqrt(fan_in as f64);
            let n = fan_in * fan_out + fan_out;
            for p in &mut m.params[offset..offset + n] {
                *p = bound * (2.0 * rng.random::<f64>() - 1.0);
            }
            offset += n;
        }
        Ok(m)
    }

    /// `[1, hidden, hidden, 1]`.
    pub fn two_hidden(hidden: usize, activation: Activation, seed: u64) -> Result<Self> {
        Self::init(&[1, hidden, hidden, 1], activation, seed)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn prob_floor(&self) -> f64 {
        self.prob_floor
    }

    pub fn set_prob_floor(&mut self, floor: f64) -> Result<()> {
        if !(floor > 0.0 && floor < 0.5) {
            return Err(Error::InvalidConfig(String::from(
                "prob_floor must lie in (0, 0.5)",
            )));
        }
        self.prob_floor = floor;
        Ok(())
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

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                left: params.len(),
                right: self.params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidConfig(String::from(
                "parameters must be finite",
            )));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// Pre-sigmoid output `f(x)`.
    pub fn logit(&self, x: f64) -> f64 {
        let width = self.layer_sizes.iter().copied().max().unwrap_or(1);
        let mut a = Vec::with_capacity(width);
        let mut z = Vec::with_capacity(width);
        a.push(x);
        let mut offset = 0;
        for w in self.layer_sizes.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let (weights, rest) = self.params[offset..].split_at(n_in * n_out);
            let bias = &rest[..n_out];
            offset += n_in * n_out + n_out;
            z.clear();
            for (o, b) in bias.iter().enumerate() {
                let row = &weights[o * n_in..(o + 1) * n_in];
                z.push(row.iter().zip(&a).fold(*b, |s, (w, v)| s + w * v));
            }
            core::mem::swap(&mut a, &mut z);
            if offset < self.params.len() {
                for v in a.iter_mut() {
                    *v = self.activation.apply(*v);
                }
            }
        }
        a[0]
    }

    /// `(f(x), f'(x))` by forward-mode differentiation.
    pub fn logit_and_dx(&self, x: f64) -> (f64, f64) {
        let mut a = vec![x];
        let mut da = vec![1.0];
        let mut offset = 0;
        let last = self.layer_sizes.len() - 2;
        for (l, w) in self.layer_sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let bias = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let mut z = vec![0.0; n_out];
            let mut dz = vec![0.0; n_out];
            for o in 0..n_out {
                let row = &weights[o * n_in..(o + 1) * n_in];
                let mut s = bias[o];
                let mut ds = 0.0;
                for i in 0..n_in {
                    s += row[i] * a[i];
                    ds += row[i] * da[i];
                }
                z[o] = s;
                dz[o] = ds;
            }
            offset += n_in * n_out + n_out;
            if l == last {
                return (z[0], dz[0]);
            }
            for o in 0..n_out {
                let act = self.activation.apply(z[o]);
                dz[o] *= self.activation.slope(z[o], act);
                z[o] = act;
            }
            a = z;
            da = dz;
        }
        unreachable!("layer_sizes has at least two entries")
    }

    /// Unclamped sigmoid output and whether the floor clamp is active.
    fn raw_prob(&self, x: f64) -> (f64, bool) {
        let s = sigmoid(self.logit(x));
        (s, s < self.prob_floor || s > 1.0 - self.prob_floor)
    }

    /// Reverse-mode gradient of a loss with upstream `d loss / d forward(x)`.
    pub fn backward(&self, x: f64, upstream: [f64; 2]) -> GradPack {
        let (s, clamped) = self.raw_prob(x);
        let d_eta = upstream[1] - upstream[0];
        if clamped || d_eta == 0.0 {
            return GradPack {
                d_params: vec![0.0; self.params.len()],
                d_input: 0.0,
            };
        }
        self.backward_logit(x, d_eta * s * (1.0 - s))
    }

    /// Reverse-mode gradient given `d loss / d f(x)` directly.
    pub fn backward_logit(&self, x: f64, d_logit: f64) -> GradPack {
        let mut d_params = vec![0.0; self.params.len()];
        let d_input = self.accumulate_logit_grad(x, d_logit, &mut d_params);
        GradPack { d_params, d_input }
    }

    /// Add `d_logit * d f(x) / d theta` into `acc`; returns `d_logit * f'(x)`.
    pub fn accumulate_logit_grad(&self, x: f64, d_logit: f64, acc: &mut [f64]) -> f64 {
        assert_eq!(acc.len(), self.params.len(), "gradient buffer length");
        let n_layers = self.layer_sizes.len() - 1;
        // Inputs to each layer and pre-activations of the hidden layers.
        let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        let mut offsets = Vec::with_capacity(n_layers);
        let mut a = vec![x];
        let mut offset = 0;
        for w in self.layer_sizes.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            offsets.push(offset);
            let z = affine(
                &self.params[offset..offset + n_in * n_out + n_out],
                n_in,
                n_out,
                &a,
            );
            offset += n_in * n_out + n_out;
            inputs.push(a);
            a = z.iter().map(|&v| self.activation.apply(v)).collect();
            pre.push(z);
        }
        let mut delta = vec![d_logit];
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let off = offsets[l];
            let input = &inputs[l];
            for o in 0..n_out {
                let row = &mut acc[off + o * n_in..off + (o + 1) * n_in];
                for (g, v) in row.iter_mut().zip(input) {
                    *g += delta[o] * v;
                }
                acc[off + n_in * n_out + o] += delta[o];
            }
            let weights = &self.params[off..off + n_in * n_out];
            let mut d_in = vec![0.0; n_in];
            for o in 0..n_out {
                for i in 0..n_in {
                    d_in[i] += weights[o * n_in + i] * delta[o];
                }
            }
            if l == 0 {
                return d_in[0];
            }
            let z_prev = &pre[l - 1];
            delta = d_in
                .iter()
                .zip(z_prev)
                .zip(input)
                .map(|((d, z), act)| d * self.activation.slope(*z, *act))
                .collect();
        }
        unreachable!("at least one layer")
    }

    /// `(eta_hat(x), d eta_hat / d f(x))`; the slope is zero when clamped.
    pub fn prob_and_slope(&self, x: f64) -> (f64, f64) {
        let (s, clamped) = self.raw_prob(x);
        if clamped {
            (s.clamp(self.prob_floor, 1.0 - self.prob_floor), 0.0)
        } else {
            (s, s * (1.0 - s))
        }
    }

    /// Is the floor clamp active at `x`?
    pub fn clamped_at(&self, x: f64) -> bool {
        self.raw_prob(x).1
    }
}

impl Classifier for MlpModel {
    fn prob_one(&self, x: f64) -> f64 {
        let s = sigmoid(self.logit(x));
        s.clamp(self.prob_floor, 1.0 - self.prob_floor)
    }

    fn prob_one_dx(&self, x: f64) -> f64 {
        let (z, dz) = self.logit_and_dx(x);
        let s = sigmoid(z);
        if s < self.prob_floor || s > 1.0 - self.prob_floor {
            0.0
        } else {
            s * (1.0 - s) * dz
        }
    }
}

/// `W a + b` for one layer's parameter block.
fn affine(block: &[f64], n_in: usize, n_out: usize, a: &[f64]) -> Vec<f64> {
    let (weights, bias) = block.split_at(n_in * n_out);
    (0..n_out)
        .map(|o| {
            let row = &weights[o * n_in..(o + 1) * n_in];
            let mut s = bias[o];
            for (w, v) in row.iter().zip(a) {
                s += w * v;
            }
            s
        })
        .collect()
}

/// `sum_y d p_theta(y | x) / dx` from the two reverse passes. Zero up to
/// rounding whenever the clamp is inactive.
pub fn prob_grad_sum_zero(model: &MlpModel, x: f64) -> f64 {
    model.backward(x, [1.0, 0.0]).d_input + model.backward(x, [0.0, 1.0]).d_input
}

/// The data conditional itself.
#[derive(Debug, Clone, Copy)]
pub struct OracleModel<'a> {
    pub dist: &'a ToyDist,
}

impl Classifier for OracleModel<'_> {
    fn prob_one(&self, x: f64) -> f64 {
        self.dist.eta(x)
    }

    fn prob_one_dx(&self, x: f64) -> f64 {
        self.dist.eta_dx(x)
    }
}

/// `0.5 + (eta(x) - 0.5) / temperature`: the data conditional pulled toward
/// one half, so it never exceeds the data on the data's own label.
#[derive(Debug, Clone, Copy)]
pub struct TemperedOracle<'a> {
    pub dist: &'a ToyDist,
    pub temperature: f64,
}

impl Classifier for TemperedOracle<'_> {
    fn prob_one(&self, x: f64) -> f64 {
        0.5 + (self.dist.eta(x) - 0.5) / self.temperature
    }

    fn prob_one_dx(&self, x: f64) -> f64 {
        self.dist.eta_dx(x) / self.temperature
    }
}

/// `eta_hat(x) = value` everywhere.
#[derive(Debug, Clone, Copy)]
pub struct ConstantModel(pub f64);

impl Classifier for ConstantModel {
    fn prob_one(&self, _x: f64) -> f64 {
        self.0
    }

    fn prob_one_dx(&self, _x: f64) -> f64 {
        0.0
    }
}

/// `eta_hat(x) = sigmoid(slope * x + offset)`.
#[derive(Debug, Clone, Copy)]
pub struct LogisticModel {
    pub slope: f64,
    pub offset: f64,
}

impl Classifier for LogisticModel {
    fn prob_one(&self, x: f64) -> f64 {
        sigmoid(self.slope * x + self.offset)
    }

    fn prob_one_dx(&self, x: f64) -> f64 {
        let s = self.prob_one(x);
        self.slope * s * (1.0 - s)
    }
}

/// `(1 - lambda) * eta(x) + lambda * inner(x)`.
#[derive(Debug, Clone, Copy)]
pub struct BlendModel<'a, M> {
    pub dist: &'a ToyDist,
    pub inner: &'a M,
    pub lambda: f64,
}

impl<M: Classifier> Classifier for BlendModel<'_, M> {
    fn prob_one(&self, x: f64) -> f64 {
        (1.0 - self.lambda) * self.dist.eta(x) + self.lambda * self.inner.prob_one(x)
    }

    fn prob_one_dx(&self, x: f64) -> f64 {
        (1.0 - self.lambda) * self.dist.eta_dx(x) + self.lambda * self.inner.prob_one_dx(x)
    }
}
