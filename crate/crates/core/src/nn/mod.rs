//! Dense feed-forward networks trained by back-propagation.
//!
//! Shared by the impression/sound-source regressors (ReLU + Adam) and the
//! image autoencoder (tanh + SGD with momentum). Loss is the mean squared
//! error over all output elements plus an optional `l2 · Σ W²` penalty on
//! weights (biases are not penalized).

mod mlp;
mod serialize;

pub use mlp::{check_gradients, fit, MlpConfig, MlpModel, TrainingMetrics};
pub use serialize::{LayerDoc, ModelDocument, MODEL_FORMAT, MODEL_VERSION};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("empty training data")]
    Empty,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: expected {expected} columns, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("row count mismatch: {x} inputs vs {y} targets")]
    Rows { x: usize, y: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model document: {0}")]
    Document(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
            Activation::Identity => v,
        }
    }

    /// Derivative from the pre-activation `z` and output `a`.
    /// The ReLU subgradient at 0 is 0.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `fan_in × fan_out`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Dense {
    /// Glorot-uniform weights in ±√(6/(fan_in+fan_out)), zero bias.
    pub fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit);
        Self {
            weights: Array2::from_shape_fn((fan_in, fan_out), |_| dist.sample(rng)),
            bias: Array1::zeros(fan_out),
            activation,
        }
    }

    fn pre_activation(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weights) + &self.bias
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Dense>,
}

/// Per-layer gradients, same shapes as the network parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub bias: Vec<Array1<f64>>,
}

struct Trace {
    /// Input to each layer, then the final output.
    activations: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

impl Network {
    /// `widths` lists every layer width including input and output.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Self {
        assert!(widths.len() >= 2, "need at least input and output widths");
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::glorot(w[0], w[1], if i == last { output } else { hidden }, rng))
            .collect();
        Self { layers }
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(|l| l.bias.len()));
        w
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty network").bias.len()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.forward_to(x, self.layers.len())
    }

    /// Output of the first `n_layers` layers.
    pub fn forward_to(&self, x: ArrayView2<f64>, n_layers: usize) -> Array2<f64> {
        let mut a = x.to_owned();
        for l in &self.layers[..n_layers] {
            let mut z = l.pre_activation(&a.view());
            z.mapv_inplace(|v| l.activation.apply(v));
            a = z;
        }
        a
    }

    fn trace(&self, x: ArrayView2<f64>) -> Trace {
        let mut activations = vec![x.to_owned()];
        let mut pre = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let z = l.pre_activation(&activations.last().expect("input present").view());
            activations.push(z.mapv(|v| l.activation.apply(v)));
            pre.push(z);
        }
        Trace { activations, pre }
    }

    fn l2_penalty(&self, l2: f64) -> f64 {
        if l2 == 0.0 {
            return 0.0;
        }
        l2 * self
            .layers
            .iter()
            .map(|l| l.weights.iter().map(|w| w * w).sum::<f64>())
            .sum::<f64>()
    }

    /// Mean squared error over all elements plus the L2 penalty.
    pub fn loss(&self, x: ArrayView2<f64>, y: ArrayView2<f64>, l2: f64) -> f64 {
        mse(&self.forward(x).view(), &y) + self.l2_penalty(l2)
    }

    /// Loss and its gradient with respect to every parameter.
    pub fn loss_and_gradients(&self, x: ArrayView2<f64>, y: ArrayView2<f64>, l2: f64) -> (f64, Gradients) {
        let t = self.trace(x);
        let out = t.activations.last().expect("output present");
        let diff = out - &y;
        let count = diff.len() as f64;
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / count + self.l2_penalty(l2);

        let n = self.layers.len();
        let mut gw = Vec::with_capacity(n);
        let mut gb = Vec::with_capacity(n);
        let mut delta = diff * (2.0 / count);
        for i in (0..n).rev() {
            let layer = &self.layers[i];
            let a = &t.activations[i + 1];
            ndarray::Zip::from(&mut delta)
                .and(&t.pre[i])
                .and(a)
                .for_each(|d, &z, &av| *d *= layer.activation.derivative(z, av));
            let mut w_grad = t.activations[i].t().dot(&delta);
            if l2 != 0.0 {
                w_grad.scaled_add(2.0 * l2, &layer.weights);
            }
            gb.push(delta.sum_axis(Axis(0)));
            gw.push(w_grad);
            if i > 0 {
                delta = delta.dot(&layer.weights.t());
            }
        }
        gw.reverse();
        gb.reverse();
        (loss, Gradients { weights: gw, bias: gb })
    }

    /// All parameters flattened layer by layer (weights row-major, then bias).
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            p.extend(l.weights.iter());
            p.extend(l.bias.iter());
        }
        p
    }

    fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        for l in &mut self.layers {
            let nw = l.weights.len();
            if index < nw {
                let cols = l.weights.ncols();
                return &mut l.weights[[index / cols, index % cols]];
            }
            index -= nw;
            if index < l.bias.len() {
                return &mut l.bias[index];
            }
            index -= l.bias.len();
        }
        panic!("parameter index out of range")
    }

    fn relu_signs(&self, x: ArrayView2<f64>) -> Vec<bool> {
        let t = self.trace(x);
        self.layers
            .iter()
            .zip(&t.pre)
            .filter(|(l, _)| l.activation == Activation::Relu)
            .flat_map(|(_, z)| z.iter().map(|&v| v > 0.0).collect::<Vec<_>>())
            .collect()
    }
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut p = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.bias) {
            p.extend(w.iter());
            p.extend(b.iter());
        }
        p
    }
}

pub fn mse(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> f64 {
    let n = a.len() as f64;
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n
}

/// Parameter update rule.
pub trait Optimizer {
    fn step(&mut self, net: &mut Network, grads: &Gradients);
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Option<Gradients>,
    v: Option<Gradients>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: None,
            v: None,
        }
    }
}

fn zeros_like(g: &Gradients) -> Gradients {
    Gradients {
        weights: g.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
        bias: g.bias.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
    }
}

impl Optimizer for Adam {
    fn step(&mut self, net: &mut Network, g: &Gradients) {
        self.t += 1;
        let m = self.m.get_or_insert_with(|| zeros_like(g));
        let v = self.v.get_or_insert_with(|| zeros_like(g));
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let lr = self.lr;
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for (i, layer) in net.layers.iter_mut().enumerate() {
            ndarray::Zip::from(&mut layer.weights)
                .and(&g.weights[i])
                .and(&mut m.weights[i])
                .and(&mut v.weights[i])
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut layer.bias)
                .and(&g.bias[i])
                .and(&mut m.bias[i])
                .and(&mut v.bias[i])
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
    }
}

/// Plain SGD with classical momentum: `v ← μv − lr·g; p ← p + v`.
#[derive(Debug, Clone)]
pub struct SgdMomentum {
    pub lr: f64,
    pub momentum: f64,
    velocity: Option<Gradients>,
}

impl SgdMomentum {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Self {
            lr,
            momentum,
            velocity: None,
        }
    }
}

impl Optimizer for SgdMomentum {
    fn step(&mut self, net: &mut Network, g: &Gradients) {
        let vel = self.velocity.get_or_insert_with(|| zeros_like(g));
        let (lr, mu) = (self.lr, self.momentum);
        for (i, layer) in net.layers.iter_mut().enumerate() {
            ndarray::Zip::from(&mut layer.weights)
                .and(&g.weights[i])
                .and(&mut vel.weights[i])
                .for_each(|p, &g, v| {
                    *v = mu * *v - lr * g;
                    *p += *v;
                });
            ndarray::Zip::from(&mut layer.bias)
                .and(&g.bias[i])
                .and(&mut vel.bias[i])
                .for_each(|p, &g, v| {
                    *v = mu * *v - lr * g;
                    *p += *v;
                });
        }
    }
}

/// One pass over the data in a shuffled order; the last partial batch is kept.
/// Returns the mean mini-batch loss.
pub fn train_epoch<O: Optimizer, R: Rng + ?Sized>(
    net: &mut Network,
    opt: &mut O,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    l2: f64,
    batch_size: usize,
    rng: &mut R,
) -> f64 {
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    let mut batches = 0usize;
    for chunk in order.chunks(batch_size.max(1)) {
        let xb = x.select(Axis(0), chunk);
        let yb = y.select(Axis(0), chunk);
        let (loss, grads) = net.loss_and_gradients(xb.view(), yb.view(), l2);
        opt.step(net, &grads);
        total += loss;
        batches += 1;
    }
    total / batches as f64
}

/// Outcome of comparing analytic and finite-difference gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Parameters skipped because a ±h perturbation moved a ReLU across its kink.
    pub skipped_at_kinks: usize,
}

/// Central finite differences with step `h` against back-propagation.
///
/// Relative error is `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn gradient_check(net: &Network, x: ArrayView2<f64>, y: ArrayView2<f64>, l2: f64, h: f64) -> GradCheckReport {
    let (_, grads) = net.loss_and_gradients(x, y, l2);
    let analytic = grads.flatten();
    let base_signs = net.relu_signs(x);
    let mut probe = net.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        checked: 0,
        skipped_at_kinks: 0,
    };
    for (i, &a) in analytic.iter().enumerate() {
        let orig = *probe.param_mut(i);
        *probe.param_mut(i) = orig + h;
        let plus = probe.loss(x, y, l2);
        let kink_plus = probe.relu_signs(x) != base_signs;
        *probe.param_mut(i) = orig - h;
        let minus = probe.loss(x, y, l2);
        let kink_minus = probe.relu_signs(x) != base_signs;
        *probe.param_mut(i) = orig;
        if kink_plus || kink_minus {
            report.skipped_at_kinks += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * h);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        report.max_relative_error = report.max_relative_error.max(rel);
        report.checked += 1;
    }
    report
}

/// Per-column mean and standard deviation. Columns with zero spread keep std 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<f64>) -> Self {
        let n = x.nrows() as f64;
        let mean: Vec<f64> = x.mean_axis(Axis(0)).map(|m| m.to_vec()).unwrap_or_default();
        let std = x
            .axis_iter(Axis(1))
            .zip(&mean)
            .map(|(col, m)| {
                let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
                let s = var.sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    /// True when every column had zero spread.
    pub fn is_degenerate(x: ArrayView2<f64>) -> bool {
        x.axis_iter(Axis(1)).all(|col| {
            let first = col[0];
            col.iter().all(|&v| v == first)
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        out
    }

    pub fn inverse(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * s + m;
            }
        }
        out
    }
}

pub(crate) fn check_finite(x: ArrayView2<f64>, what: &'static str) -> Result<(), NnError> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NnError::NonFinite(what))
    }
}
