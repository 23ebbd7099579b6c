//! Layer primitives with hand-written backward passes.
//!
//! Activations are row-major `rows × channels` matrices; a batch of point
//! clouds is stacked cloud after cloud into one matrix.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::Param;
use crate::error::{Error, Result};

/// Negative slope of every LeakyReLU in the network.
pub const LEAKY_SLOPE: f64 = 0.2;

pub fn leaky_relu(x: &Array2<f64>, slope: f64) -> Array2<f64> {
    x.mapv(|v| if v > 0.0 { v } else { slope * v })
}

/// Gradient through LeakyReLU given its input `x`; the derivative at 0 is
/// taken as `slope`.
pub fn leaky_relu_backward(x: &Array2<f64>, grad_out: &Array2<f64>, slope: f64) -> Array2<f64> {
    let mut g = grad_out.clone();
    g.zip_mut_with(x, |g, &v| {
        if v <= 0.0 {
            *g *= slope
        }
    });
    g
}

/// Fully connected layer `y = x Wᵀ + b` with W stored out×in.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Param,
    pub bias: Option<Param>,
}

impl Linear {
    /// Glorot-uniform weights, zero bias.
    pub fn new(inputs: usize, outputs: usize, bias: bool, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weight = Array2::from_shape_fn((outputs, inputs), |_| rng.random_range(-limit..limit));
        Linear {
            weight: Param::new(weight),
            bias: bias.then(|| Param::new(Array2::zeros((1, outputs)))),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.nrows()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.inputs() {
            return Err(Error::contract(
                "linear",
                format!(
                    "expected {} input channels, got {}",
                    self.inputs(),
                    x.ncols()
                ),
            ));
        }
        let mut y = x.dot(&self.weight.value.t());
        if let Some(b) = &self.bias {
            y += &b.value.row(0);
        }
        Ok(y)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Array2<f64>, grad_out: &Array2<f64>) -> Array2<f64> {
        self.weight.grad += &grad_out.t().dot(x);
        if let Some(b) = &mut self.bias {
            let mut row = b.grad.row_mut(0);
            row += &grad_out.sum_axis(Axis(0));
        }
        grad_out.dot(&self.weight.value)
    }

    pub fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&format!("{prefix}.weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(&format!("{prefix}.bias"), b);
        }
    }
}

/// Per-channel batch normalization over all rows.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<BnCache>,
}

#[derive(Debug, Clone)]
struct BnCache {
    normalized: Array2<f64>,
    inv_std: Array1<f64>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: Param::new(Array2::ones((1, channels))),
            beta: Param::new(Array2::zeros((1, channels))),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.ncols()
    }

    /// Normalizes with batch statistics and updates the running averages.
    pub fn forward_train(&mut self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check(x)?;
        let rows = x.nrows();
        if rows < 2 {
            return Err(Error::InvalidState(format!(
                "batch norm in training mode needs at least 2 rows, got {rows}"
            )));
        }
        let mean = x.mean_axis(Axis(0)).expect("rows >= 2");
        let centered = x - &mean;
        let var = centered
            .mapv(|v| v * v)
            .mean_axis(Axis(0))
            .expect("rows >= 2");
        let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        let normalized = &centered * &inv_std;

        let unbiased = &var * (rows as f64 / (rows as f64 - 1.0));
        self.running_mean = &self.running_mean * (1.0 - self.momentum) + &mean * self.momentum;
        self.running_var = &self.running_var * (1.0 - self.momentum) + &unbiased * self.momentum;

        let y = &normalized * &self.gamma.value.row(0) + &self.beta.value.row(0);
        self.cache = Some(BnCache {
            normalized,
            inv_std,
        });
        Ok(y)
    }

    /// Normalizes with the running statistics.
    pub fn forward_eval(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check(x)?;
        let scale = &self.gamma.value.row(0) / &self.running_var.mapv(|v| (v + self.eps).sqrt());
        let shift = &self.beta.value.row(0) - &(&self.running_mean * &scale);
        Ok(x * &scale + &shift)
    }

    pub fn backward(&mut self, grad_out: &Array2<f64>) -> Result<Array2<f64>> {
        let cache = self.cache.as_ref().ok_or_else(|| {
            Error::InvalidState("batch norm backward without a training forward".into())
        })?;
        let rows = grad_out.nrows() as f64;
        {
            let mut gg = self.gamma.grad.row_mut(0);
            gg += &(grad_out * &cache.normalized).sum_axis(Axis(0));
            let mut bg = self.beta.grad.row_mut(0);
            bg += &grad_out.sum_axis(Axis(0));
        }
        let dnorm = grad_out * &self.gamma.value.row(0);
        let sum_d = dnorm.sum_axis(Axis(0));
        let sum_dx = (&dnorm * &cache.normalized).sum_axis(Axis(0));
        let mut dx = &dnorm * rows - &sum_d - &(&cache.normalized * &sum_dx);
        dx *= &(&cache.inv_std / rows);
        Ok(dx)
    }

    fn check(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.channels() {
            return Err(Error::contract(
                "batchnorm",
                format!("expected {} channels, got {}", self.channels(), x.ncols()),
            ));
        }
        Ok(())
    }

    pub fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&format!("{prefix}.gamma"), &mut self.gamma);
        f(&format!("{prefix}.beta"), &mut self.beta);
    }

    pub fn visit_buffers(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Array1<f64>)) {
        f(&format!("{prefix}.running_mean"), &mut self.running_mean);
        f(&format!("{prefix}.running_var"), &mut self.running_var);
    }
}

/// Inverted dropout: kept activations are scaled by 1/(1 − rate).
#[derive(Debug, Clone)]
pub struct Dropout {
    pub rate: f64,
    mask: Option<Array2<f64>>,
}

impl Dropout {
    pub fn new(rate: f64) -> Self {
        Dropout { rate, mask: None }
    }

    pub fn forward_train(&mut self, x: &Array2<f64>, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let keep = 1.0 - self.rate;
        let mask = Array2::from_shape_fn(x.raw_dim(), |_| {
            if rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        let y = x * &mask;
        self.mask = Some(mask);
        y
    }

    /// Identity; dropout is inactive outside training.
    pub fn forward_eval(&mut self, x: &Array2<f64>) -> Array2<f64> {
        self.mask = None;
        x.clone()
    }

    pub fn backward(&self, grad_out: &Array2<f64>) -> Array2<f64> {
        match &self.mask {
            Some(m) => grad_out * m,
            None => grad_out.clone(),
        }
    }
}

/// Row-wise softmax.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    p
}

/// Mean cross-entropy of softmax(logits) against integer labels, and its
/// gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    if logits.nrows() != labels.len() {
        return Err(Error::contract(
            "softmax_cross_entropy",
            format!(
                "{} rows of logits but {} labels",
                logits.nrows(),
                labels.len()
            ),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= logits.ncols()) {
        return Err(Error::contract(
            "softmax_cross_entropy",
            format!("label {bad} out of range for {} classes", logits.ncols()),
        ));
    }
    let rows = logits.nrows() as f64;
    let mut grad = softmax(logits);
    let mut loss = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let log_sum = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        loss += log_sum - row[label];
        grad[[i, label]] -= 1.0;
    }
    grad /= rows;
    Ok((loss / rows, grad))
}

/// Channel-wise max over each cloud's `points_per_cloud` consecutive rows.
/// Returns the pooled matrix and, per output entry, the winning row (lowest
/// row on ties).
pub fn global_max_pool(
    x: &Array2<f64>,
    points_per_cloud: usize,
) -> Result<(Array2<f64>, Vec<usize>)> {
    if points_per_cloud == 0 || x.nrows() % points_per_cloud != 0 {
        return Err(Error::contract(
            "global_max_pool",
            format!(
                "{} rows do not split into clouds of {points_per_cloud}",
                x.nrows()
            ),
        ));
    }
    let clouds = x.nrows() / points_per_cloud;
    let channels = x.ncols();
    let mut pooled = Array2::zeros((clouds, channels));
    let mut argmax = vec![0; clouds * channels];
    for b in 0..clouds {
        for c in 0..channels {
            let mut best = b * points_per_cloud;
            for r in best + 1..(b + 1) * points_per_cloud {
                if x[[r, c]] > x[[best, c]] {
                    best = r;
                }
            }
            pooled[[b, c]] = x[[best, c]];
            argmax[b * channels + c] = best;
        }
    }
    Ok((pooled, argmax))
}

pub fn global_max_pool_backward(
    grad_out: &Array2<f64>,
    argmax: &[usize],
    rows: usize,
) -> Array2<f64> {
    let channels = grad_out.ncols();
    let mut grad = Array2::zeros((rows, channels));
    for b in 0..grad_out.nrows() {
        for c in 0..channels {
            grad[[argmax[b * channels + c], c]] += grad_out[[b, c]];
        }
    }
    grad
}
