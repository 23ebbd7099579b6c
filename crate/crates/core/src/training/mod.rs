//! SGD training with cosine annealing, evaluation metrics and the ablation
//! grid.

mod ablation;
mod metrics;
mod trainer;

pub use ablation::{ablation_csv, ablation_grid, run_ablation, AblationResult, AblationRow};
pub use metrics::{evaluate, MetricsReport, PerClass};
pub use trainer::{epoch_csv, prepare, train, EpochRecord, LleSource, PreparedData, TrainOutcome};

use std::f64::consts::PI;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::network::{ArchitectureSpec, Augmentation, Model};

/// Optimization settings. `t`, `k_edgeconv` and `dropout` override the
/// corresponding architecture fields when a run starts.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub momentum: f64,
    pub dropout: f64,
    pub seed: u64,
    pub k_edgeconv: usize,
    pub k_lle: usize,
    pub t: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 250,
            batch_size: 32,
            lr0: 0.1,
            momentum: 0.9,
            dropout: 0.5,
            seed: 0,
            k_edgeconv: 20,
            k_lle: 12,
            t: 1,
        }
    }
}

impl TrainConfig {
    /// Defaults with the epoch budget used for each augmentation family.
    pub fn for_augmentation(augmentation: Augmentation) -> Self {
        let epochs = if augmentation.uses_mp() { 300 } else { 250 };
        TrainConfig {
            epochs,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs),
            ("k_edgeconv", self.k_edgeconv),
            ("k_lle", self.k_lle),
            ("t", self.t),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidInput(format!("{name} must be positive")));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidInput(format!(
                "batch_size must be at least 2 for batch statistics, got {}",
                self.batch_size
            )));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "lr0 must be positive, got {}",
                self.lr0
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidInput(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidInput(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lr0", self.lr0.to_string()),
            ("momentum", self.momentum.to_string()),
            ("dropout", self.dropout.to_string()),
            ("seed", self.seed.to_string()),
            ("k_edgeconv", self.k_edgeconv.to_string()),
            ("k_lle", self.k_lle.to_string()),
            ("t", self.t.to_string()),
        ]
    }

    /// Applies one `key=value` setting; returns false for keys this type
    /// does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::InvalidInput(format!("invalid value '{value}' for {key}")))
        }
        match key {
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "lr0" => self.lr0 = parse(key, value)?,
            "momentum" => self.momentum = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "k_edgeconv" => self.k_edgeconv = parse(key, value)?,
            "k_lle" => self.k_lle = parse(key, value)?,
            "t" => self.t = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// `spec` with this configuration's width multiplier, graph size and
    /// dropout rate.
    pub fn architecture(&self, spec: &ArchitectureSpec) -> ArchitectureSpec {
        ArchitectureSpec {
            t: self.t,
            k: self.k_edgeconv,
            dropout_rate: self.dropout,
            ..spec.clone()
        }
    }
}

/// Cosine-annealed learning rate for `epoch` in `0..epochs`, decaying from
/// `lr0` towards `lr0 / 1000`.
pub fn cosine_lr(epoch: usize, epochs: usize, lr0: f64) -> f64 {
    let lr_min = lr0 * 1e-3;
    lr_min + 0.5 * (lr0 - lr_min) * (1.0 + (PI * epoch as f64 / epochs as f64).cos())
}

/// One heavy-ball step: `v <- momentum * v + g`, `p <- p - lr * v`.
pub fn sgd_momentum_step(
    params: &mut Array2<f64>,
    grads: &Array2<f64>,
    velocity: &mut Array2<f64>,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    if params.dim() != grads.dim() || params.dim() != velocity.dim() {
        return Err(Error::contract(
            "sgd",
            format!(
                "shape mismatch: params {:?}, grads {:?}, velocity {:?}",
                params.dim(),
                grads.dim(),
                velocity.dim()
            ),
        ));
    }
    velocity.zip_mut_with(grads, |v, &g| *v = momentum * *v + g);
    params.scaled_add(-lr, velocity);
    Ok(())
}

/// Momentum buffers for every parameter of a model.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub momentum: f64,
    velocity: Vec<Array2<f64>>,
}

impl Sgd {
    pub fn new(model: &mut Model, momentum: f64) -> Self {
        let mut velocity = Vec::new();
        model.visit_params(&mut |_, p| velocity.push(Array2::zeros(p.value.raw_dim())));
        Sgd { momentum, velocity }
    }

    pub fn step(&mut self, model: &mut Model, lr: f64) -> Result<()> {
        let mut i = 0;
        let mut result = Ok(());
        let momentum = self.momentum;
        let velocity = &mut self.velocity;
        model.visit_params(&mut |_, p| {
            if result.is_ok() {
                result = match velocity.get_mut(i) {
                    Some(v) => sgd_momentum_step(&mut p.value, &p.grad, v, lr, momentum),
                    None => Err(Error::contract(
                        "sgd",
                        "model has more parameters than the optimizer",
                    )),
                };
            }
            i += 1;
        });
        result
    }
}
