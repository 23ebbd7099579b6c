//! EdgeConv classifier with optional manifold feature augmentation.
//!
//! Activations are stored as `(clouds·points)×channels` matrices with the
//! points of each cloud in consecutive rows.

pub mod checkpoint;
pub mod edgeconv;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod mp;

use ndarray::Array2;

pub use checkpoint::{load_checkpoint, load_checkpoint_for, save_checkpoint};
pub use edgeconv::{cloud_graphs, EdgeConv};
pub use gradcheck::{grad_check, GradCheckReport};
pub use layers::{softmax, softmax_cross_entropy, BatchNorm, Dropout, Linear, LEAKY_SLOPE};
pub use model::{build_model, ArchitectureSpec, Augmentation, Batch, Model};
pub use mp::MpGate;

/// A learnable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Array2<f64>,
    pub grad: Array2<f64>,
}

impl Param {
    pub fn new(value: Array2<f64>) -> Self {
        let grad = Array2::zeros(value.raw_dim());
        Param { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, dropout seeded from `seed`.
    Train { seed: u64 },
    /// Running statistics, no dropout.
    Eval,
}
