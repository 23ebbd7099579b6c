//! The training loop and dataset preparation.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::metrics::{evaluate, MetricsReport};
use super::{cosine_lr, Sgd, TrainConfig};
use crate::error::{Error, Result};
use crate::manifold::{lle_embed, EmbedMethod, EmbeddingCache};
use crate::network::{
    build_model, softmax_cross_entropy, ArchitectureSpec, Augmentation, Batch, Mode, Model,
};
use crate::pointset::{standardize, Dataset, PointCloud, Split};

/// Where LLE features come from.
#[derive(Debug, Clone, Copy)]
pub enum LleSource<'a> {
    /// No LLE features are prepared.
    Skip,
    /// Computed in memory.
    Compute,
    /// Read from a cache filled beforehand; missing entries are an error.
    Cache(&'a EmbeddingCache),
    /// Read from a cache, computing and storing missing entries.
    CacheOrCompute(&'a EmbeddingCache),
}

/// Standardized clouds with their precomputed per-cloud features.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub clouds: Vec<PointCloud>,
    pub lle: Option<Vec<Array2<f64>>>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub class_names: Vec<String>,
    pub points_per_cloud: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl PreparedData {
    pub fn batch(&self, indices: &[usize]) -> Result<Batch> {
        let clouds: Vec<&PointCloud> = indices.iter().map(|&i| &self.clouds[i]).collect();
        let lle: Option<Vec<&Array2<f64>>> = self
            .lle
            .as_ref()
            .map(|features| indices.iter().map(|&i| &features[i]).collect());
        Batch::new(&clouds, lle.as_deref())
    }
}

/// Standardizes every cloud and attaches LLE coordinates (k neighbors,
/// two dimensions) from `lle`.
pub fn prepare(dataset: &Dataset, lle: LleSource<'_>, k_lle: usize) -> Result<PreparedData> {
    let n = dataset.validate_for_training()?;
    let clouds: Vec<PointCloud> = dataset
        .clouds
        .iter()
        .map(standardize)
        .collect::<Result<_>>()?;
    let embed_one = |cloud: &PointCloud| -> Result<Array2<f64>> {
        let coords = match lle {
            LleSource::Skip => unreachable!("filtered below"),
            LleSource::Compute => lle_embed(cloud, k_lle, 2)?.coords,
            LleSource::Cache(cache) => cache.require(cloud, EmbedMethod::Lle, k_lle, 2)?.coords,
            LleSource::CacheOrCompute(cache) => {
                cache
                    .get_or_compute(cloud, EmbedMethod::Lle, k_lle, 2)?
                    .coords
            }
        };
        Ok(coords)
    };
    let features = match lle {
        LleSource::Skip => None,
        _ => Some(
            clouds
                .par_iter()
                .map(|c| {
                    embed_one(c).map_err(|e| match e {
                        Error::MissingCache { .. } => e,
                        other => {
                            Error::InvalidInput(format!("LLE failed on cloud '{}': {other}", c.id))
                        }
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        ),
    };
    Ok(PreparedData {
        labels: clouds.iter().map(|c| c.label.unwrap_or(0)).collect(),
        clouds,
        lle: features,
        num_classes: dataset.num_classes(),
        class_names: dataset.class_names.clone(),
        points_per_cloud: n,
        train: dataset.indices(Split::Train),
        test: dataset.indices(Split::Test),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub test_oa: f64,
    pub test_ma: f64,
}

/// Renders the epoch log as CSV.
pub fn epoch_csv(log: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,lr,train_loss,test_oa,test_ma\n");
    for r in log {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch, r.lr, r.train_loss, r.test_oa, r.test_ma
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters after the last epoch.
    pub model: Model,
    /// Parameters at the epoch with the highest test oA (earliest on ties).
    pub best_model: Model,
    pub best_epoch: usize,
    pub log: Vec<EpochRecord>,
    pub final_metrics: MetricsReport,
    pub best_metrics: MetricsReport,
}

/// Trains a fresh model. Initialization, shuffling and dropout all derive
/// from `config.seed`.
pub fn train(
    data: &PreparedData,
    config: &TrainConfig,
    spec: &ArchitectureSpec,
    augmentation: Augmentation,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    let spec = config.architecture(spec);
    if spec.num_classes != data.num_classes {
        return Err(Error::InvalidInput(format!(
            "architecture has {} classes but the dataset has {}",
            spec.num_classes, data.num_classes
        )));
    }
    if augmentation.uses_lle() && data.lle.is_none() {
        return Err(Error::InvalidInput(format!(
            "augmentation {augmentation} needs LLE features; prepare the data with an LLE source"
        )));
    }
    if data.train.len() < config.batch_size {
        return Err(Error::InvalidInput(format!(
            "training split has {} clouds, fewer than one batch of {}",
            data.train.len(),
            config.batch_size
        )));
    }
    if data.test.is_empty() {
        return Err(Error::InvalidInput("test split is empty".into()));
    }

    let mut model = build_model(&spec, augmentation, config.seed)?;
    let mut optimizer = Sgd::new(&mut model, config.momentum);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0f_5107);
    let mut order = data.train.clone();
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, Model, MetricsReport)> = None;
    let mut last_metrics = None;

    for epoch in 0..config.epochs {
        let lr = cosine_lr(epoch, config.epochs, config.lr0);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks_exact(config.batch_size).enumerate() {
            let context = |e: Error| match e {
                Error::Numerical(msg) => {
                    Error::Numerical(format!("{msg} at epoch {epoch}, batch {b}, lr {lr}"))
                }
                other => other,
            };
            let batch = data.batch(chunk)?;
            model.zero_grad();
            let logits = model
                .forward(
                    &batch,
                    Mode::Train {
                        seed: rng.next_u64(),
                    },
                )
                .map_err(context)?;
            let (loss, grad) = softmax_cross_entropy(&logits, &batch.labels)?;
            if !loss.is_finite() {
                return Err(context(Error::Numerical(format!(
                    "non-finite training loss {loss}"
                ))));
            }
            model.backward(&grad)?;
            optimizer.step(&mut model, lr)?;
            if model.param_vector().iter().any(|v| !v.is_finite()) {
                return Err(context(Error::Numerical(
                    "parameters diverged to non-finite values".into(),
                )));
            }
            loss_sum += loss;
            batches += 1;
        }
        let metrics = evaluate(&mut model, data, &data.test, config.batch_size)?;
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / batches as f64,
            test_oa: metrics.oa,
            test_ma: metrics.ma,
        };
        on_epoch(&record);
        log.push(record);
        if best.as_ref().is_none_or(|(_, _, m)| metrics.oa > m.oa) {
            best = Some((epoch, model.clone(), metrics.clone()));
        }
        last_metrics = Some(metrics);
    }

    let (best_epoch, best_model, best_metrics) = best.expect("epochs >= 1");
    Ok(TrainOutcome {
        model,
        best_model,
        best_epoch,
        log,
        final_metrics: last_metrics.expect("epochs >= 1"),
        best_metrics,
    })
}
