//! Central finite-difference gradient checking.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::softmax_cross_entropy;
use super::model::{Batch, Model};
use super::Mode;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub entries: Vec<GradCheckEntry>,
    /// Entries dropped because a perturbation crossed a kink, tie or
    /// neighbor-set change.
    pub skipped: usize,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&GradCheckEntry> {
        self.entries
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }

    pub fn failures(&self) -> impl Iterator<Item = &GradCheckEntry> {
        self.entries
            .iter()
            .filter(|e| !(e.rel_error <= self.tolerance))
    }

    pub fn passed(&self) -> bool {
        !self.entries.is_empty() && self.failures().next().is_none()
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares `analytic[i]` against central differences of `f` for every
/// requested index. `f` returns the scalar output together with a
/// fingerprint of its discrete branch choices; an entry whose perturbed
/// evaluations land on a different branch than the base point is skipped.
pub fn grad_check<F>(
    mut f: F,
    inputs: &[f64],
    analytic: &[f64],
    indices: &[usize],
    h: f64,
    tolerance: f64,
) -> GradCheckReport
where
    F: FnMut(&[f64]) -> (f64, u64),
{
    let (_, base) = f(inputs);
    let mut x = inputs.to_vec();
    let mut entries = Vec::with_capacity(indices.len());
    let mut skipped = 0;
    for &i in indices {
        x[i] = inputs[i] + h;
        let (plus, fp_plus) = f(&x);
        x[i] = inputs[i] - h;
        let (minus, fp_minus) = f(&x);
        x[i] = inputs[i];
        if fp_plus != base || fp_minus != base {
            skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * h);
        entries.push(GradCheckEntry {
            index: i,
            analytic: analytic[i],
            numeric,
            rel_error: relative_error(analytic[i], numeric),
        });
    }
    GradCheckReport {
        tolerance,
        entries,
        skipped,
    }
}

/// Loss of `model` on `batch` in training mode with a fixed dropout seed.
pub fn model_loss(model: &mut Model, batch: &Batch, seed: u64) -> Result<(f64, u64)> {
    let logits = model.forward(batch, Mode::Train { seed })?;
    let (loss, _) = softmax_cross_entropy(&logits, &batch.labels)?;
    Ok((loss, model.branch_fingerprint()))
}

/// End-to-end check of every parameter tensor of `model`, drawing up to
/// `per_tensor` entries from each and resampling entries that sit on a
/// branch boundary.
pub fn check_model(
    model: &mut Model,
    batch: &Batch,
    seed: u64,
    per_tensor: usize,
    h: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    model.zero_grad();
    let logits = model.forward(batch, Mode::Train { seed })?;
    let (_, grad) = softmax_cross_entropy(&logits, &batch.labels)?;
    model.backward(&grad)?;
    let analytic = model.grad_vector();
    let params = model.param_vector();

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut indices = Vec::new();
    let mut offset = 0;
    for (_, (rows, cols)) in model.parameter_shapes() {
        let len = rows * cols;
        let take = (3 * per_tensor).min(len);
        indices.extend(sample(&mut rng, len, take).into_iter().map(|i| i + offset));
        offset += len;
    }

    let mut eval_error = None;
    let mut report = grad_check(
        |p| {
            model.set_param_vector(p);
            match model_loss(model, batch, seed) {
                Ok(v) => v,
                Err(e) => {
                    eval_error.get_or_insert(e);
                    (f64::NAN, 0)
                }
            }
        },
        &params,
        &analytic,
        &indices,
        h,
        tolerance,
    );
    model.set_param_vector(&params);
    if let Some(e) = eval_error {
        return Err(e);
    }

    // keep at most `per_tensor` surviving entries per tensor
    let mut bounds = Vec::new();
    let mut start = 0;
    for (_, (rows, cols)) in model.parameter_shapes() {
        bounds.push(start..start + rows * cols);
        start += rows * cols;
    }
    let mut kept = vec![0usize; bounds.len()];
    report.entries.retain(|e| {
        let t = bounds
            .iter()
            .position(|b| b.contains(&e.index))
            .expect("index in range");
        kept[t] += 1;
        kept[t] <= per_tensor
    });
    Ok(report)
}
