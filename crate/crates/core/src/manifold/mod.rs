//! Locally linear embedding, the PCA baseline, and feature augmentation.

mod cache;
mod lle;
mod pca;

pub use cache::{cache_key, CachedEmbedding, EmbedMethod, EmbeddingCache};
pub use lle::{
    lle_embed, lle_embed_with, lle_weights, lle_weights_with, LleWeights, REGULARIZATION,
};
pub use pca::pca_embed;

use ndarray::{concatenate, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::neighbors::knn;
use crate::pointset::PointCloud;

/// Low-dimensional coordinates plus the spectral diagnostics that produced
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingResult {
    /// n×d coordinates, one unit-norm column per retained eigenvector (LLE)
    /// or principal direction (PCA).
    pub coords: Array2<f64>,
    /// LLE: the d+1 smallest eigenvalues of M, ascending.
    /// PCA: the top-d variances, descending.
    pub eigenvalues: Vec<f64>,
    /// LLE: Σ_i ‖y_i − Σ_j W_ij y_j‖². PCA: squared reconstruction error of
    /// the centered points from d components.
    pub residual: f64,
}

/// Per-point feature vectors with named channels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Array2<f64>,
    pub layout: Vec<String>,
}

impl FeatureMatrix {
    pub fn width(&self) -> usize {
        self.values.ncols()
    }

    /// The raw xyz channels of a cloud.
    pub fn xyz(cloud: &PointCloud) -> Self {
        FeatureMatrix {
            values: cloud.points.clone(),
            layout: vec!["x".into(), "y".into(), "z".into()],
        }
    }

    /// Appends `extra` columns under the given channel names.
    pub fn concat(&self, extra: ArrayView2<f64>, names: &[&str]) -> Result<Self> {
        if extra.nrows() != self.values.nrows() || extra.ncols() != names.len() {
            return Err(Error::InvalidInput(format!(
                "cannot append {:?} columns named {names:?} to {} rows",
                extra.dim(),
                self.values.nrows()
            )));
        }
        let values =
            concatenate(Axis(1), &[self.values.view(), extra]).expect("row counts checked");
        let mut layout = self.layout.clone();
        layout.extend(names.iter().map(|s| s.to_string()));
        Ok(FeatureMatrix { values, layout })
    }
}

/// (x, y, z, lle_u, lle_v) features from a 2D locally linear embedding.
pub fn augment_lle(cloud: &PointCloud, k: usize) -> Result<FeatureMatrix> {
    let embedding = lle_embed(cloud, k, 2)?;
    FeatureMatrix::xyz(cloud).concat(embedding.coords.view(), &["lle_u", "lle_v"])
}

/// Mean fraction of each point's `k` nearest neighbors in `a` that are also
/// among its `k` nearest neighbors in `b`.
pub fn neighborhood_overlap(a: ArrayView2<f64>, b: ArrayView2<f64>, k: usize) -> Result<f64> {
    if a.nrows() != b.nrows() {
        return Err(Error::InvalidInput(format!(
            "overlap needs equal point counts, got {} and {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let ga = knn(a, k)?;
    let gb = knn(b, k)?;
    let shared: usize = ga
        .rows()
        .zip(gb.rows())
        .map(|(ra, rb)| ra.iter().filter(|j| rb.contains(j)).count())
        .sum();
    Ok(shared as f64 / (a.nrows() * k) as f64)
}
