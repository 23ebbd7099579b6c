use ndarray::{Array2, Axis};

use super::EmbeddingResult;
use crate::error::{Error, Result};
use crate::linalg::{canonicalize_signs, symmetric_eigen};
use crate::pointset::PointCloud;

/// Projects the centered points onto their top-`d` principal directions.
pub fn pca_embed(cloud: &PointCloud, d: usize) -> Result<EmbeddingResult> {
    let n = cloud.len();
    if n < 2 {
        return Err(Error::InsufficientPoints { needed: 2, got: n });
    }
    if d == 0 || d > 3 {
        return Err(Error::InvalidInput(format!(
            "PCA dimension must be in 1..=3, got {d}"
        )));
    }
    let mean = cloud.points.mean_axis(Axis(0)).expect("non-empty");
    let centered = &cloud.points - &mean;
    let covariance = centered.t().dot(&centered) / (n as f64 - 1.0);
    let (values, vectors) = symmetric_eigen(&covariance)?;

    // ascending from the solver; take the largest d
    let top: Vec<usize> = (0..3).rev().take(d).collect();
    let mut basis = Array2::zeros((3, d));
    for (col, &k) in top.iter().enumerate() {
        basis.column_mut(col).assign(&vectors.column(k));
    }
    let mut coords = centered.dot(&basis);
    // fix signs on the projections, then carry the flips into the basis
    let before = coords.clone();
    canonicalize_signs(&mut coords);
    for c in 0..d {
        if coords.column(c) != before.column(c) {
            basis.column_mut(c).mapv_inplace(|v| -v);
        }
    }
    let recon = coords.dot(&basis.t());
    let residual = (&centered - &recon).iter().map(|v| v * v).sum();
    Ok(EmbeddingResult {
        coords,
        eigenvalues: top.iter().map(|&k| values[k].max(0.0)).collect(),
        residual,
    })
}
