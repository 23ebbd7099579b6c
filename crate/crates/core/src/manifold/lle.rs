use ndarray::{Array1, Array2};
use rayon::prelude::*;

use super::EmbeddingResult;
use crate::error::{Error, Result};
use crate::linalg::{canonicalize_signs, solve, symmetric_eigen};
use crate::neighbors::{knn, NeighborGraph};
use crate::pointset::PointCloud;

/// Tikhonov factor applied to every local Gram matrix:
/// S ← S + REGULARIZATION · trace(S) · I.
pub const REGULARIZATION: f64 = 1e-3;

const DUPLICATE_JITTER: f64 = 1e-9;

/// Reconstruction weights: row `i` expresses point `i` as an affine
/// combination of its `k` nearest neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct LleWeights {
    pub neighbors: NeighborGraph,
    /// n×k, aligned with `neighbors`.
    pub weights: Array2<f64>,
}

impl LleWeights {
    pub fn len(&self) -> usize {
        self.weights.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.nrows() == 0
    }

    /// (neighbor index, weight) pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let weights = self.weights.row(i);
        self.neighbors
            .row(i)
            .iter()
            .enumerate()
            .map(move |(a, &j)| (j, weights[a]))
    }

    /// Scatters the rows into a dense n×n matrix W.
    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.len();
        let mut w = Array2::zeros((n, n));
        for i in 0..n {
            for (j, wij) in self.row(i) {
                w[[i, j]] += wij;
            }
        }
        w
    }

    /// M = (I − W)ᵀ(I − W), assembled from the sparse rows.
    pub fn cost_matrix(&self) -> Array2<f64> {
        let n = self.len();
        let mut m = Array2::zeros((n, n));
        for i in 0..n {
            m[[i, i]] += 1.0;
            for (j, wij) in self.row(i) {
                m[[i, j]] -= wij;
                m[[j, i]] -= wij;
            }
            for (a, wa) in self.row(i) {
                for (b, wb) in self.row(i) {
                    m[[a, b]] += wa * wb;
                }
            }
        }
        m
    }

    /// Σ_i ‖y_i − Σ_j W_ij y_j‖² for an n×d embedding.
    pub fn reconstruction_error(&self, y: &Array2<f64>) -> f64 {
        (0..self.len())
            .map(|i| {
                let mut r = y.row(i).to_owned();
                for (j, wij) in self.row(i) {
                    r.scaled_add(-wij, &y.row(j));
                }
                r.dot(&r)
            })
            .sum()
    }
}

/// Exact duplicates are nudged by a tiny index-derived offset so every local
/// Gram matrix has a non-zero trace.
fn separate_duplicates(points: &Array2<f64>) -> Array2<f64> {
    let n = points.nrows();
    let mut keys: Vec<usize> = (0..n).collect();
    let row_key = |i: usize| {
        [
            points[[i, 0]].to_bits(),
            points[[i, 1]].to_bits(),
            points[[i, 2]].to_bits(),
        ]
    };
    keys.sort_by_key(|&i| (row_key(i), i));
    let mut out = points.clone();
    for w in keys.windows(2) {
        if row_key(w[0]) == row_key(w[1]) {
            let i = w[1];
            let phase = i as f64 + 1.0;
            out[[i, 0]] += DUPLICATE_JITTER * phase.sin();
            out[[i, 1]] += DUPLICATE_JITTER * (1.7 * phase).cos();
            out[[i, 2]] += DUPLICATE_JITTER * (2.3 * phase).sin();
        }
    }
    out
}

/// Solves the constrained least-squares problem for every point's
/// reconstruction weights, with the default [`REGULARIZATION`].
pub fn lle_weights(cloud: &PointCloud, k: usize) -> Result<LleWeights> {
    lle_weights_with(cloud, k, REGULARIZATION)
}

/// [`lle_weights`] with an explicit Tikhonov factor. Regularized weights are
/// not exact reconstructions even when exact ones exist; the excess
/// reconstruction error scales like `regularization²`.
pub fn lle_weights_with(cloud: &PointCloud, k: usize, regularization: f64) -> Result<LleWeights> {
    if !(regularization > 0.0 && regularization.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "regularization must be positive, got {regularization}"
        )));
    }
    let n = cloud.len();
    if n < k + 1 {
        return Err(Error::InsufficientPoints {
            needed: k + 1,
            got: n,
        });
    }
    let points = separate_duplicates(&cloud.points);
    let neighbors = knn(points.view(), k)?;

    let rows: Vec<Array1<f64>> = (0..n)
        .into_par_iter()
        .map(|i| local_weights(&points, i, neighbors.row(i), regularization))
        .collect::<Result<_>>()?;

    let mut weights = Array2::zeros((n, k));
    for (i, row) in rows.into_iter().enumerate() {
        weights.row_mut(i).assign(&row);
    }
    Ok(LleWeights { neighbors, weights })
}

fn local_weights(
    points: &Array2<f64>,
    i: usize,
    hood: &[usize],
    regularization: f64,
) -> Result<Array1<f64>> {
    let k = hood.len();
    let center = points.row(i);
    let mut diffs = Array2::zeros((k, 3));
    for (a, &j) in hood.iter().enumerate() {
        let d = &points.row(j) - &center;
        diffs.row_mut(a).assign(&d);
    }
    let mut gram = diffs.dot(&diffs.t());
    let trace = gram.diag().sum();
    let reg = if trace > 0.0 {
        regularization * trace
    } else {
        regularization
    };
    for a in 0..k {
        gram[[a, a]] += reg;
    }
    let w = solve(&gram, &Array1::ones(k))
        .map_err(|e| Error::Numerical(format!("local weight solve for point {i}: {e}")))?;
    let total = w.sum();
    if !total.is_finite() || total == 0.0 {
        return Err(Error::Numerical(format!(
            "degenerate weights for point {i}"
        )));
    }
    Ok(w / total)
}

/// Embeds the cloud into `d` dimensions from the bottom eigenvectors of
/// M = (I − W)ᵀ(I − W), skipping the constant null vector.
pub fn lle_embed(cloud: &PointCloud, k: usize, d: usize) -> Result<EmbeddingResult> {
    lle_embed_with(cloud, k, d, REGULARIZATION)
}

pub fn lle_embed_with(
    cloud: &PointCloud,
    k: usize,
    d: usize,
    regularization: f64,
) -> Result<EmbeddingResult> {
    if d == 0 || d >= 3 {
        return Err(Error::InvalidInput(format!(
            "LLE target dimension must be 1 or 2, got {d}"
        )));
    }
    let weights = lle_weights_with(cloud, k, regularization)?;
    if weights.len() < d + 1 {
        return Err(Error::InsufficientPoints {
            needed: d + 1,
            got: weights.len(),
        });
    }
    let m = weights.cost_matrix();
    let (values, vectors) = symmetric_eigen(&m)?;

    let mut coords = vectors.slice(ndarray::s![.., 1..=d]).to_owned();
    canonicalize_signs(&mut coords);
    let residual = weights.reconstruction_error(&coords);
    Ok(EmbeddingResult {
        coords,
        eigenvalues: values.iter().take(d + 1).copied().collect(),
        residual,
    })
}
