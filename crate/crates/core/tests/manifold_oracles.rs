//! Independent dense oracles for the LLE and PCA routines.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use pointmanifold::manifold::{lle_embed, lle_weights, pca_embed, REGULARIZATION};
use pointmanifold::neighbors::knn;
use pointmanifold::pointset::{generate_shape, standardize, PointCloud, ShapeClass};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Minimizes ‖p_i − Σ w_j p_j‖² + r‖w‖² subject to Σ w_j = 1 through the
/// full KKT system, solved with nalgebra's LU.
fn kkt_weights(cloud: &PointCloud, i: usize, hood: &[usize]) -> DVector<f64> {
    let k = hood.len();
    let z = DMatrix::from_fn(k, 3, |a, c| {
        cloud.points[[hood[a], c]] - cloud.points[[i, c]]
    });
    let mut gram = &z * z.transpose();
    let r = REGULARIZATION * gram.trace();
    for a in 0..k {
        gram[(a, a)] += r;
    }
    let mut kkt = DMatrix::zeros(k + 1, k + 1);
    kkt.view_mut((0, 0), (k, k)).copy_from(&(gram * 2.0));
    for a in 0..k {
        kkt[(a, k)] = 1.0;
        kkt[(k, a)] = 1.0;
    }
    let mut rhs = DVector::zeros(k + 1);
    rhs[k] = 1.0;
    let sol = kkt.lu().solve(&rhs).expect("KKT system is nonsingular");
    sol.rows(0, k).into_owned()
}

fn reconstruction(cloud: &PointCloud, i: usize, hood: &[usize], w: &[f64]) -> f64 {
    (0..3)
        .map(|c| {
            let approx: f64 = hood
                .iter()
                .zip(w)
                .map(|(&j, wj)| wj * cloud.points[[j, c]])
                .sum();
            (cloud.points[[i, c]] - approx).powi(2)
        })
        .sum()
}

#[test]
fn weights_match_kkt_oracle_on_planar_cloud() {
    let cloud = standardize(&generate_shape(ShapeClass::PlanePatch, 10, 0.0, 21).unwrap()).unwrap();
    let w = lle_weights(&cloud, 4).unwrap();
    for i in 0..cloud.len() {
        let hood = w.neighbors.row(i);
        let oracle = kkt_weights(&cloud, i, hood);
        let ours: Vec<f64> = w.weights.row(i).to_vec();
        for (a, b) in ours.iter().zip(oracle.iter()) {
            assert!((a - b).abs() <= 1e-8, "point {i}: {a} vs {b}");
        }
        let oracle_err = reconstruction(&cloud, i, hood, oracle.as_slice());
        assert!(reconstruction(&cloud, i, hood, &ours) <= oracle_err + 1e-10);
    }
}

#[test]
fn weights_match_kkt_oracle_on_noisy_cloud() {
    let cloud = standardize(&generate_shape(ShapeClass::Torus, 60, 0.02, 2).unwrap()).unwrap();
    let w = lle_weights(&cloud, 7).unwrap();
    for i in 0..cloud.len() {
        let oracle = kkt_weights(&cloud, i, w.neighbors.row(i));
        for (a, b) in w.weights.row(i).iter().zip(oracle.iter()) {
            assert!((a - b).abs() <= 1e-8);
        }
    }
}

/// Largest per-entry deviation between two column sets, allowing a sign
/// flip per column.
fn max_dev_up_to_sign(ours: &Array2<f64>, oracle: &DMatrix<f64>, cols: &[usize]) -> f64 {
    let mut worst: f64 = 0.0;
    for (c, &oc) in cols.iter().enumerate() {
        let plus = (0..ours.nrows())
            .map(|r| (ours[[r, c]] - oracle[(r, oc)]).abs())
            .fold(0.0, f64::max);
        let minus = (0..ours.nrows())
            .map(|r| (ours[[r, c]] + oracle[(r, oc)]).abs())
            .fold(0.0, f64::max);
        worst = worst.max(plus.min(minus));
    }
    worst
}

fn sorted_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

#[test]
fn lle_embedding_matches_dense_eigen_oracle() {
    let cloud = standardize(&generate_shape(ShapeClass::SwissRoll, 300, 0.01, 3).unwrap()).unwrap();
    let ours = lle_embed(&cloud, 12, 2).unwrap();
    let w = lle_weights(&cloud, 12).unwrap();
    let i_minus_w = DMatrix::identity(cloud.len(), cloud.len()) - to_na(&w.to_dense());
    let m = i_minus_w.transpose() * i_minus_w;
    let (values, vectors) = sorted_eigen(&m);
    for (a, b) in ours.eigenvalues.iter().zip(&values) {
        assert!((a - b).abs() <= 1e-10);
    }
    let dev = max_dev_up_to_sign(&ours.coords, &vectors, &[1, 2]);
    assert!(dev <= 1e-6, "max deviation {dev}");
}

#[test]
fn cost_matrix_matches_dense_product() {
    let cloud = standardize(&generate_shape(ShapeClass::Cone, 80, 0.01, 5).unwrap()).unwrap();
    let w = lle_weights(&cloud, 9).unwrap();
    let i_minus_w = DMatrix::identity(80, 80) - to_na(&w.to_dense());
    let dense = i_minus_w.transpose() * i_minus_w;
    let ours = w.cost_matrix();
    for i in 0..80 {
        for j in 0..80 {
            assert!((ours[[i, j]] - dense[(i, j)]).abs() <= 1e-12);
        }
    }
}

#[test]
fn pca_matches_svd_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let points = Array2::from_shape_fn((50, 3), |(_, c)| {
        rng.random_range(-1.0..1.0) * (3.0 - c as f64)
    });
    let cloud = PointCloud::new(points, None, "pca").unwrap();
    let ours = pca_embed(&cloud, 2).unwrap();

    let x = to_na(&cloud.points);
    let mean = x.row_mean();
    let centered = DMatrix::from_fn(50, 3, |r, c| x[(r, c)] - mean[c]);
    let svd = centered.clone().svd(true, true);
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let v_t = svd.v_t.unwrap();
    let projections = DMatrix::from_fn(50, 2, |r, c| {
        (0..3)
            .map(|k| centered[(r, k)] * v_t[(order[c], k)])
            .sum::<f64>()
    });
    assert!(max_dev_up_to_sign(&ours.coords, &projections, &[0, 1]) <= 1e-8);
    for (c, &k) in order.iter().take(2).enumerate() {
        let var = svd.singular_values[k].powi(2) / 49.0;
        assert!((ours.eigenvalues[c] - var).abs() <= 1e-10);
    }
}

#[test]
fn lle_minimizes_objective_over_random_orthonormal_frames() {
    let cloud = standardize(&generate_shape(ShapeClass::SwissRoll, 200, 0.01, 8).unwrap()).unwrap();
    let e = lle_embed(&cloud, 12, 2).unwrap();
    let w = lle_weights(&cloud, 12).unwrap();
    let n = cloud.len();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..25 {
        // random n×2 frame orthonormal and orthogonal to the constant vector
        let raw = DMatrix::from_fn(n, 3, |_, c| {
            if c == 0 {
                1.0
            } else {
                rng.random_range(-1.0..1.0)
            }
        });
        let q = raw.qr().q();
        let y = Array2::from_shape_fn((n, 2), |(r, c)| q[(r, c + 1)]);
        assert!(e.residual <= w.reconstruction_error(&y));
    }
}

#[test]
fn lle_beats_pca_on_swiss_roll_neighborhoods() {
    use pointmanifold::manifold::neighborhood_overlap;
    use pointmanifold::pointset::generate_shape_with_params;
    let (raw, params) = generate_shape_with_params(ShapeClass::SwissRoll, 800, 0.01, 3).unwrap();
    let cloud = standardize(&raw).unwrap();
    let lle = lle_embed(&cloud, 12, 2).unwrap();
    let pca = pca_embed(&cloud, 2).unwrap();
    let lle_score = neighborhood_overlap(lle.coords.view(), params.view(), 12).unwrap();
    let pca_score = neighborhood_overlap(pca.coords.view(), params.view(), 12).unwrap();
    assert!(lle_score >= pca_score, "lle {lle_score} vs pca {pca_score}");
}

#[test]
fn knn_rows_sorted_on_swiss_roll() {
    let cloud = generate_shape(ShapeClass::SwissRoll, 100, 0.0, 1).unwrap();
    let g = knn(cloud.points.view(), 5).unwrap();
    assert_eq!(g.len(), 100);
}
