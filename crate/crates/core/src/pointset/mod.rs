//! Point clouds, standardization, synthetic shapes, and file I/O.

pub(crate) mod io;
mod shapes;

pub use io::{
    load_cloud, load_dataset, load_manifest, save_cloud, save_dataset, save_manifest, CloudFormat,
    ManifestEntry, CLASS_NAMES_FILE,
};
pub use shapes::{generate_shape, generate_shape_with_params, ShapeClass};

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

/// An unordered set of 3D points with an optional class label.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    /// n×3 coordinates.
    pub points: Array2<f64>,
    pub label: Option<usize>,
    pub id: String,
}

impl PointCloud {
    /// Builds a cloud after checking shape and finiteness.
    pub fn new(points: Array2<f64>, label: Option<usize>, id: impl Into<String>) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(Error::InvalidInput(
                "point cloud must contain at least one point".into(),
            ));
        }
        if points.ncols() != 3 {
            return Err(Error::InvalidInput(format!(
                "point cloud must be n x 3, got n x {}",
                points.ncols()
            )));
        }
        check_finite(&points)?;
        Ok(PointCloud {
            points,
            label,
            id: id.into(),
        })
    }

    pub fn from_rows(rows: &[[f64; 3]]) -> Result<Self> {
        let mut points = Array2::zeros((rows.len(), 3));
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                points[[i, j]] = v;
            }
        }
        PointCloud::new(points, None, "")
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn centroid(&self) -> [f64; 3] {
        let mean = self.points.mean_axis(Axis(0)).expect("non-empty cloud");
        [mean[0], mean[1], mean[2]]
    }

    pub fn max_norm(&self) -> f64 {
        self.points
            .rows()
            .into_iter()
            .map(|r| r.dot(&r).sqrt())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn check_finite(values: &Array2<f64>) -> Result<()> {
    if let Some((idx, v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "non-finite coordinate {v} at row {}, column {}",
            idx.0, idx.1
        )));
    }
    Ok(())
}

/// Centers the cloud on its centroid and scales it into the unit ball so the
/// farthest point has norm 1. A cloud whose points all coincide maps to the
/// origin.
pub fn standardize(cloud: &PointCloud) -> Result<PointCloud> {
    if cloud.is_empty() {
        return Err(Error::InvalidInput(
            "cannot standardize an empty cloud".into(),
        ));
    }
    check_finite(&cloud.points)?;

    let first = cloud.points.row(0);
    if cloud.points.rows().into_iter().all(|r| r == first) {
        return Ok(PointCloud {
            points: Array2::zeros(cloud.points.raw_dim()),
            label: cloud.label,
            id: cloud.id.clone(),
        });
    }

    let centroid = cloud.points.mean_axis(Axis(0)).expect("non-empty cloud");
    let mut points = &cloud.points - &centroid;
    let scale = points
        .rows()
        .into_iter()
        .map(|r| r.dot(&r).sqrt())
        .fold(0.0, f64::max);
    points.mapv_inplace(|v| v / scale);
    Ok(PointCloud {
        points,
        label: cloud.label,
        id: cloud.id.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidInput(format!("unknown split '{other}'"))),
        }
    }
}

/// Labelled clouds with a train/test tag per cloud.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub clouds: Vec<PointCloud>,
    pub class_names: Vec<String>,
    pub splits: Vec<Split>,
}

impl Dataset {
    pub fn new(
        clouds: Vec<PointCloud>,
        class_names: Vec<String>,
        splits: Vec<Split>,
    ) -> Result<Self> {
        if clouds.len() != splits.len() {
            return Err(Error::InvalidInput(format!(
                "{} clouds but {} split tags",
                clouds.len(),
                splits.len()
            )));
        }
        for cloud in &clouds {
            match cloud.label {
                Some(l) if l < class_names.len() => {}
                Some(l) => {
                    return Err(Error::InvalidInput(format!(
                        "cloud '{}' has label {l} but only {} classes exist",
                        cloud.id,
                        class_names.len()
                    )))
                }
                None => {
                    return Err(Error::InvalidInput(format!(
                        "cloud '{}' has no label",
                        cloud.id
                    )))
                }
            }
        }
        Ok(Dataset {
            clouds,
            class_names,
            splits,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Indices of the clouds tagged with `split`, in dataset order.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.splits
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == split)
            .map(|(i, _)| i)
            .collect()
    }

    /// Checks the preconditions of a training run.
    pub fn validate_for_training(&self) -> Result<usize> {
        if self.indices(Split::Train).is_empty() || self.indices(Split::Test).is_empty() {
            return Err(Error::InvalidInput(
                "both train and test splits must be non-empty".into(),
            ));
        }
        let n = self.clouds[0].len();
        if let Some(c) = self.clouds.iter().find(|c| c.len() != n) {
            return Err(Error::InvalidInput(format!(
                "all clouds must have the same point count: '{}' has {} points, expected {n}",
                c.id,
                c.len()
            )));
        }
        Ok(n)
    }
}

/// Generates `per_class` clouds of `n` points for each of the first
/// `classes` shape classes. The first 80% of every class (rounded down) is
/// tagged train, the rest test. Clouds are standardized.
pub fn generate_dataset(
    classes: usize,
    per_class: usize,
    n: usize,
    noise: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes == 0 || classes > ShapeClass::ALL.len() {
        return Err(Error::InvalidInput(format!(
            "classes must be in 1..={}, got {classes}",
            ShapeClass::ALL.len()
        )));
    }
    if per_class == 0 {
        return Err(Error::InvalidInput("per_class must be at least 1".into()));
    }
    let train_count = per_class * 4 / 5;
    let mut clouds = Vec::with_capacity(classes * per_class);
    let mut splits = Vec::with_capacity(classes * per_class);
    for &class in &ShapeClass::ALL[..classes] {
        for i in 0..per_class {
            let cloud_seed = seed
                .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                .wrapping_add(i as u64);
            let mut cloud = standardize(&generate_shape(class, n, noise, cloud_seed)?)?;
            cloud.id = format!("{}_{:04}", class.name(), i);
            clouds.push(cloud);
            splits.push(if i < train_count {
                Split::Train
            } else {
                Split::Test
            });
        }
    }
    let names = ShapeClass::ALL[..classes]
        .iter()
        .map(|c| c.name().to_string())
        .collect();
    Dataset::new(clouds, names, splits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = Array2::from_shape_fn((n, 3), |_| rng.random_range(-5.0..5.0));
        PointCloud::new(points, Some(0), "r").unwrap()
    }

    #[test]
    fn dataset_split_counts() {
        let ds = generate_dataset(8, 5, 16, 0.0, 1).unwrap();
        assert_eq!(ds.clouds.len(), 40);
        assert_eq!(ds.indices(Split::Train).len(), 32);
        assert_eq!(ds.indices(Split::Test).len(), 8);
        assert!(generate_dataset(8, 0, 16, 0.0, 1).is_err());
        assert!(generate_dataset(9, 1, 16, 0.0, 1).is_err());
        let again = generate_dataset(8, 5, 16, 0.0, 1).unwrap();
        assert!(ds.clouds.iter().zip(&again.clouds).all(|(a, b)| a == b));
    }

    #[test]
    fn standardize_two_points() {
        let c = PointCloud::from_rows(&[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]).unwrap();
        let s = standardize(&c).unwrap();
        assert_eq!(
            s.points,
            ndarray::arr2(&[[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        );
    }

    #[test]
    fn standardize_single_point_is_origin() {
        let c = PointCloud::from_rows(&[[5.0, 5.0, 5.0]]).unwrap();
        let s = standardize(&c).unwrap();
        assert_eq!(s.points, ndarray::arr2(&[[0.0, 0.0, 0.0]]));
    }

    #[test]
    fn standardize_coincident_points_are_origin() {
        let c = PointCloud::from_rows(&[[0.1, 0.2, 0.3]; 7]).unwrap();
        let s = standardize(&c).unwrap();
        assert!(s.points.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn standardize_random_cloud() {
        let s = standardize(&random_cloud(100, 11)).unwrap();
        let c = s.centroid();
        assert!((c[0].powi(2) + c[1].powi(2) + c[2].powi(2)).sqrt() <= 1e-9);
        assert!((s.max_norm() - 1.0).abs() <= 1e-9);
        assert_eq!(s.label, Some(0));
    }

    #[test]
    fn non_finite_rejected() {
        let mut points = Array2::zeros((2, 3));
        points[[1, 2]] = f64::NAN;
        assert!(matches!(
            PointCloud::new(points.clone(), None, ""),
            Err(Error::InvalidInput(_))
        ));
        let cloud = PointCloud {
            points,
            label: None,
            id: String::new(),
        };
        assert!(matches!(standardize(&cloud), Err(Error::InvalidInput(_))));
    }

    fn rotation(a: f64, b: f64, c: f64) -> Array2<f64> {
        let rz = ndarray::arr2(&[
            [a.cos(), -a.sin(), 0.0],
            [a.sin(), a.cos(), 0.0],
            [0.0, 0.0, 1.0],
        ]);
        let ry = ndarray::arr2(&[
            [b.cos(), 0.0, b.sin()],
            [0.0, 1.0, 0.0],
            [-b.sin(), 0.0, b.cos()],
        ]);
        let rx = ndarray::arr2(&[
            [1.0, 0.0, 0.0],
            [0.0, c.cos(), -c.sin()],
            [0.0, c.sin(), c.cos()],
        ]);
        rz.dot(&ry).dot(&rx)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn standardize_is_idempotent(seed in 0u64..10_000, n in 1usize..60) {
            let once = standardize(&random_cloud(n, seed)).unwrap();
            let twice = standardize(&once).unwrap();
            for (a, b) in once.points.iter().zip(twice.points.iter()) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }

        #[test]
        fn standardize_commutes_with_rotation(
            seed in 0u64..10_000,
            a in -3.2f64..3.2, b in -3.2f64..3.2, c in -3.2f64..3.2,
        ) {
            let cloud = random_cloud(40, seed);
            let r = rotation(a, b, c);
            let rotated = PointCloud::new(cloud.points.dot(&r.t()), None, "").unwrap();
            let lhs = standardize(&rotated).unwrap().points;
            let rhs = standardize(&cloud).unwrap().points.dot(&r.t());
            for (x, y) in lhs.iter().zip(rhs.iter()) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }
    }
}
