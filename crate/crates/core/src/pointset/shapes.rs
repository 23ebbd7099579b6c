use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::PointCloud;
use crate::error::{Error, Result};

/// Parametric surfaces used for the synthetic benchmark. The discriminant
/// order is the class index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShapeClass {
    Sphere,
    PlanePatch,
    Cylinder,
    Torus,
    Cone,
    Cube,
    SwissRoll,
    Helix,
}

impl ShapeClass {
    pub const ALL: [ShapeClass; 8] = [
        ShapeClass::Sphere,
        ShapeClass::PlanePatch,
        ShapeClass::Cylinder,
        ShapeClass::Torus,
        ShapeClass::Cone,
        ShapeClass::Cube,
        ShapeClass::SwissRoll,
        ShapeClass::Helix,
    ];

    pub fn index(self) -> usize {
        ShapeClass::ALL.iter().position(|&c| c == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeClass::Sphere => "sphere",
            ShapeClass::PlanePatch => "plane_patch",
            ShapeClass::Cylinder => "cylinder",
            ShapeClass::Torus => "torus",
            ShapeClass::Cone => "cone",
            ShapeClass::Cube => "cube",
            ShapeClass::SwissRoll => "swiss_roll",
            ShapeClass::Helix => "helix",
        }
    }
}

impl fmt::Display for ShapeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ShapeClass::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown shape class '{s}'")))
    }
}

/// Samples `n` points on the surface of `class` with isotropic Gaussian noise
/// of standard deviation `noise`. Shape proportions vary per seed; the label
/// is the class index.
pub fn generate_shape(class: ShapeClass, n: usize, noise: f64, seed: u64) -> Result<PointCloud> {
    generate_shape_with_params(class, n, noise, seed).map(|(cloud, _)| cloud)
}

/// Like [`generate_shape`] but also returns the n×2 intrinsic surface
/// parameters of every sample (before noise). For the swiss roll these are
/// (arc angle, height), the coordinates an ideal unrolling recovers.
pub fn generate_shape_with_params(
    class: ShapeClass,
    n: usize,
    noise: f64,
    seed: u64,
) -> Result<(PointCloud, Array2<f64>)> {
    if n < 8 {
        return Err(Error::InvalidInput(format!(
            "shape generation needs n >= 8, got {n}"
        )));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "noise must be finite and >= 0, got {noise}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((class.index() as u64) << 56));
    let mut points = Array2::zeros((n, 3));
    let mut params = Array2::zeros((n, 2));

    match class {
        ShapeClass::Sphere => {
            for i in 0..n {
                let z: f64 = rng.random_range(-1.0..1.0);
                let phi: f64 = rng.random_range(0.0..2.0 * PI);
                let rho = (1.0 - z * z).sqrt();
                set(&mut points, i, [rho * phi.cos(), rho * phi.sin(), z]);
                set2(&mut params, i, [z, phi]);
            }
        }
        ShapeClass::PlanePatch => {
            let half_h: f64 = rng.random_range(0.4..1.0);
            for i in 0..n {
                let u: f64 = rng.random_range(-1.0..1.0);
                let v: f64 = rng.random_range(-half_h..half_h);
                set(&mut points, i, [u, v, 0.0]);
                set2(&mut params, i, [u, v]);
            }
        }
        ShapeClass::Cylinder => {
            let radius: f64 = rng.random_range(0.35..0.6);
            let height: f64 = rng.random_range(1.0..1.6);
            for i in 0..n {
                let theta: f64 = rng.random_range(0.0..2.0 * PI);
                let h: f64 = rng.random_range(-0.5..0.5) * height;
                set(
                    &mut points,
                    i,
                    [radius * theta.cos(), radius * theta.sin(), h],
                );
                set2(&mut params, i, [theta, h]);
            }
        }
        ShapeClass::Torus => {
            let major = 0.7;
            let minor: f64 = rng.random_range(0.18..0.35);
            for i in 0..n {
                let theta: f64 = rng.random_range(0.0..2.0 * PI);
                let phi: f64 = rng.random_range(0.0..2.0 * PI);
                let ring = major + minor * phi.cos();
                set(
                    &mut points,
                    i,
                    [ring * theta.cos(), ring * theta.sin(), minor * phi.sin()],
                );
                set2(&mut params, i, [theta, phi]);
            }
        }
        ShapeClass::Cone => {
            let radius: f64 = rng.random_range(0.5..0.8);
            let height: f64 = rng.random_range(1.0..1.5);
            for i in 0..n {
                // sqrt gives uniform density over the lateral surface
                let s: f64 = rng.random_range(0.0f64..1.0).sqrt();
                let theta: f64 = rng.random_range(0.0..2.0 * PI);
                let z = height * (0.5 - s);
                set(
                    &mut points,
                    i,
                    [s * radius * theta.cos(), s * radius * theta.sin(), z],
                );
                set2(&mut params, i, [s, theta]);
            }
        }
        ShapeClass::Cube => {
            for i in 0..n {
                let face = rng.random_range(0..6usize);
                let u: f64 = rng.random_range(-0.5..0.5);
                let v: f64 = rng.random_range(-0.5..0.5);
                let side = if face % 2 == 0 { 0.5 } else { -0.5 };
                let p = match face / 2 {
                    0 => [side, u, v],
                    1 => [u, side, v],
                    _ => [u, v, side],
                };
                set(&mut points, i, p);
                set2(&mut params, i, [u, v]);
            }
        }
        ShapeClass::SwissRoll => {
            let width: f64 = rng.random_range(0.8..1.2);
            let scale = 1.0 / (4.5 * PI);
            for i in 0..n {
                let t: f64 = 1.5 * PI * (1.0 + 2.0 * rng.random_range(0.0f64..1.0));
                let h: f64 = rng.random_range(-0.5..0.5) * width;
                set(
                    &mut points,
                    i,
                    [scale * t * t.cos(), h, scale * t * t.sin()],
                );
                set2(&mut params, i, [t, h]);
            }
        }
        ShapeClass::Helix => {
            let turns: f64 = rng.random_range(2.0..4.0);
            let radius: f64 = rng.random_range(0.4..0.6);
            let tube = 0.05;
            for i in 0..n {
                let s: f64 = rng.random_range(0.0..1.0);
                let ring: f64 = rng.random_range(0.0..2.0 * PI);
                let theta = 2.0 * PI * turns * s;
                let r = radius + tube * ring.cos();
                set(
                    &mut points,
                    i,
                    [
                        r * theta.cos(),
                        r * theta.sin(),
                        s - 0.5 + tube * ring.sin(),
                    ],
                );
                set2(&mut params, i, [s, ring]);
            }
        }
    }

    if noise > 0.0 {
        let normal = Normal::new(0.0, noise).expect("validated noise");
        points.mapv_inplace(|v| v + normal.sample(&mut rng));
    }

    let cloud = PointCloud::new(points, Some(class.index()), format!("{class}_{seed}"))?;
    Ok((cloud, params))
}

fn set(points: &mut Array2<f64>, i: usize, p: [f64; 3]) {
    points[[i, 0]] = p[0];
    points[[i, 1]] = p[1];
    points[[i, 2]] = p[2];
}

fn set2(params: &mut Array2<f64>, i: usize, p: [f64; 2]) {
    params[[i, 0]] = p[0];
    params[[i, 1]] = p[1];
}
