//! Orthogonal projection of points onto planes and in-plane coordinates.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::pointset::PointCloud;

/// The plane `a·x + b·y + c·z + d = 0` with an orthonormal in-plane basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub basis: [[f64; 3]; 2],
}

/// Foot of the perpendicular, the line parameter, and in-plane coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionResult {
    pub foot: [f64; 3],
    pub t: f64,
    pub uv: [f64; 2],
}

fn dot(u: [f64; 3], v: [f64; 3]) -> f64 {
    u[0] * v[0] + u[1] * v[1] + u[2] * v[2]
}

fn cross(u: [f64; 3], v: [f64; 3]) -> [f64; 3] {
    [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ]
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = dot(v, v).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

impl Plane {
    /// Builds a plane with a basis derived from the normal: the first
    /// direction is the normalized cross product of the normal with the
    /// coordinate axis it is least aligned with.
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let normal = [a, b, c];
        if !normal.iter().chain([&d]).all(|v| v.is_finite()) || dot(normal, normal) == 0.0 {
            return Err(Error::InvalidInput(format!(
                "degenerate plane ({a}, {b}, {c}, {d})"
            )));
        }
        let axis = (0..3)
            .min_by(|&i, &j| normal[i].abs().total_cmp(&normal[j].abs()))
            .expect("three axes");
        let mut e = [0.0; 3];
        e[axis] = 1.0;
        let first = unit(cross(normal, e));
        let second = unit(cross(unit(normal), first));
        Ok(Plane {
            a,
            b,
            c,
            d,
            basis: [first, second],
        })
    }

    /// A plane with a caller-chosen basis; the basis must be orthonormal
    /// and orthogonal to the normal.
    pub fn with_basis(a: f64, b: f64, c: f64, d: f64, basis: [[f64; 3]; 2]) -> Result<Self> {
        let plane = Plane::new(a, b, c, d)?;
        let n = unit(plane.normal());
        let ok = (dot(basis[0], basis[0]) - 1.0).abs() <= 1e-12
            && (dot(basis[1], basis[1]) - 1.0).abs() <= 1e-12
            && dot(basis[0], basis[1]).abs() <= 1e-12
            && dot(basis[0], n).abs() <= 1e-12
            && dot(basis[1], n).abs() <= 1e-12;
        if !ok {
            return Err(Error::InvalidInput(
                "plane basis is not orthonormal in-plane".into(),
            ));
        }
        Ok(Plane { basis, ..plane })
    }

    pub fn normal(&self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }

    /// The foot of the coordinate origin; in-plane coordinates are measured
    /// from here.
    pub fn origin(&self) -> [f64; 3] {
        project_point(self, [0.0; 3]).foot
    }

    pub fn evaluate(&self, p: [f64; 3]) -> f64 {
        self.a * p[0] + self.b * p[1] + self.c * p[2] + self.d
    }
}

/// Orthogonal projection of `p` onto `plane`: t = (A·x+B·y+C·z+D)/(A²+B²+C²)
/// and foot = p − t·(A, B, C).
pub fn project_point(plane: &Plane, p: [f64; 3]) -> ProjectionResult {
    let n = plane.normal();
    let t = plane.evaluate(p) / dot(n, n);
    let foot = [p[0] - plane.a * t, p[1] - plane.b * t, p[2] - plane.c * t];
    let t0 = plane.d / dot(n, n);
    let origin = [-plane.a * t0, -plane.b * t0, -plane.c * t0];
    let rel = [
        foot[0] - origin[0],
        foot[1] - origin[1],
        foot[2] - origin[2],
    ];
    ProjectionResult {
        foot,
        t,
        uv: [dot(rel, plane.basis[0]), dot(rel, plane.basis[1])],
    }
}

/// The coordinate planes x=0, y=0, z=0 with bases chosen so the in-plane
/// coordinates are (y,z), (x,z), and (x,y).
pub fn axis_planes() -> [Plane; 3] {
    let e1 = [1.0, 0.0, 0.0];
    let e2 = [0.0, 1.0, 0.0];
    let e3 = [0.0, 0.0, 1.0];
    [
        Plane {
            a: 1.0,
            b: 0.0,
            c: 0.0,
            d: 0.0,
            basis: [e2, e3],
        },
        Plane {
            a: 0.0,
            b: 1.0,
            c: 0.0,
            d: 0.0,
            basis: [e1, e3],
        },
        Plane {
            a: 0.0,
            b: 0.0,
            c: 1.0,
            d: 0.0,
            basis: [e1, e2],
        },
    ]
}

/// Per-point in-plane coordinates on each of `planes`, concatenated in plane
/// order: an n×(2·planes) array.
pub fn project_cloud(cloud: &PointCloud, planes: &[Plane]) -> Array2<f64> {
    let mut out = Array2::zeros((cloud.len(), 2 * planes.len()));
    for (i, row) in cloud.points.rows().into_iter().enumerate() {
        let p = [row[0], row[1], row[2]];
        for (k, plane) in planes.iter().enumerate() {
            let uv = project_point(plane, p).uv;
            out[[i, 2 * k]] = uv[0];
            out[[i, 2 * k + 1]] = uv[1];
        }
    }
    out
}

/// The linear projection part of the MP features: n×6, ordered
/// (x=0 | y=0 | z=0).
pub fn linear_projection_features(cloud: &PointCloud) -> Array2<f64> {
    project_cloud(cloud, &axis_planes())
}
