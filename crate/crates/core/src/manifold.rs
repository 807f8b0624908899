//! Geometry of the covariate spaces: Euclidean space, the unit circle, the
//! unit 2-sphere and the unit-radius cylinder `S¹ × [a, b]`.
//!
//! Points are stored in ambient coordinates and validated per manifold kind.
//! Nothing here projects or normalizes input; callers that read raw data are
//! expected to embed it themselves.

use serde::Serialize;

use crate::error::{PlmError, Result};
use crate::scalar::Scalar;

/// A point given by its ambient coordinates, e.g. `(cos θ, sin θ, s)` on the cylinder.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifoldPoint<T> {
    pub coords: Vec<T>,
}

impl<T: Scalar> ManifoldPoint<T> {
    pub fn new(coords: Vec<T>) -> Self {
        Self { coords }
    }

    /// Point on the unit circle at `angle` radians.
    pub fn circle(angle: T) -> Self {
        Self::new(vec![angle.cos(), angle.sin()])
    }

    /// Point on the cylinder at `angle` radians and height `height`.
    pub fn cylinder(angle: T, height: T) -> Self {
        Self::new(vec![angle.cos(), angle.sin(), height])
    }

    /// Point on the unit sphere from colatitude/longitude in radians.
    pub fn sphere(colatitude: T, longitude: T) -> Self {
        let s = colatitude.sin();
        Self::new(vec![s * longitude.cos(), s * longitude.sin(), colatitude.cos()])
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// The supported Riemannian manifolds.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Manifold<T> {
    Euclidean {
        dim: usize,
    },
    Circle,
    Sphere,
    /// Unit-radius cylinder with heights restricted to `[low, high]`.
    Cylinder {
        low: T,
        high: T,
    },
}

impl<T: Scalar> Manifold<T> {
    /// The cylinder of the simulation study, heights in `[0, 1]`.
    pub fn unit_cylinder() -> Self {
        Manifold::Cylinder { low: T::zero(), high: T::one() }
    }

    pub fn euclidean(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(PlmError::Config("euclidean dimension must be >= 1".into()));
        }
        Ok(Manifold::Euclidean { dim })
    }

    pub fn cylinder(low: T, high: T) -> Result<Self> {
        if !(low < high) || !low.is_finite() || !high.is_finite() {
            return Err(PlmError::Config(format!(
                "cylinder height interval must be finite and nonempty, got [{low}, {high}]"
            )));
        }
        Ok(Manifold::Cylinder { low, high })
    }

    /// Intrinsic dimension.
    pub fn dim(&self) -> usize {
        match self {
            Manifold::Euclidean { dim } => *dim,
            Manifold::Circle => 1,
            Manifold::Sphere | Manifold::Cylinder { .. } => 2,
        }
    }

    /// Number of embedding coordinates.
    pub fn ambient_dim(&self) -> usize {
        match self {
            Manifold::Euclidean { dim } => *dim,
            Manifold::Circle => 2,
            Manifold::Sphere | Manifold::Cylinder { .. } => 3,
        }
    }

    pub fn injectivity_radius(&self) -> T {
        match self {
            Manifold::Euclidean { .. } => T::infinity(),
            Manifold::Circle | Manifold::Sphere | Manifold::Cylinder { .. } => T::PI(),
        }
    }

    /// Largest possible geodesic distance (`+∞` for Euclidean space).
    pub fn diameter(&self) -> T {
        match self {
            Manifold::Euclidean { .. } => T::infinity(),
            Manifold::Circle | Manifold::Sphere => T::PI(),
            Manifold::Cylinder { low, high } => {
                let dh = *high - *low;
                (T::PI() * T::PI() + dh * dh).sqrt()
            }
        }
    }

    /// Check the point invariants for this manifold.
    pub fn validate(&self, p: &ManifoldPoint<T>) -> Result<()> {
        let tol = T::on_manifold_tolerance();
        if p.coords.len() != self.ambient_dim() {
            return Err(PlmError::InvalidPoint(format!(
                "expected {} ambient coordinates, got {}",
                self.ambient_dim(),
                p.coords.len()
            )));
        }
        if p.coords.iter().any(|c| !c.is_finite()) {
            return Err(PlmError::InvalidPoint("non-finite coordinate".into()));
        }
        match self {
            Manifold::Euclidean { .. } => Ok(()),
            Manifold::Circle | Manifold::Sphere => {
                let r = crate::linalg::norm(&p.coords);
                if (r - T::one()).abs() > tol {
                    return Err(PlmError::InvalidPoint(format!(
                        "norm {r} differs from 1 by more than {tol:e}"
                    )));
                }
                Ok(())
            }
            Manifold::Cylinder { low, high } => {
                let r = crate::linalg::norm(&p.coords[..2]);
                if (r - T::one()).abs() > tol {
                    return Err(PlmError::InvalidPoint(format!(
                        "circular component has norm {r}, differs from 1 by more than {tol:e}"
                    )));
                }
                let s = p.coords[2];
                if s < *low || s > *high {
                    return Err(PlmError::InvalidPoint(format!("height {s} outside [{low}, {high}]")));
                }
                Ok(())
            }
        }
    }

    /// Geodesic distance after validating both points.
    pub fn geodesic_distance(&self, p: &ManifoldPoint<T>, q: &ManifoldPoint<T>) -> Result<T> {
        self.validate(p)?;
        self.validate(q)?;
        Ok(self.distance_unchecked(p, q))
    }

    /// Geodesic distance for points already known to be valid.
    pub fn distance_unchecked(&self, p: &ManifoldPoint<T>, q: &ManifoldPoint<T>) -> T {
        let a = &p.coords;
        let b = &q.coords;
        match self {
            Manifold::Euclidean { .. } => {
                a.iter().zip(b).map(|(x, y)| (*x - *y) * (*x - *y)).sum::<T>().sqrt()
            }
            Manifold::Circle => planar_angle(a[0], a[1], b[0], b[1]),
            Manifold::Sphere => {
                let cross = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
                let sin = crate::linalg::norm(&cross);
                let cos = crate::linalg::dot(a, b);
                sin.atan2(cos)
            }
            Manifold::Cylinder { .. } => {
                let arc = planar_angle(a[0], a[1], b[0], b[1]);
                let dh = a[2] - b[2];
                (arc * arc + dh * dh).sqrt()
            }
        }
    }

    /// Volume density `θ_p(q)` after validating both points.
    pub fn volume_density(&self, p: &ManifoldPoint<T>, q: &ManifoldPoint<T>) -> Result<T> {
        let r = self.geodesic_distance(p, q)?;
        self.volume_density_at_distance(r)
    }

    /// Volume density as a function of the geodesic distance alone.
    ///
    /// Flat manifolds give 1; on the 2-sphere it is `sin r / r`.
    pub fn volume_density_at_distance(&self, r: T) -> Result<T> {
        let inj = self.injectivity_radius();
        if r >= inj {
            return Err(PlmError::OutsideInjectivityRadius {
                distance: r.to_f64_lossy(),
                radius: inj.to_f64_lossy(),
            });
        }
        Ok(match self {
            Manifold::Euclidean { .. } | Manifold::Circle | Manifold::Cylinder { .. } => T::one(),
            Manifold::Sphere => sinc(r),
        })
    }

    /// Check `0 < h < injectivity radius`.
    pub fn check_bandwidth(&self, h: T) -> Result<()> {
        let inj = self.injectivity_radius();
        if !(h > T::zero()) || !(h < inj) || !h.is_finite() {
            return Err(PlmError::InvalidBandwidth { h: h.to_f64_lossy(), max: inj.to_f64_lossy() });
        }
        Ok(())
    }
}

/// Unsigned angle between two planar unit vectors.
#[inline]
fn planar_angle<T: Scalar>(x1: T, y1: T, x2: T, y2: T) -> T {
    let cross = x1 * y2 - y1 * x2;
    let dot = x1 * x2 + y1 * y2;
    cross.atan2(dot).abs()
}

#[inline]
fn sinc<T: Scalar>(r: T) -> T {
    if r.abs() < T::cst(1e-4) {
        // sin r / r = 1 - r²/6 + r⁴/120 - ...
        let r2 = r * r;
        T::one() - r2 / T::cst(6.0) + r2 * r2 / T::cst(120.0)
    } else {
        r.sin() / r
    }
}

/// Dense symmetric matrix of pairwise distances between sample points.
#[derive(Debug, Clone)]
pub struct DistanceMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> DistanceMatrix<T> {
    pub fn new(manifold: &Manifold<T>, points: &[ManifoldPoint<T>]) -> Self {
        let n = points.len();
        let mut data = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..i {
                let d = manifold.distance_unchecked(&points[i], &points[j]);
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        Self { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Distance from point `i` to its nearest other point.
    pub fn nearest_neighbor(&self, i: usize) -> T {
        self.row(i).iter().enumerate().filter(|(j, _)| *j != i).fold(T::infinity(), |m, (_, d)| m.min(*d))
    }

    /// Off-diagonal distances (each pair once).
    pub fn pairwise(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n * self.n.saturating_sub(1) / 2);
        for i in 0..self.n {
            for j in 0..i {
                out.push(self.data[i * self.n + j]);
            }
        }
        out
    }
}
