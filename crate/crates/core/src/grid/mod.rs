//! Discretizations of `R^n` (periodic box), radial `H^n`, and `S^2`.

mod euclidean;
mod radial;
mod sphere;

pub use euclidean::EuclideanGrid;
pub use radial::{log_sinh, RadialGrid};
pub use sphere::{sh_index, SphereGrid};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Manifold {
    EuclideanBox,
    HyperbolicRadial,
    Sphere,
}

/// Configuration-level description of a discretization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "manifold", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GridSpec {
    /// `[-L, L)^n` with `points` nodes per axis (a power of two).
    EuclideanBox { n: usize, points: usize, half_length: f64 },
    /// Cell-centered radial grid on `(0, R)` for radial functions on `H^n`.
    HyperbolicRadial { n: usize, points: usize, radius: f64 },
    /// Spherical harmonics up to degree `lmax`, quadrature on `n_lat` Gauss
    /// latitudes times `2 n_lat` longitudes.
    Sphere { lmax: usize, n_lat: usize },
}

impl GridSpec {
    pub fn manifold(&self) -> Manifold {
        match self {
            GridSpec::EuclideanBox { .. } => Manifold::EuclideanBox,
            GridSpec::HyperbolicRadial { .. } => Manifold::HyperbolicRadial,
            GridSpec::Sphere { .. } => Manifold::Sphere,
        }
    }

    pub fn dimension(&self) -> usize {
        match *self {
            GridSpec::EuclideanBox { n, .. } | GridSpec::HyperbolicRadial { n, .. } => n,
            GridSpec::Sphere { .. } => 2,
        }
    }

    pub fn build<T: Real>(&self) -> Result<Arc<Grid<T>>> {
        Ok(Arc::new(match *self {
            GridSpec::EuclideanBox { n, points, half_length } => {
                Grid::Euclidean(EuclideanGrid::new(n, points, T::lit(half_length))?)
            }
            GridSpec::HyperbolicRadial { n, points, radius } => {
                Grid::Radial(RadialGrid::new(n, points, T::lit(radius))?)
            }
            GridSpec::Sphere { lmax, n_lat } => Grid::Sphere(SphereGrid::new(lmax, n_lat)?),
        }))
    }
}

/// A realized discretization. States hold it behind an `Arc`.
#[derive(Debug)]
pub enum Grid<T: Real> {
    Euclidean(EuclideanGrid<T>),
    Radial(RadialGrid<T>),
    Sphere(SphereGrid<T>),
}

impl<T: Real> Grid<T> {
    pub fn manifold(&self) -> Manifold {
        match self {
            Grid::Euclidean(_) => Manifold::EuclideanBox,
            Grid::Radial(_) => Manifold::HyperbolicRadial,
            Grid::Sphere(_) => Manifold::Sphere,
        }
    }

    /// Spatial dimension of the manifold.
    pub fn dimension(&self) -> usize {
        match self {
            Grid::Euclidean(g) => g.dimension(),
            Grid::Radial(g) => g.dimension(),
            Grid::Sphere(_) => 2,
        }
    }

    /// Number of stored values per component (grid nodes, or harmonic
    /// coefficients on the sphere).
    pub fn len(&self) -> usize {
        match self {
            Grid::Euclidean(g) => g.len(),
            Grid::Radial(g) => g.len(),
            Grid::Sphere(g) => g.coeff_len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_euclidean(&self) -> Option<&EuclideanGrid<T>> {
        match self {
            Grid::Euclidean(g) => Some(g),
            _ => None,
        }
    }

    pub fn as_radial(&self) -> Option<&RadialGrid<T>> {
        match self {
            Grid::Radial(g) => Some(g),
            _ => None,
        }
    }

    pub fn as_sphere(&self) -> Option<&SphereGrid<T>> {
        match self {
            Grid::Sphere(g) => Some(g),
            _ => None,
        }
    }
}
