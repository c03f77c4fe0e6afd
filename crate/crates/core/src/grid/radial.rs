use crate::error::{bail, Result};
use crate::num::Real;
use crate::quad::{gauss_legendre, integrate};

/// `log(sinh r)` for `r > 0`, stable for large `r`.
pub fn log_sinh<T: Real>(r: T) -> T {
    if r > T::lit(20.0) {
        r + (-(T::lit(-2.0) * r).exp()).ln_1p() - T::LN_2()
    } else {
        r.sinh().ln()
    }
}

/// Cell-centered finite-volume grid for radial functions on `H^n`.
///
/// Nodes sit at `r_k = (k + 1/2) h`, `k = 0..K-1`, `h = R/K`. Faces sit at
/// `k h`; the face at the origin has zero area (regularity), the face at `R`
/// carries a homogeneous Dirichlet condition.
#[derive(Debug, Clone)]
pub struct RadialGrid<T: Real> {
    n: usize,
    radius: T,
    h: T,
    r: Vec<T>,
    face_area: Vec<T>,
    cell_volume: Vec<T>,
    sphere_area: T,
}

impl<T: Real> RadialGrid<T> {
    pub fn new(n: usize, points: usize, radius: T) -> Result<Self> {
        if n < 2 {
            bail!(Construction, "hyperbolic radial grid needs n >= 2 (got {n})");
        }
        if points < 8 {
            bail!(Construction, "radial grid needs at least 8 points (got {points})");
        }
        if !(radius > T::zero()) || !radius.is_finite() {
            bail!(Construction, "radial extent must be positive (got {radius})");
        }
        if radius > T::lit(700.0) {
            bail!(Construction, "radial extent {radius} exceeds the absolute guard R <= 700");
        }
        let power = T::from_usize_lossy(n - 1);
        if power * log_sinh(radius) > T::lit(700.0) {
            bail!(Construction, "sinh^{}({radius}) overflows the metric weight", n - 1);
        }
        let h = radius / T::from_usize_lossy(points);
        let r: Vec<T> = (0..points).map(|k| (T::from_usize_lossy(k) + T::lit(0.5)) * h).collect();
        let face_area: Vec<T> = (0..=points)
            .map(|k| {
                let rf = T::from_usize_lossy(k) * h;
                if k == 0 {
                    T::zero()
                } else {
                    (power * log_sinh(rf)).exp()
                }
            })
            .collect();
        let rule = gauss_legendre::<T>(8);
        let cell_volume: Vec<T> = (0..points)
            .map(|k| {
                let a = T::from_usize_lossy(k) * h;
                integrate(&rule, a, a + h, |s| s.sinh().powi(n as i32 - 1))
            })
            .collect();
        Ok(Self { n, radius, h, r, face_area, cell_volume, sphere_area: unit_sphere_area(n - 1) })
    }

    pub fn dimension(&self) -> usize {
        self.n
    }
    pub fn radius(&self) -> T {
        self.radius
    }
    pub fn spacing(&self) -> T {
        self.h
    }
    pub fn len(&self) -> usize {
        self.r.len()
    }
    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
    /// Node radii.
    pub fn nodes(&self) -> &[T] {
        &self.r
    }
    /// `sinh^{n-1}` at the `K + 1` faces.
    pub fn face_areas(&self) -> &[T] {
        &self.face_area
    }
    /// `int_{cell} sinh^{n-1}(r) dr` per cell.
    pub fn cell_volumes(&self) -> &[T] {
        &self.cell_volume
    }
    /// Area of the unit sphere `S^{n-1}`.
    pub fn sphere_area(&self) -> T {
        self.sphere_area
    }

    /// Quadrature weight of node `k` for integrals over `H^n`.
    pub fn weight(&self, k: usize) -> T {
        self.sphere_area * self.cell_volume[k]
    }

    pub fn weights(&self) -> Vec<T> {
        (0..self.len()).map(|k| self.weight(k)).collect()
    }

    /// `int |d_r v|^2` as the discrete Dirichlet form `-<v, Lap v>`, boundary
    /// face included.
    pub fn gradient_norm_squared(&self, v: &[crate::num::C<T>]) -> T {
        let k = self.len();
        let inv_h = T::one() / self.h;
        let mut s = T::zero();
        for f in 1..k {
            s = s + self.face_area[f] * (v[f] - v[f - 1]).norm_sqr();
        }
        s = s + T::lit(2.0) * self.face_area[k] * v[k - 1].norm_sqr();
        s * inv_h * self.sphere_area
    }

    /// Second-order finite-volume `Lap_{H^n}` for radial fields.
    pub fn laplacian<V>(&self, field: &[V]) -> Vec<V>
    where
        V: Copy + std::ops::Sub<Output = V> + std::ops::Mul<T, Output = V> + std::ops::Add<Output = V>,
    {
        let k = self.len();
        assert_eq!(field.len(), k);
        let inv_h = T::one() / self.h;
        let flux = |f: usize| -> V {
            // face f between cells f-1 and f; f = 0 never called
            if f == k {
                // Dirichlet at R: ghost value -phi_{K-1}
                (field[k - 1] * T::lit(-2.0)) * (self.face_area[k] * inv_h)
            } else {
                (field[f] - field[f - 1]) * (self.face_area[f] * inv_h)
            }
        };
        let mut out = Vec::with_capacity(k);
        let mut left = field[0] * T::zero();
        for c in 0..k {
            let right = flux(c + 1);
            out.push((right - left) * (T::one() / self.cell_volume[c]));
            left = right;
        }
        out
    }
}

/// Surface area of the unit sphere `S^m` in `R^{m+1}`.
pub fn unit_sphere_area<T: Real>(m: usize) -> T {
    // |S^m| = 2 pi^{(m+1)/2} / Gamma((m+1)/2), via the recursion |S^m| = 2pi/(m-1) |S^{m-2}|
    let mut a = if m % 2 == 0 { T::lit(2.0) } else { T::lit(2.0) * T::PI() };
    let mut k = if m % 2 == 0 { 0 } else { 1 };
    while k < m {
        k += 2;
        a = a * T::lit(2.0) * T::PI() / T::from_usize_lossy(k - 1);
    }
    a
}
