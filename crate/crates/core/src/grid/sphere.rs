use std::fmt;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::error::{bail, Result};
use crate::num::{Real, C};
use crate::quad::gauss_legendre;

/// Packed position of `Y_l^m` in a coefficient vector.
#[inline]
pub fn sh_index(l: usize, m: i64) -> usize {
    debug_assert!(m.unsigned_abs() as usize <= l);
    (l * l + l).wrapping_add_signed(m as isize)
}

/// Orthonormal associated Legendre functions `Pbar_l^m(x)`, `0 <= m <= l <= lmax`,
/// with the Condon-Shortley phase, so that `Y_l^m = Pbar_l^m(cos th) e^{i m ph}`
/// has unit `L^2(S^2)` norm. Packed as `l(l+1)/2 + m`.
pub fn legendre_table<T: Real>(lmax: usize, x: T) -> Vec<T> {
    let tri = |l: usize, m: usize| l * (l + 1) / 2 + m;
    let mut out = vec![T::zero(); (lmax + 1) * (lmax + 2) / 2];
    let s = (T::one() - x * x).max(T::zero()).sqrt();
    let mut pmm = T::one() / (T::lit(4.0) * T::PI()).sqrt();
    for m in 0..=lmax {
        if m > 0 {
            let mf = T::from_usize_lossy(m);
            pmm = -(((T::lit(2.0) * mf + T::one()) / (T::lit(2.0) * mf)).sqrt()) * s * pmm;
        }
        out[tri(m, m)] = pmm;
        if m < lmax {
            out[tri(m + 1, m)] = x * (T::from_usize_lossy(2 * m + 3)).sqrt() * pmm;
        }
        for l in m + 2..=lmax {
            let lf = T::from_usize_lossy(l);
            let mf = T::from_usize_lossy(m);
            let a = ((T::lit(4.0) * lf * lf - T::one()) / (lf * lf - mf * mf)).sqrt();
            let l1 = lf - T::one();
            let b = ((l1 * l1 - mf * mf) / (T::lit(4.0) * l1 * l1 - T::one())).sqrt();
            out[tri(l, m)] = a * (x * out[tri(l - 1, m)] - b * out[tri(l - 2, m)]);
        }
    }
    out
}

/// Spherical-harmonic representation of fields on the unit sphere with a
/// Gauss-Legendre (latitude) by uniform (longitude) quadrature grid.
pub struct SphereGrid<T: Real> {
    lmax: usize,
    n_lat: usize,
    n_lon: usize,
    /// `cos(theta)` at the Gauss nodes, ascending.
    cos_theta: Vec<T>,
    lat_weight: Vec<T>,
    plm: Vec<Vec<T>>,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
}

impl<T: Real> fmt::Debug for SphereGrid<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SphereGrid").field("lmax", &self.lmax).field("n_lat", &self.n_lat).finish()
    }
}

impl<T: Real> SphereGrid<T> {
    /// `n_lat >= lmax + 1` makes the transform pair exact on the band.
    pub fn new(lmax: usize, n_lat: usize) -> Result<Self> {
        if n_lat < lmax + 1 {
            bail!(Construction, "n_lat = {n_lat} must be at least lmax + 1 = {}", lmax + 1);
        }
        let n_lon = 2 * n_lat;
        let (cos_theta, lat_weight) = gauss_legendre::<T>(n_lat);
        let plm = cos_theta.iter().map(|&x| legendre_table(lmax, x)).collect();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n_lon);
        let inv = planner.plan_fft_inverse(n_lon);
        Ok(Self { lmax, n_lat, n_lon, cos_theta, lat_weight, plm, fwd, inv })
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }
    pub fn n_lat(&self) -> usize {
        self.n_lat
    }
    pub fn n_lon(&self) -> usize {
        self.n_lon
    }
    /// Number of harmonic coefficients, `(lmax + 1)^2`.
    pub fn coeff_len(&self) -> usize {
        (self.lmax + 1) * (self.lmax + 1)
    }
    /// Number of quadrature nodes.
    pub fn node_len(&self) -> usize {
        self.n_lat * self.n_lon
    }
    pub fn cos_theta(&self) -> &[T] {
        &self.cos_theta
    }
    pub fn longitude(&self, k: usize) -> T {
        T::lit(2.0) * T::PI() * T::from_usize_lossy(k) / T::from_usize_lossy(self.n_lon)
    }
    /// Quadrature weight of node `(i, k)` (independent of `k`).
    pub fn node_weight(&self, i: usize) -> T {
        self.lat_weight[i] * T::lit(2.0) * T::PI() / T::from_usize_lossy(self.n_lon)
    }

    /// Largest polynomial degree in `cos(theta)` and in longitude that the
    /// quadrature integrates exactly.
    pub fn exact_degree(&self) -> usize {
        2 * self.n_lat - 1
    }

    /// Values on the node grid (latitude-major) from coefficients.
    pub fn synthesize(&self, coeffs: &[C<T>]) -> Vec<C<T>> {
        assert_eq!(coeffs.len(), self.coeff_len());
        let zero = C::new(T::zero(), T::zero());
        let mut out = vec![zero; self.node_len()];
        let mut scratch = vec![zero; self.inv.get_inplace_scratch_len()];
        for (i, row) in out.chunks_mut(self.n_lon).enumerate() {
            let p = &self.plm[i];
            for m in 0..=self.lmax {
                let mut pos = zero;
                let mut neg = zero;
                for l in m..=self.lmax {
                    let v = p[l * (l + 1) / 2 + m];
                    pos = pos + coeffs[sh_index(l, m as i64)] * v;
                    if m > 0 {
                        neg = neg + coeffs[sh_index(l, -(m as i64))] * v;
                    }
                }
                row[m] = pos;
                if m > 0 {
                    // Y_l^{-m} = (-1)^m conj(Y_l^m): same Legendre factor, sign (-1)^m
                    let sign = if m % 2 == 0 { T::one() } else { -T::one() };
                    row[self.n_lon - m] = neg * sign;
                }
            }
            self.inv.process_with_scratch(row, &mut scratch);
        }
        out
    }

    /// Coefficients from node values; exact for fields with degree `<= lmax`.
    pub fn analyze(&self, values: &[C<T>]) -> Vec<C<T>> {
        assert_eq!(values.len(), self.node_len());
        let zero = C::new(T::zero(), T::zero());
        let mut coeffs = vec![zero; self.coeff_len()];
        let mut row = vec![zero; self.n_lon];
        let mut scratch = vec![zero; self.fwd.get_inplace_scratch_len()];
        for i in 0..self.n_lat {
            row.copy_from_slice(&values[i * self.n_lon..(i + 1) * self.n_lon]);
            self.fwd.process_with_scratch(&mut row, &mut scratch);
            let w = self.node_weight(i);
            let p = &self.plm[i];
            for m in 0..=self.lmax {
                let sign = if m % 2 == 0 { T::one() } else { -T::one() };
                for l in m..=self.lmax {
                    let v = p[l * (l + 1) / 2 + m] * w;
                    coeffs[sh_index(l, m as i64)] = coeffs[sh_index(l, m as i64)] + row[m] * v;
                    if m > 0 {
                        let idx = sh_index(l, -(m as i64));
                        coeffs[idx] = coeffs[idx] + row[self.n_lon - m] * (v * sign);
                    }
                }
            }
        }
        coeffs
    }

    /// Quadrature of node values over the sphere.
    pub fn integrate(&self, values: &[T]) -> T {
        assert_eq!(values.len(), self.node_len());
        values
            .chunks(self.n_lon)
            .enumerate()
            .map(|(i, row)| self.node_weight(i) * row.iter().copied().sum::<T>())
            .sum()
    }

    /// Pointwise evaluation at colatitude `theta`, longitude `phi`.
    pub fn evaluate(&self, coeffs: &[C<T>], theta: T, phi: T) -> C<T> {
        let p = legendre_table(self.lmax, theta.cos());
        let mut acc = C::new(T::zero(), T::zero());
        for l in 0..=self.lmax {
            for m in -(l as i64)..=(l as i64) {
                let mu = m.unsigned_abs() as usize;
                let sign = if m < 0 && mu % 2 == 1 { -T::one() } else { T::one() };
                let e = C::from_polar(T::one(), T::lit(m as f64) * phi);
                acc = acc + coeffs[sh_index(l, m)] * e * (p[l * (l + 1) / 2 + mu] * sign);
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indices_pack_densely() {
        let mut seen = vec![false; 16];
        for l in 0..4 {
            for m in -(l as i64)..=(l as i64) {
                seen[sh_index(l, m)] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn low_degree_closed_forms() {
        let x = 0.3f64;
        let p = legendre_table(2, x);
        let pi4 = 4.0 * std::f64::consts::PI;
        assert!((p[0] - 1.0 / pi4.sqrt()).abs() < 1e-15);
        assert!((p[1] - (3.0 / pi4).sqrt() * x).abs() < 1e-15);
        // Y_1^1 = -sqrt(3/(8 pi)) sin th e^{i ph}
        assert!((p[2] + (3.0 / (2.0 * pi4)).sqrt() * (1.0 - x * x).sqrt()).abs() < 1e-15);
        assert!((p[3] - (5.0 / pi4).sqrt() * 0.5 * (3.0 * x * x - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn round_trip_and_orthonormality() {
        let g = SphereGrid::<f64>::new(6, 7).unwrap();
        let coeffs: Vec<C<f64>> =
            (0..g.coeff_len()).map(|i| C::new((i as f64 * 0.7).sin(), (i as f64 * 1.3).cos())).collect();
        let vals = g.synthesize(&coeffs);
        let back = g.analyze(&vals);
        for (a, b) in coeffs.iter().zip(&back) {
            assert!((a - b).norm() < 1e-12);
        }
        let m2: f64 = coeffs.iter().map(|z| z.norm_sqr()).sum();
        let q = g.integrate(&vals.iter().map(|z| z.norm_sqr()).collect::<Vec<_>>());
        assert!((m2 - q).abs() < 1e-11 * m2);
        let (th, ph) = (0.9, 2.1);
        let k = 5;
        let i = 3;
        let node = g.synthesize(&coeffs)[i * g.n_lon() + k];
        let direct = g.evaluate(&coeffs, g.cos_theta()[i].acos(), g.longitude(k));
        assert!((node - direct).norm() < 1e-12);
        assert!(g.evaluate(&coeffs, th, ph).norm().is_finite());
    }
}
