use std::fmt;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::error::{bail, Result};
use crate::num::{Real, C};

/// Periodic box `[-L, L)^n` with `points` nodes per axis, row-major storage
/// (last axis fastest).
pub struct EuclideanGrid<T: Real> {
    n: usize,
    points: usize,
    half_length: T,
    dx: T,
    axis: Vec<T>,
    wavenumber: Vec<T>,
    k2: Vec<T>,
    dealias: Vec<bool>,
    band: Vec<usize>,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
}

impl<T: Real> fmt::Debug for EuclideanGrid<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EuclideanGrid")
            .field("n", &self.n)
            .field("points", &self.points)
            .field("half_length", &self.half_length)
            .finish()
    }
}

impl<T: Real> EuclideanGrid<T> {
    pub fn new(n: usize, points: usize, half_length: T) -> Result<Self> {
        if !(1..=3).contains(&n) {
            bail!(Construction, "euclidean box supports n = 1, 2, 3 (got {n})");
        }
        if points < 4 || !points.is_power_of_two() {
            bail!(Construction, "points per axis must be a power of two >= 4 (got {points})");
        }
        if !(half_length > T::zero()) || !half_length.is_finite() {
            bail!(Construction, "box half-length must be positive (got {half_length})");
        }
        let dx = T::lit(2.0) * half_length / T::from_usize_lossy(points);
        let axis: Vec<T> = (0..points).map(|i| -half_length + dx * T::from_usize_lossy(i)).collect();
        let dk = T::PI() / half_length;
        let freq = |i: usize| -> i64 {
            if i < points / 2 {
                i as i64
            } else {
                i as i64 - points as i64
            }
        };
        let wavenumber: Vec<T> = (0..points).map(|i| dk * T::lit(freq(i) as f64)).collect();
        let total = points.pow(n as u32);
        let mut k2 = vec![T::zero(); total];
        let mut dealias = vec![true; total];
        let mut band = vec![0usize; total];
        // 2/3 rule: keep |m| < points/3 on every axis.
        let keep = points / 3;
        for (flat, (k2v, keepv)) in k2.iter_mut().zip(dealias.iter_mut()).enumerate() {
            let mut rem = flat;
            let mut maxm = 0usize;
            for _ in 0..n {
                let i = rem % points;
                rem /= points;
                let m = freq(i).unsigned_abs() as usize;
                maxm = maxm.max(m);
                *k2v = *k2v + wavenumber[i] * wavenumber[i];
                if m >= keep.max(1) && m != 0 {
                    *keepv = false;
                }
            }
            band[flat] = maxm;
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(points);
        let inv = planner.plan_fft_inverse(points);
        Ok(Self { n, points, half_length, dx, axis, wavenumber, k2, dealias, band, fwd, inv })
    }

    pub fn dimension(&self) -> usize {
        self.n
    }
    pub fn points(&self) -> usize {
        self.points
    }
    pub fn half_length(&self) -> T {
        self.half_length
    }
    pub fn dx(&self) -> T {
        self.dx
    }
    pub fn len(&self) -> usize {
        self.k2.len()
    }
    pub fn is_empty(&self) -> bool {
        self.k2.is_empty()
    }
    /// Node coordinates along one axis.
    pub fn axis(&self) -> &[T] {
        &self.axis
    }
    /// Angular wavenumbers along one axis, FFT order.
    pub fn wavenumbers(&self) -> &[T] {
        &self.wavenumber
    }
    /// `|k|^2` per flat spectral index.
    pub fn k_squared(&self) -> &[T] {
        &self.k2
    }
    /// 2/3-rule mask per flat spectral index (`true` = kept).
    pub fn dealias_mask(&self) -> &[bool] {
        &self.dealias
    }
    /// Max-norm integer frequency `max_i |m_i|` per flat spectral index.
    pub fn band(&self) -> &[usize] {
        &self.band
    }
    /// Quadrature weight of every node.
    pub fn cell_volume(&self) -> T {
        self.dx.powi(self.n as i32)
    }
    /// Volume of the box.
    pub fn volume(&self) -> T {
        (T::lit(2.0) * self.half_length).powi(self.n as i32)
    }

    /// Multi-index of a flat index (axis 0 first).
    pub fn unflatten(&self, flat: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        let mut rem = flat;
        for a in (0..self.n).rev() {
            idx[a] = rem % self.points;
            rem /= self.points;
        }
        idx
    }

    /// Coordinates of a flat node index.
    pub fn position(&self, flat: usize) -> [T; 3] {
        let idx = self.unflatten(flat);
        let mut x = [T::zero(); 3];
        for a in 0..self.n {
            x[a] = self.axis[idx[a]];
        }
        x
    }

    /// Squared distance from the origin for every node.
    pub fn radius_squared(&self) -> Vec<T> {
        (0..self.len())
            .map(|f| {
                let x = self.position(f);
                x[..self.n].iter().map(|&c| c * c).sum()
            })
            .collect()
    }

    /// Wavenumber component along `axis` for a flat spectral index.
    pub fn wavenumber_component(&self, flat: usize, axis: usize) -> T {
        self.wavenumber[self.unflatten(flat)[axis]]
    }

    pub fn forward(&self, buf: &mut [C<T>]) {
        self.transform(buf, &self.fwd);
    }

    /// Inverse transform including the `1/points^n` normalization.
    pub fn inverse(&self, buf: &mut [C<T>]) {
        self.transform(buf, &self.inv);
        let scale = T::one() / T::from_usize_lossy(self.len());
        for z in buf.iter_mut() {
            *z = *z * scale;
        }
    }

    pub fn fft(&self, v: &[C<T>]) -> Vec<C<T>> {
        let mut out = v.to_vec();
        self.forward(&mut out);
        out
    }

    pub fn ifft(&self, v: &[C<T>]) -> Vec<C<T>> {
        let mut out = v.to_vec();
        self.inverse(&mut out);
        out
    }

    fn transform(&self, buf: &mut [C<T>], plan: &Arc<dyn Fft<T>>) {
        assert_eq!(buf.len(), self.len(), "buffer does not match grid");
        let p = self.points;
        let mut scratch = vec![C::new(T::zero(), T::zero()); plan.get_inplace_scratch_len()];
        // last axis is contiguous
        plan.process_with_scratch(buf, &mut scratch);
        if self.n == 1 {
            return;
        }
        let mut lines = vec![C::new(T::zero(), T::zero()); buf.len()];
        for axis in 0..self.n - 1 {
            let stride = p.pow((self.n - 1 - axis) as u32);
            let outer = buf.len() / (p * stride);
            let mut line = 0;
            for o in 0..outer {
                for inner in 0..stride {
                    let base = o * p * stride + inner;
                    for i in 0..p {
                        lines[line * p + i] = buf[base + i * stride];
                    }
                    line += 1;
                }
            }
            plan.process_with_scratch(&mut lines, &mut scratch);
            let mut line = 0;
            for o in 0..outer {
                for inner in 0..stride {
                    let base = o * p * stride + inner;
                    for i in 0..p {
                        buf[base + i * stride] = lines[line * p + i];
                    }
                    line += 1;
                }
            }
        }
    }

    /// Spectral partial derivative along `axis` (Nyquist mode dropped).
    pub fn derivative(&self, v: &[C<T>], axis: usize) -> Vec<C<T>> {
        let mut spec = self.fft(v);
        let nyq = self.points / 2;
        for (flat, z) in spec.iter_mut().enumerate() {
            let i = self.unflatten(flat)[axis];
            let k = if i == nyq { T::zero() } else { self.wavenumber[i] };
            *z = C::new(-z.im * k, z.re * k);
        }
        self.inverse(&mut spec);
        spec
    }

    /// Spectral Laplacian.
    pub fn laplacian(&self, v: &[C<T>]) -> Vec<C<T>> {
        let mut spec = self.fft(v);
        for (z, &k2) in spec.iter_mut().zip(&self.k2) {
            *z = *z * (-k2);
        }
        self.inverse(&mut spec);
        spec
    }

    /// `int |grad v|^2` by Parseval.
    pub fn gradient_norm_squared(&self, v: &[C<T>]) -> T {
        let spec = self.fft(v);
        let s: T = spec.iter().zip(&self.k2).map(|(z, &k2)| z.norm_sqr() * k2).sum();
        s * self.cell_volume() / T::from_usize_lossy(self.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_power_of_two() {
        assert!(EuclideanGrid::<f64>::new(1, 100, 1.0).is_err());
        assert!(EuclideanGrid::<f64>::new(4, 16, 1.0).is_err());
        assert!(EuclideanGrid::<f64>::new(1, 16, 0.0).is_err());
    }

    #[test]
    fn transform_round_trip_2d() {
        let g = EuclideanGrid::<f64>::new(2, 16, 3.0).unwrap();
        let v: Vec<C<f64>> = (0..g.len()).map(|i| C::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
        let back = g.ifft(&g.fft(&v));
        for (a, b) in v.iter().zip(&back) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn spectral_derivative_of_gaussian() {
        let g = EuclideanGrid::<f64>::new(2, 128, 8.0).unwrap();
        let v: Vec<C<f64>> = (0..g.len())
            .map(|f| {
                let x = g.position(f);
                C::new((-(x[0] * x[0] + 2.0 * x[1] * x[1])).exp(), 0.0)
            })
            .collect();
        let dy = g.derivative(&v, 1);
        let lap = g.laplacian(&v);
        for f in 0..g.len() {
            let x = g.position(f);
            let e = (-(x[0] * x[0] + 2.0 * x[1] * x[1])).exp();
            assert!((dy[f].re + 4.0 * x[1] * e).abs() < 1e-10);
            let want = (4.0 * x[0] * x[0] - 2.0 + 16.0 * x[1] * x[1] - 4.0) * e;
            assert!((lap[f].re - want).abs() < 1e-9);
        }
    }
}
