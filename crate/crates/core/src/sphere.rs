//! Functionals and inequality checks on `S^2` in a spherical-harmonic basis.
//!
//! Equatorial reflection maps `Y_l^m` to `(-1)^(l+m) Y_l^m`, so a field is
//! odd about the equator exactly when every coefficient with `l + m` even
//! vanishes. There is no time evolution on the sphere.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::error::{bail, Error, Result};
use crate::functionals::{compute_functionals, FunctionalReport};
use crate::grid::{sh_index, Grid, SphereGrid};
use crate::num::{pow_abs, Real, C};
use crate::params::SystemParams;
use crate::state::StateVector;

/// Harmonic coefficients `a_lm`, `0 <= l <= lmax`, `|m| <= l`, packed by
/// [`sh_index`].
#[derive(Debug, Clone, PartialEq)]
pub struct SphereField<T> {
    lmax: usize,
    coeffs: Vec<C<T>>,
    antisymmetric: bool,
}

impl<T: Real> SphereField<T> {
    pub fn new(lmax: usize, coeffs: Vec<C<T>>) -> Result<Self> {
        if coeffs.len() != (lmax + 1) * (lmax + 1) {
            bail!(Construction, "{} coefficients do not fill degree {lmax}", coeffs.len());
        }
        let antisymmetric = parity_defect(lmax, &coeffs) == T::zero();
        Ok(Self { lmax, coeffs, antisymmetric })
    }

    pub fn zero(lmax: usize) -> Self {
        Self { lmax, coeffs: vec![C::new(T::zero(), T::zero()); (lmax + 1) * (lmax + 1)], antisymmetric: true }
    }

    /// Single harmonic `Y_l^m`.
    pub fn harmonic(lmax: usize, l: usize, m: i64) -> Result<Self> {
        if l > lmax || m.unsigned_abs() as usize > l {
            bail!(Parameter, "Y_{l}^{m} is outside degree {lmax}");
        }
        let mut f = Self::zero(lmax);
        f.coeffs[sh_index(l, m)] = C::new(T::one(), T::zero());
        f.antisymmetric = (l as i64 + m) % 2 != 0;
        Ok(f)
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }
    pub fn coeffs(&self) -> &[C<T>] {
        &self.coeffs
    }
    pub fn into_coeffs(self) -> Vec<C<T>> {
        self.coeffs
    }
    pub fn is_antisymmetric(&self) -> bool {
        self.antisymmetric
    }

    pub fn scaled(&self, k: T) -> Self {
        Self { coeffs: self.coeffs.iter().map(|&z| z * k).collect(), ..self.clone() }
    }

    /// `f(theta, phi) -> f(pi - theta, phi)`.
    pub fn reflected(&self) -> Self {
        let mut out = self.clone();
        for_each_lm(self.lmax, |l, m, i| {
            if (l as i64 + m) % 2 != 0 {
                out.coeffs[i] = -out.coeffs[i];
            }
        });
        out
    }

    /// `||f||_2^2` by Parseval.
    pub fn norm_squared(&self) -> T {
        self.coeffs.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `||grad f||_2^2 = sum l(l+1) |a_lm|^2`.
    pub fn gradient_norm_squared(&self) -> T {
        let mut s = T::zero();
        for_each_lm(self.lmax, |l, _, i| s = s + T::from_usize_lossy(l * (l + 1)) * self.coeffs[i].norm_sqr());
        s
    }
}

fn for_each_lm(lmax: usize, mut f: impl FnMut(usize, i64, usize)) {
    for l in 0..=lmax {
        for m in -(l as i64)..=(l as i64) {
            f(l, m, sh_index(l, m));
        }
    }
}

/// Largest `|a_lm|` over the even-parity (`l + m` even) coefficients.
pub fn parity_defect<T: Real>(lmax: usize, coeffs: &[C<T>]) -> T {
    let mut worst = T::zero();
    for_each_lm(lmax, |l, m, i| {
        if (l as i64 + m) % 2 == 0 {
            worst = worst.max(coeffs[i].norm());
        }
    });
    worst
}

/// Zeroes every coefficient with `l + m` even. Idempotent and self-adjoint.
pub fn project_antisymmetric<T: Real>(field: &SphereField<T>) -> SphereField<T> {
    let mut out = field.clone();
    project_coeffs(field.lmax, &mut out.coeffs);
    out.antisymmetric = true;
    out
}

pub(crate) fn project_coeffs<T: Real>(lmax: usize, coeffs: &mut [C<T>]) {
    for_each_lm(lmax, |l, m, i| {
        if (l as i64 + m) % 2 == 0 {
            coeffs[i] = C::new(T::zero(), T::zero());
        }
    });
}

/// Packs fields into a state on `grid` (shared `lmax` required).
pub fn sphere_state<T: Real>(grid: &Arc<Grid<T>>, fields: &[SphereField<T>]) -> Result<StateVector<T>> {
    let g = sphere_grid(grid)?;
    if let Some(f) = fields.iter().find(|f| f.lmax != g.lmax()) {
        bail!(Parameter, "field of degree {} on a grid of degree {}", f.lmax, g.lmax());
    }
    StateVector::new(grid.clone(), T::zero(), fields.iter().map(|f| f.coeffs.clone()).collect())
}

/// The fields of a sphere state.
pub fn sphere_fields<T: Real>(state: &StateVector<T>) -> Result<Vec<SphereField<T>>> {
    let g = sphere_grid(state.grid())?;
    state.components().iter().map(|c| SphereField::new(g.lmax(), c.clone())).collect()
}

fn sphere_grid<T: Real>(grid: &Grid<T>) -> Result<&SphereGrid<T>> {
    match grid {
        Grid::Sphere(g) => Ok(g),
        _ => bail!(Contract, "expected a sphere grid, got {:?}", grid.manifold()),
    }
}

/// Full report for `N` sphere fields, `Q**` included.
pub fn compute_sphere_functionals<T: Real>(
    grid: &Arc<Grid<T>>,
    fields: &[SphereField<T>],
    params: &SystemParams<T>,
) -> Result<FunctionalReport<T>> {
    compute_functionals(&sphere_state(grid, fields)?, params)
}

/// `||f||_2 / ||grad f||_2` for an antisymmetric field; at most `1/sqrt 2`
/// since odd-parity fields have no `l = 0` part.
pub fn check_poincare_antisymmetric<T: Real>(field: &SphereField<T>) -> Result<T> {
    let defect = parity_defect(field.lmax, &field.coeffs);
    if defect > T::zero() {
        return Err(Error::NotAntisymmetric(defect.as_f64()));
    }
    let g = field.gradient_norm_squared();
    if g == T::zero() {
        return Err(Error::UndefinedRatio);
    }
    Ok((field.norm_squared() / g).sqrt())
}

/// Both sides of
/// `(int |f|^q)^(2/q) <= (q-2)/(2 w^(1-2/q)) int |grad f|^2 + w^(-(1-2/q)) int |f|^2`
/// with `w = 4 pi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SobolevReport<T> {
    pub lhs: T,
    pub gradient_term: T,
    pub mass_term: T,
    /// `rhs - lhs`.
    pub slack: T,
}

pub fn check_sobolev_sphere<T: Real>(grid: &SphereGrid<T>, field: &SphereField<T>, q: T) -> Result<SobolevReport<T>> {
    if !(q >= T::lit(2.0)) {
        bail!(Domain, "exponent {q} must be at least 2");
    }
    if field.lmax != grid.lmax() {
        bail!(Parameter, "field of degree {} on a grid of degree {}", field.lmax, grid.lmax());
    }
    let needed = q.ceil().to_usize().unwrap_or(usize::MAX).saturating_mul(grid.lmax());
    if grid.exact_degree() < needed {
        bail!(Resolution, "|f|^{q} at lmax = {} needs quadrature degree {needed}, have {}", grid.lmax(), grid.exact_degree());
    }
    let omega = T::lit(4.0) * T::PI();
    let e = T::one() - T::lit(2.0) / q;
    let vals: Vec<T> = grid.synthesize(&field.coeffs).iter().map(|z| pow_abs(z.norm_sqr(), q)).collect();
    let lhs = grid.integrate(&vals).max(T::zero()).powf(T::lit(2.0) / q);
    let gradient_term = (q - T::lit(2.0)) / (T::lit(2.0) * omega.powf(e)) * field.gradient_norm_squared();
    let mass_term = field.norm_squared() / omega.powf(e);
    Ok(SobolevReport { lhs, gradient_term, mass_term, slack: gradient_term + mass_term - lhs })
}

/// `rho(r) = -2 log cos(r/2)` and its derivatives in the geodesic distance to
/// the pole: `(rho, rho', rho'', Lap rho)`.
pub fn sphere_weight<T: Real>(r: T) -> (T, T, T, T) {
    let half = r * T::lit(0.5);
    let c = half.cos();
    let sn = half.sin();
    // -log(1 - sin^2) keeps full precision near the pole
    let rho = -(-sn * sn).ln_1p();
    let d1 = half.tan();
    let d2 = T::lit(0.5) / (c * c);
    // rho'' + cot r rho' = (1 + cos r) / (2 cos^2(r/2))
    (rho, d1, d2, T::one())
}

/// Worst deviations of the cut-off weights `rho+` (north, `r = theta`) and
/// `rho-` (south, `r = pi - theta`) from their identities at Gauss latitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SphereWeightReport<T> {
    /// `max |Lap rho - 1|`, Laplacian from finite differences in `theta`.
    pub laplacian_error: T,
    /// `max |grad rho|`; the bound is 1.
    pub max_gradient: T,
    /// `max rho''`; the bound is 1.
    pub max_hessian: T,
    /// `max` of the angular Hessian eigenvalue `rho' cot r`; the bound is 1.
    pub max_angular: T,
    pub nodes: usize,
}

impl<T: Real> SphereWeightReport<T> {
    pub fn holds(&self, tol: T) -> bool {
        self.laplacian_error <= tol
            && self.max_gradient <= T::one() + tol
            && self.max_hessian <= T::one() + tol
            && self.max_angular <= T::one() + tol
    }
}

/// Checks `Lap rho = 1`, `|grad rho| <= 1` and the Hessian bound on each
/// hemisphere. Derivatives are eighth-order central differences of the
/// closed-form `rho` in `theta`, independent of [`sphere_weight`]'s algebra.
pub fn check_sphere_weights(n_lat: usize) -> Result<SphereWeightReport<f64>> {
    if n_lat < 2 {
        bail!(Parameter, "n_lat = {n_lat} must be at least 2");
    }
    let (x, _) = crate::quad::gauss_legendre::<f64>(n_lat);
    let h = 2e-3;
    let mut rep = SphereWeightReport::<f64> { laplacian_error: 0.0, max_gradient: 0.0, max_hessian: 0.0, max_angular: 0.0, nodes: 0 };
    for &ct in &x {
        let th = ct.acos();
        // each node belongs to the hemisphere whose pole it is closer to
        let north = th <= std::f64::consts::FRAC_PI_2;
        let rho = |t: f64| -> f64 {
            let r = if north { t } else { std::f64::consts::PI - t };
            -2.0 * (r * 0.5).cos().ln()
        };
        let (d1, d2) = central_differences(rho, th, h);
        let lap = d2 + th.cos() / th.sin() * d1;
        let r = if north { th } else { std::f64::consts::PI - th };
        rep.laplacian_error = rep.laplacian_error.max((lap - 1.0).abs());
        rep.max_gradient = rep.max_gradient.max(d1.abs());
        rep.max_hessian = rep.max_hessian.max(d2);
        rep.max_angular = rep.max_angular.max(d1.abs() / r.tan());
        rep.nodes += 1;
    }
    Ok(rep)
}

/// Eighth-order central first and second derivatives.
fn central_differences(f: impl Fn(f64) -> f64, x: f64, h: f64) -> (f64, f64) {
    const D1: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
    const D2: [f64; 4] = [8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0];
    let f0 = f(x);
    let (mut a, mut b) = (0.0, -205.0 / 72.0 * f0);
    for (k, (c1, c2)) in D1.iter().zip(&D2).enumerate() {
        let s = (k + 1) as f64 * h;
        let (fp, fm) = (f(x + s), f(x - s));
        a += c1 * (fp - fm);
        b += c2 * (fp + fm);
    }
    (a / h, b / (h * h))
}

/// Random complex field of degree `lmax` with `|a_lm| ~ (1 + l)^(-decay)`.
pub fn random_field<T: Real, R: Rng + ?Sized>(lmax: usize, decay: f64, antisymmetric: bool, rng: &mut R) -> SphereField<T> {
    let mut coeffs = vec![C::new(T::zero(), T::zero()); (lmax + 1) * (lmax + 1)];
    for_each_lm(lmax, |l, _, i| {
        let s = (1.0 + l as f64).powf(-decay);
        coeffs[i] = C::new(T::lit(s * rng.random_range(-1.0..1.0)), T::lit(s * rng.random_range(-1.0..1.0)));
    });
    let f = SphereField { lmax, antisymmetric: false, coeffs };
    if antisymmetric {
        project_antisymmetric(&f)
    } else {
        SphereField::new(lmax, f.coeffs).expect("length matches")
    }
}
