//! Radial analysis on `H^n`: virial weights, the Crank-Nicolson propagator and
//! the weight inequalities behind the virial bounds.

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::grid::{log_sinh, Grid, RadialGrid};
use crate::num::{Real, C};
use crate::quad::{gauss_legendre, integrate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightKind {
    /// `rho = |x|^2` on the box.
    EuclideanSquare,
    /// `rho = r^2`, `r` the geodesic distance to the origin of `H^n`.
    HyperbolicSquare,
    /// `rho*(r) = int_0^r (int_0^s sinh^{n-1}) / sinh^{n-1}(s) ds`, `Lap rho* = 1`.
    HyperbolicStar,
}

/// Virial weight tabulated at the grid nodes.
#[derive(Debug, Clone)]
pub struct WeightSpec<T> {
    pub kind: WeightKind,
    pub rho: Vec<T>,
    /// `|grad rho|` (`rho'` for radial weights).
    pub drho: Vec<T>,
    pub lap_rho: Vec<T>,
    /// Radial Hessian eigenvalue `rho''`.
    pub d2rho: Vec<T>,
    /// Angular Hessian eigenvalue `rho' coth r` (`rho'/r` on the box).
    pub angular: Vec<T>,
    pub bilap_rho: Vec<T>,
}

/// Tabulates `kind` on `grid`.
pub fn virial_weights<T: Real>(grid: &Grid<T>, kind: WeightKind) -> Result<WeightSpec<T>> {
    match (grid, kind) {
        (Grid::Euclidean(g), WeightKind::EuclideanSquare) => {
            let rho = g.radius_squared();
            let len = rho.len();
            let two_n = T::lit(2.0 * g.dimension() as f64);
            Ok(WeightSpec {
                kind,
                drho: rho.iter().map(|&r2| T::lit(2.0) * r2.sqrt()).collect(),
                rho,
                lap_rho: vec![two_n; len],
                d2rho: vec![T::lit(2.0); len],
                angular: vec![T::lit(2.0); len],
                bilap_rho: vec![T::zero(); len],
            })
        }
        (Grid::Radial(g), WeightKind::HyperbolicSquare) => Ok(square_weight(g.dimension(), g.nodes())),
        (Grid::Radial(g), WeightKind::HyperbolicStar) => Ok(star_weight(g.dimension(), g.nodes())),
        (g, k) => bail!(Contract, "weight {k:?} is not defined on a {:?} grid", g.manifold()),
    }
}

/// Default weight for a grid (`|x|^2` or geodesic `r^2`).
pub fn default_weight<T: Real>(grid: &Grid<T>) -> Result<WeightSpec<T>> {
    match grid {
        Grid::Euclidean(_) => virial_weights(grid, WeightKind::EuclideanSquare),
        Grid::Radial(_) => virial_weights(grid, WeightKind::HyperbolicSquare),
        Grid::Sphere(_) => bail!(Contract, "no time-dependent virial weight on the sphere"),
    }
}

/// `rho = r^2` on `H^n` with its derivatives.
pub fn square_weight<T: Real>(n: usize, radii: &[T]) -> WeightSpec<T> {
    let m = T::from_usize_lossy(n - 1);
    let nf = T::from_usize_lossy(n);
    let two = T::lit(2.0);
    let mut spec = WeightSpec {
        kind: WeightKind::HyperbolicSquare,
        rho: Vec::with_capacity(radii.len()),
        drho: Vec::with_capacity(radii.len()),
        lap_rho: Vec::with_capacity(radii.len()),
        d2rho: vec![two; radii.len()],
        angular: Vec::with_capacity(radii.len()),
        bilap_rho: Vec::with_capacity(radii.len()),
    };
    for &r in radii {
        let rcoth = if r < T::lit(1e-4) { T::one() + r * r / T::lit(3.0) } else { r / r.tanh() };
        spec.rho.push(r * r);
        spec.drho.push(two * r);
        spec.lap_rho.push(two + two * m * rcoth);
        spec.angular.push(two * rcoth);
        let bilap = if r < T::lit(1e-3) {
            two * m * (two * nf / T::lit(3.0) + two * (nf - T::lit(3.0)) * r * r / T::lit(15.0))
        } else {
            let coth = T::one() / r.tanh();
            let csch2 = T::one() / (r.sinh() * r.sinh());
            let g1 = two * m * (coth - r * csch2);
            let g2 = two * m * csch2 * (two * r * coth - two);
            g2 + m * coth * g1
        };
        spec.bilap_rho.push(bilap);
    }
    spec
}

/// `rho*` and `rho*'` at ascending positive radii by nested Gauss-Legendre
/// quadrature, the inner integral carried across intervals in log space.
pub fn rho_star_table<T: Real>(n: usize, radii: &[T]) -> (Vec<T>, Vec<T>) {
    assert!(n >= 2);
    let rule = gauss_legendre::<T>(10);
    let m = T::from_usize_lossy(n - 1);
    // (sinh a / sinh b)^{n-1}
    let ratio = |a: T, b: T| (m * (log_sinh(a) - log_sinh(b))).exp();
    // rho*'(s) from rho*'(a) = ga.
    let carry = |a: T, ga: T, s: T| {
        let base = if a > T::zero() { ga * ratio(a, s) } else { T::zero() };
        base + integrate(&rule, a, s, |tau| ratio(tau, s))
    };
    let max_step = T::lit(0.05);
    let (mut r0, mut g0, mut rho0) = (T::zero(), T::zero(), T::zero());
    let mut rho = Vec::with_capacity(radii.len());
    let mut drho = Vec::with_capacity(radii.len());
    for &r in radii {
        assert!(r > r0 || (r == r0 && r0 > T::zero()), "radii must be ascending and positive");
        let pieces = ((r - r0) / max_step).ceil().to_usize().unwrap_or(1).max(1);
        let step = (r - r0) / T::from_usize_lossy(pieces);
        for k in 0..pieces {
            let a = r0;
            let b = if k + 1 == pieces { r } else { r0 + step };
            rho0 = rho0 + integrate(&rule, a, b, |s| carry(a, g0, s));
            g0 = carry(a, g0, b);
            r0 = b;
        }
        rho.push(rho0);
        drho.push(g0);
    }
    (rho, drho)
}

fn star_weight<T: Real>(n: usize, radii: &[T]) -> WeightSpec<T> {
    let m = T::from_usize_lossy(n - 1);
    let (rho, drho) = rho_star_table(n, radii);
    let angular: Vec<T> = radii.iter().zip(&drho).map(|(&r, &d)| d / r.tanh()).collect();
    let d2rho = angular.iter().map(|&a| T::one() - m * a).collect();
    WeightSpec {
        kind: WeightKind::HyperbolicStar,
        rho,
        drho,
        lap_rho: vec![T::one(); radii.len()],
        d2rho,
        angular,
        bilap_rho: vec![T::zero(); radii.len()],
    }
}

/// Finite-volume `Lap_{H^n}` of a radial field (Dirichlet at `R`).
pub fn radial_laplacian_apply<T: Real>(field: &[C<T>], grid: &RadialGrid<T>) -> Vec<C<T>> {
    grid.laplacian(field)
}

/// Crank-Nicolson linear part composed with the exact phase rotation, Strang
/// ordered. Same sampling and classification as the box solver.
pub fn evolve_radial<T: Real>(
    state0: &crate::state::StateVector<T>,
    params: &crate::params::SystemParams<T>,
    config: &crate::solver::SolverConfig,
    weight: &WeightSpec<T>,
) -> Result<crate::solver::RunRecord<T>> {
    if state0.grid().as_radial().is_none() {
        bail!(Contract, "evolve_radial needs a hyperbolic-radial grid");
    }
    crate::spectral::evolve(state0, params, config, weight)
}

/// Sub-, main and super-diagonal of the finite-volume Laplacian.
pub(crate) fn laplacian_bands<T: Real>(grid: &RadialGrid<T>) -> (Vec<T>, Vec<T>, Vec<T>) {
    let k = grid.len();
    let s = grid.face_areas();
    let vol = grid.cell_volumes();
    let h = grid.spacing();
    let mut lower = vec![T::zero(); k];
    let mut diag = vec![T::zero(); k];
    let mut upper = vec![T::zero(); k];
    for c in 0..k {
        let inv = T::one() / (h * vol[c]);
        lower[c] = s[c] * inv;
        let right = if c + 1 == k { T::lit(2.0) * s[k] } else { s[c + 1] };
        upper[c] = if c + 1 == k { T::zero() } else { s[c + 1] * inv };
        diag[c] = -(s[c] + right) * inv;
    }
    (lower, diag, upper)
}

/// Solves `(shift - L) x = rhs` in place; `shift > 0` keeps the system
/// diagonally dominant.
pub(crate) fn solve_shifted<T: Real>(bands: &(Vec<T>, Vec<T>, Vec<T>), shift: T, rhs: &mut [C<T>]) {
    let (lower, diag, upper) = bands;
    let k = rhs.len();
    let mut cp = vec![T::zero(); k];
    let mut prev = C::new(T::zero(), T::zero());
    for c in 0..k {
        let a = -lower[c];
        let b = shift - diag[c];
        let d = if c == 0 { b } else { b - a * cp[c - 1] };
        cp[c] = -upper[c] / d;
        prev = if c == 0 { rhs[c] / d } else { (rhs[c] - prev * a) / d };
        rhs[c] = prev;
    }
    for c in (0..k - 1).rev() {
        rhs[c] = rhs[c] - rhs[c + 1] * cp[c];
    }
}

/// Crank-Nicolson step `(I - i tau/2 L) u+ = (I + i tau/2 L) u` for
/// `u_t = i Lap u`, solved by the Thomas algorithm.
#[derive(Debug, Clone)]
pub(crate) struct CrankNicolson<T: Real> {
    lower: Vec<T>,
    diag: Vec<T>,
    upper: Vec<T>,
    tau: T,
    cprime: Vec<C<T>>,
    denom: Vec<C<T>>,
}

impl<T: Real> CrankNicolson<T> {
    pub(crate) fn new(grid: &RadialGrid<T>) -> Self {
        let (lower, diag, upper) = laplacian_bands(grid);
        Self { lower, diag, upper, tau: T::nan(), cprime: vec![], denom: vec![] }
    }

    fn prepare(&mut self, tau: T) {
        if tau == self.tau {
            return;
        }
        let k = self.diag.len();
        let half = C::new(T::zero(), tau * T::lit(0.5));
        let one = C::new(T::one(), T::zero());
        self.cprime = vec![C::new(T::zero(), T::zero()); k];
        self.denom = vec![C::new(T::zero(), T::zero()); k];
        for c in 0..k {
            let a = -half * self.lower[c];
            let b = one - half * self.diag[c];
            let up = -half * self.upper[c];
            let d = if c == 0 { b } else { b - a * self.cprime[c - 1] };
            self.denom[c] = d;
            self.cprime[c] = up / d;
        }
        self.tau = tau;
    }

    pub(crate) fn apply(&mut self, u: &mut [C<T>], tau: T) {
        self.prepare(tau);
        let k = u.len();
        let half = C::new(T::zero(), tau * T::lit(0.5));
        let mut rhs = vec![C::new(T::zero(), T::zero()); k];
        for c in 0..k {
            let mut lu = u[c] * self.diag[c];
            if c > 0 {
                lu = lu + u[c - 1] * self.lower[c];
            }
            if c + 1 < k {
                lu = lu + u[c + 1] * self.upper[c];
            }
            rhs[c] = u[c] + half * lu;
        }
        // forward sweep
        let mut prev = C::new(T::zero(), T::zero());
        for c in 0..k {
            let a = -half * self.lower[c];
            let d = if c == 0 { rhs[c] } else { rhs[c] - a * prev };
            prev = d / self.denom[c];
            rhs[c] = prev;
        }
        u[k - 1] = rhs[k - 1];
        for c in (0..k - 1).rev() {
            u[c] = rhs[c] - self.cprime[c] * u[c + 1];
        }
    }
}

/// Worst violations of the pointwise weight inequalities over sample fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightInequalityReport<T> {
    /// `max (D^2 rho(grad phi, grad phi) - c |grad phi|^2)` (nonpositive when
    /// the bound holds) with `c = 2` for
    /// `r^2`-type weights and `1/(n-1)` for `rho*`, radial fields.
    pub hessian_violation: T,
    /// For `rho*`: `max(max_nodes(rho*'', rho*' coth r) - 1/(n-1))`, the
    /// eigenvalue form of the nonradial bound.
    pub eigenvalue_violation: T,
    /// `max(2n - Lap rho)` for `r^2`, `max |Lap rho - 1|` for `rho*`.
    pub laplacian_violation: T,
    /// `min Lap^2 rho` (must be positive for `r^2` on `H^n`).
    pub bilaplacian_min: T,
}

/// Evaluates both sides of the weight inequalities at every node for radial
/// sample fields.
pub fn check_weight_inequalities<T: Real>(
    weights: &WeightSpec<T>,
    grid: &RadialGrid<T>,
    fields: &[Vec<C<T>>],
) -> Result<WeightInequalityReport<T>> {
    if weights.rho.len() != grid.len() {
        bail!(Contract, "weight table has {} nodes, grid has {}", weights.rho.len(), grid.len());
    }
    let n = T::from_usize_lossy(grid.dimension());
    let bound = match weights.kind {
        WeightKind::HyperbolicStar => T::one() / (n - T::one()),
        _ => T::lit(2.0),
    };
    let h = grid.spacing();
    let mut hess = T::lit(f64::NEG_INFINITY);
    for f in fields {
        if f.len() != grid.len() {
            bail!(Contract, "sample field does not match the grid");
        }
        for c in 0..grid.len() {
            // centered |d_r phi|^2 at the node; one-sided at the ends
            let (lo, hi) = (c.saturating_sub(1), (c + 1).min(grid.len() - 1));
            let span = h * T::from_usize_lossy(hi - lo);
            let g2 = ((f[hi] - f[lo]) / span).norm_sqr();
            hess = hess.max((weights.d2rho[c] - bound) * g2);
        }
    }
    if fields.is_empty() {
        hess = T::zero();
    }
    let eig = weights
        .d2rho
        .iter()
        .zip(&weights.angular)
        .map(|(&a, &b)| a.max(b) - bound)
        .fold(T::lit(f64::NEG_INFINITY), T::max);
    let lap = match weights.kind {
        WeightKind::HyperbolicStar => weights.lap_rho.iter().map(|&l| (l - T::one()).abs()).fold(T::zero(), T::max),
        _ => weights.lap_rho.iter().map(|&l| T::lit(2.0) * n - l).fold(T::lit(f64::NEG_INFINITY), T::max),
    };
    let bilap = weights.bilap_rho.iter().copied().fold(T::infinity(), T::min);
    Ok(WeightInequalityReport {
        hessian_violation: hess,
        eigenvalue_violation: if weights.kind == WeightKind::HyperbolicStar { eig } else { T::zero() },
        laplacian_violation: lap,
        bilaplacian_min: bilap,
    })
}
