//! Scalar functionals of a state: mass, kinetic and potential energy, and the
//! sign functionals `Q`, `G`, `Q*`, `Q**`, `S`.

use serde::Serialize;

use crate::error::{bail, Result};
use crate::grid::{Grid, Manifold};
use crate::nonlinear::Nonlinearity;
use crate::num::{pow_abs, Real};
use crate::params::SystemParams;
use crate::state::StateVector;

/// Every functional of one snapshot. `mass` is `||Phi||_2` (not squared),
/// `mass_lambda` is `(sum_j lambda_j/2 int |phi_j|^2)^(1/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FunctionalReport<T> {
    pub mass: T,
    pub mass_lambda: T,
    pub kinetic: T,
    pub potential: T,
    pub energy: T,
    pub q: T,
    pub g: T,
    pub q_star: Option<T>,
    pub q_dstar: Option<T>,
    pub s: T,
}

impl<T: Real> FunctionalReport<T> {
    /// Assembles the derived functionals from `(M, M_lambda, K, P)`.
    pub fn from_parts(params: &SystemParams<T>, manifold: Manifold, mass: T, mass_lambda: T, kinetic: T, potential: T) -> Self {
        let n = T::from_usize_lossy(params.n());
        let p1 = params.p() + T::one();
        let alpha = params.mass_exponent();
        let mass_term = if mass == T::zero() { T::zero() } else { mass.powf(alpha) };
        let q_star = (manifold == Manifold::HyperbolicRadial)
            .then(|| kinetic - params.virial_coefficient(n - T::one()) * potential);
        let q_dstar = (manifold == Manifold::Sphere).then(|| kinetic - params.virial_coefficient(T::one()) * potential);
        Self {
            mass,
            mass_lambda,
            kinetic,
            potential,
            energy: kinetic - potential / p1,
            q: kinetic - params.virial_coefficient(n) * potential,
            g: mass_term - potential / p1,
            q_star,
            q_dstar,
            s: T::lit(2.0) * kinetic + T::lit(2.0) * mass_lambda * mass_lambda - potential,
        }
    }

    /// `M^(p+1-n(p-1)/2)`.
    pub fn mass_power(&self, params: &SystemParams<T>) -> T {
        if self.mass == T::zero() {
            T::zero()
        } else {
            self.mass.powf(params.mass_exponent())
        }
    }

    /// Pohozaev combination `(n/2 - 1)||grad w||^2 + n M_lambda^2 - n P/(p+1)`.
    pub fn pohozaev(&self, params: &SystemParams<T>) -> T {
        let n = T::from_usize_lossy(params.n());
        (n * T::lit(0.5) - T::one()) * T::lit(2.0) * self.kinetic + n * self.mass_lambda * self.mass_lambda
            - n * self.potential / (params.p() + T::one())
    }
}

/// The pieces every functional is assembled from.
#[derive(Debug, Clone, PartialEq)]
pub struct Integrals<T> {
    /// `int |phi_j|^2` per component.
    pub mass2: Vec<T>,
    /// `int |grad phi_j|^2` per component.
    pub grad2: Vec<T>,
    /// The full coupled potential.
    pub potential: T,
    /// `sum_j int |phi_j|^(p+1)` (unit coefficients).
    pub lp: T,
}

/// Quadratures of mass, gradient and potential on the state's grid.
pub fn integrals<T: Real>(state: &StateVector<T>, params: &SystemParams<T>) -> Result<Integrals<T>> {
    let comps = state.n_components();
    if comps != params.components() {
        bail!(Parameter, "state has {comps} components, parameters describe {}", params.components());
    }
    if state.grid().dimension() != params.n() {
        bail!(Parameter, "grid dimension {} does not match n = {}", state.grid().dimension(), params.n());
    }
    if !state.is_finite() {
        bail!(Evaluation, "state contains non-finite samples at t = {}", state.t());
    }
    let nl = Nonlinearity::new(params);
    let p1 = params.p() + T::one();
    let mut abs2 = vec![T::zero(); comps];
    let out = match state.grid().as_ref() {
        Grid::Euclidean(g) => {
            let dv = g.cell_volume();
            let mass2 = state.components().iter().map(|c| c.iter().map(|z| z.norm_sqr()).sum::<T>() * dv).collect();
            let grad2 = state.components().iter().map(|c| g.gradient_norm_squared(c)).collect();
            let (mut pot, mut lp) = (T::zero(), T::zero());
            for i in 0..g.len() {
                for j in 0..comps {
                    abs2[j] = state.component(j)[i].norm_sqr();
                }
                pot = pot + nl.density(&abs2);
                lp = lp + abs2.iter().map(|&a| pow_abs(a, p1)).sum::<T>();
            }
            Integrals { mass2, grad2, potential: pot * dv, lp: lp * dv }
        }
        Grid::Radial(g) => {
            let w = g.weights();
            let mass2 = state
                .components()
                .iter()
                .map(|c| c.iter().zip(&w).map(|(z, &wk)| z.norm_sqr() * wk).sum())
                .collect();
            let grad2 = state.components().iter().map(|c| g.gradient_norm_squared(c)).collect();
            let (mut pot, mut lp) = (T::zero(), T::zero());
            for (i, &wk) in w.iter().enumerate() {
                for j in 0..comps {
                    abs2[j] = state.component(j)[i].norm_sqr();
                }
                pot = pot + nl.density(&abs2) * wk;
                lp = lp + abs2.iter().map(|&a| pow_abs(a, p1)).sum::<T>() * wk;
            }
            Integrals { mass2, grad2, potential: pot, lp }
        }
        Grid::Sphere(g) => {
            let needed = sphere_quadrature_degree(g.lmax(), params.p());
            if g.exact_degree() < needed {
                bail!(
                    Resolution,
                    "n_lat = {} integrates degree {} exactly; |phi|^{} at lmax = {} needs degree {needed}",
                    g.n_lat(),
                    g.exact_degree(),
                    p1,
                    g.lmax()
                );
            }
            let mass2 = state.components().iter().map(|c| c.iter().map(|z| z.norm_sqr()).sum()).collect();
            let grad2 = state
                .components()
                .iter()
                .map(|c| {
                    let mut s = T::zero();
                    for l in 0..=g.lmax() {
                        let ev = T::from_usize_lossy(l * (l + 1));
                        for m in -(l as i64)..=(l as i64) {
                            s = s + ev * c[crate::grid::sh_index(l, m)].norm_sqr();
                        }
                    }
                    s
                })
                .collect();
            let nodes: Vec<Vec<_>> = state.components().iter().map(|c| g.synthesize(c)).collect();
            let mut dens = vec![T::zero(); g.node_len()];
            let mut lpd = vec![T::zero(); g.node_len()];
            for i in 0..g.node_len() {
                for j in 0..comps {
                    abs2[j] = nodes[j][i].norm_sqr();
                }
                dens[i] = nl.density(&abs2);
                lpd[i] = abs2.iter().map(|&a| pow_abs(a, p1)).sum();
            }
            Integrals { mass2, grad2, potential: g.integrate(&dens), lp: g.integrate(&lpd) }
        }
    };
    let tol = T::lit(1e3) * T::eps();
    let scale = out.mass2.iter().copied().fold(T::one(), T::max);
    if out.mass2.iter().chain(&out.grad2).any(|&v| v < -tol * scale) || out.lp < -tol * scale {
        bail!(Integrity, "a nonnegative integral evaluated negative beyond round-off at t = {}", state.t());
    }
    if !out.potential.is_finite() || out.grad2.iter().any(|v| !v.is_finite()) {
        bail!(Evaluation, "functional quadrature overflowed at t = {}", state.t());
    }
    Ok(out)
}

/// Polynomial degree of `|phi|^(p+1)` for a degree-`lmax` field, rounded up.
pub fn sphere_quadrature_degree<T: Real>(lmax: usize, p: T) -> usize {
    ((p + T::one()).ceil().to_usize().unwrap_or(usize::MAX)).saturating_mul(lmax)
}

/// Evaluates the full [`FunctionalReport`].
pub fn compute_functionals<T: Real>(state: &StateVector<T>, params: &SystemParams<T>) -> Result<FunctionalReport<T>> {
    let ints = integrals(state, params)?;
    Ok(report_from_integrals(&ints, params, state.grid().manifold()))
}

pub fn report_from_integrals<T: Real>(ints: &Integrals<T>, params: &SystemParams<T>, manifold: Manifold) -> FunctionalReport<T> {
    let m2: T = ints.mass2.iter().copied().sum();
    let ml2: T = ints.mass2.iter().zip(params.lambda()).map(|(&m, &l)| l * T::lit(0.5) * m).sum();
    let k: T = ints.grad2.iter().copied().sum::<T>() * T::lit(0.5);
    FunctionalReport::from_parts(params, manifold, m2.max(T::zero()).sqrt(), ml2.max(T::zero()).sqrt(), k, ints.potential)
}

/// The auxiliary function of the critical-power argument,
/// `h(l) = l^(-a) / (1 - l^2) * (1 - l^a - (n/4)(p-1)(1 - l^2))`, `a = n(p-1)/2`.
pub fn h_lambda<T: Real>(lam: T, n: usize, p: T) -> Result<T> {
    if !(lam > T::zero() && lam < T::one()) {
        bail!(Domain, "lambda = {lam} must lie in (0, 1)");
    }
    let nf = T::from_usize_lossy(n);
    let critical = T::one() + T::lit(4.0) / nf;
    if p < critical - T::lit(1e-12) {
        bail!(Domain, "p = {p} is below the critical power 1 + 4/n = {critical}");
    }
    // within the rounding band of 1 + 4/n the power is critical and h is 0
    if (p - critical).abs() <= T::lit(1e-12) {
        return Ok(T::zero());
    }
    let a = nf * (p - T::one()) * T::lit(0.5);
    let l2 = lam * lam;
    let one_m = T::one() - l2;
    // 1 - l^a - (a/2)(1 - l^2), regrouped so it vanishes exactly at a = 2
    let num = (T::one() - a * T::lit(0.5)) * one_m - l2 * ((a - T::lit(2.0)) * lam.ln()).exp_m1();
    Ok(num / (lam.powf(a) * one_m))
}

/// `sum_j ||phi_j||_{p+1}^{p+1} / (K^{n(p-1)/4} M^{p+1-n(p-1)/2})`.
pub fn gagliardo_nirenberg_ratio<T: Real>(state: &StateVector<T>, params: &SystemParams<T>) -> Result<T> {
    let ints = integrals(state, params)?;
    let rep = report_from_integrals(&ints, params, state.grid().manifold());
    if rep.mass == T::zero() || rep.kinetic == T::zero() {
        return Err(crate::error::Error::UndefinedRatio);
    }
    let n = T::from_usize_lossy(params.n());
    let kexp = n * (params.p() - T::one()) * T::lit(0.25);
    Ok(ints.lp / (rep.kinetic.powf(kexp) * rep.mass.powf(params.mass_exponent())))
}
