//! Constrained variational thresholds and ground solitary waves.
//!
//! Every threshold minimizes an objective over a constraint set that amplitude
//! scaling reaches in closed form, so the search works with the reduced
//! objective `F(u) = f(k*(u) u)`. Its gradient at a point on the constraint is
//! the objective gradient projected along the constraint gradient, which is
//! what the refinement flow descends. Results are upper bounds on the infima.

use std::sync::Arc;

use argmin::core::{CostFunction, Executor, State as _};
use argmin::solver::neldermead::NelderMead;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};
use crate::functionals::{compute_functionals, FunctionalReport};
use crate::grid::{Grid, Manifold};
use crate::hyperbolic::{laplacian_bands, solve_shifted};
use crate::nonlinear::Nonlinearity;
use crate::num::{Real, C};
use crate::params::SystemParams;
use crate::state::{build_state, Profile, StateVector};

/// Constraint functional defining a threshold's admissible set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Constraint {
    /// `G = M^(p+1-n(p-1)/2) - P/(p+1)`.
    G,
    /// `Q = K - n(p-1)/(4(p+1)) P`.
    Q,
    /// `Q* = K - (n-1)(p-1)/(4(p+1)) P`.
    QStar,
    /// `Q** = K - (p-1)/(4(p+1)) P`.
    QDStar,
}

impl Constraint {
    /// Effective dimension `d` of a `Q`-type constraint.
    fn virial_dimension<T: Real>(self, n: usize) -> Option<T> {
        match self {
            Constraint::G => None,
            Constraint::Q => Some(T::from_usize_lossy(n)),
            Constraint::QStar => Some(T::from_usize_lossy(n) - T::one()),
            Constraint::QDStar => Some(T::one()),
        }
    }

    /// Value of the constraint functional and a magnitude to measure it against.
    pub fn evaluate<T: Real>(self, report: &FunctionalReport<T>, params: &SystemParams<T>) -> (T, T) {
        match self.virial_dimension::<T>(params.n()) {
            None => {
                let a = report.mass_power(params);
                let b = report.potential / (params.p() + T::one());
                (a - b, a.abs() + b.abs())
            }
            Some(d) => {
                let b = params.virial_coefficient(d) * report.potential;
                (report.kinetic - b, report.kinetic.abs() + b.abs())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ThresholdKind {
    #[serde(rename = "d_I")]
    DI,
    #[serde(rename = "d_II")]
    DII,
    #[serde(rename = "d_HnI")]
    DHnI,
    #[serde(rename = "d_HnII")]
    DHnII,
    #[serde(rename = "d_HnII_star")]
    DHnIIStar,
    #[serde(rename = "d_S2")]
    DS2,
}

impl ThresholdKind {
    pub const ALL: [ThresholdKind; 6] = [Self::DI, Self::DII, Self::DHnI, Self::DHnII, Self::DHnIIStar, Self::DS2];

    pub fn constraint(self) -> Constraint {
        match self {
            Self::DI | Self::DHnI => Constraint::G,
            Self::DII | Self::DHnII => Constraint::Q,
            Self::DHnIIStar => Constraint::QStar,
            Self::DS2 => Constraint::QDStar,
        }
    }

    pub fn manifold(self) -> Manifold {
        match self {
            Self::DI | Self::DII => Manifold::EuclideanBox,
            Self::DHnI | Self::DHnII | Self::DHnIIStar => Manifold::HyperbolicRadial,
            Self::DS2 => Manifold::Sphere,
        }
    }

    /// `K` for the first type, `M^gamma + E` for the second.
    pub fn objective<T: Real>(self, report: &FunctionalReport<T>, params: &SystemParams<T>) -> T {
        self.objective_with(report, params, MassNorm::Plain)
    }

    /// As [`objective`](Self::objective) with the mass measured by `norm`.
    pub fn objective_with<T: Real>(self, report: &FunctionalReport<T>, params: &SystemParams<T>, norm: MassNorm) -> T {
        match self {
            Self::DI | Self::DHnI => report.kinetic,
            _ => mass_gamma(norm.of(report), params.gamma()) + report.energy,
        }
    }

    fn kinetic_objective(self) -> bool {
        matches!(self, Self::DI | Self::DHnI)
    }

    /// Admissible powers: `p >= 1 + 4/n` for the first type, `p > 1 + 4/n`
    /// for the second, `p > 1 + 4/(n-1)` for `d*`, `p > 5` on `S^2`.
    pub fn check_range<T: Real>(self, params: &SystemParams<T>) -> Result<()> {
        let n = params.n();
        let p = params.p();
        let crit = params.critical_power();
        let tol = T::lit(1e-12);
        match self {
            Self::DI | Self::DHnI if p < crit - tol => {
                bail!(Domain, "{self:?} needs p >= 1 + 4/n = {crit}, got p = {p}")
            }
            Self::DII | Self::DHnII if p <= crit + tol => {
                bail!(Domain, "{self:?} needs p > 1 + 4/n = {crit} (strict), got p = {p}")
            }
            Self::DHnIIStar => {
                if n < 2 {
                    bail!(Domain, "d*_HnII needs n >= 2");
                }
                let c = T::one() + T::lit(4.0) / T::from_usize_lossy(n - 1);
                if p <= c + tol {
                    bail!(Domain, "d*_HnII needs p > 1 + 4/(n-1) = {c}, got p = {p}");
                }
            }
            Self::DS2 => {
                if n != 2 {
                    bail!(Domain, "d_S2 lives on S^2, got n = {n}");
                }
                if p <= T::lit(5.0) + tol {
                    bail!(Domain, "d_S2 needs p > 5, got p = {p}");
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Mass entering the second-type objective: `M`, or `M_lambda` as used for
/// ground states of `-Lap w + lambda w = N(w) w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MassNorm {
    #[default]
    Plain,
    Lambda,
}

impl MassNorm {
    pub fn of<T: Real>(self, report: &FunctionalReport<T>) -> T {
        match self {
            MassNorm::Plain => report.mass,
            MassNorm::Lambda => report.mass_lambda,
        }
    }
}

fn mass_gamma<T: Real>(mass: T, gamma: T) -> T {
    if mass == T::zero() {
        T::zero()
    } else {
        mass.powf(gamma)
    }
}

/// Amplitude `k*` with `constraint(k* u) = 0`.
///
/// For `Q`-type constraints `k*^(p-1) = K / (c_d P)`; for `G`,
/// `k*^(n(p-1)/2) = (p+1) M^(p+1-n(p-1)/2) / P`.
pub fn scale_to_constraint<T: Real>(u: &StateVector<T>, params: &SystemParams<T>, constraint: Constraint) -> Result<T> {
    let rep = compute_functionals(u, params)?;
    scale_from_report(&rep, params, constraint)
}

fn scale_from_report<T: Real>(rep: &FunctionalReport<T>, params: &SystemParams<T>, constraint: Constraint) -> Result<T> {
    let p = params.p();
    if !(p > T::one()) {
        return Err(Error::NoScaling(format!("p = {p}: the constraint is homogeneous in the amplitude")));
    }
    if !(rep.potential > T::zero()) {
        return Err(Error::NoScaling(format!("P(u) = {} is not positive", rep.potential)));
    }
    let k = match constraint.virial_dimension::<T>(params.n()) {
        Some(d) => {
            if !(rep.kinetic > T::zero()) {
                return Err(Error::NoScaling("K(u) = 0".into()));
            }
            (rep.kinetic / (params.virial_coefficient(d) * rep.potential)).powf(T::one() / (p - T::one()))
        }
        None => {
            let a = T::from_usize_lossy(params.n()) * (p - T::one()) * T::lit(0.5);
            ((p + T::one()) * rep.mass_power(params) / rep.potential).powf(T::one() / a)
        }
    };
    if !(k > T::zero()) || !k.is_finite() {
        return Err(Error::NoScaling(format!("k* = {k}")));
    }
    Ok(k)
}

/// Candidate parametrization. Analytic families give each component its own
/// width and (relative to the first) amplitude; on `S^2` the profile is a
/// bump in the colatitude, projected onto the antisymmetric class.
#[derive(Debug, Clone)]
pub enum Family<T: Real> {
    Gaussian,
    /// `sech(r/w)^power`.
    Sech { power: T },
    /// A single given state, e.g. a computed ground state.
    Fixed { name: String, state: StateVector<T> },
}

impl<T: Real> Family<T> {
    pub fn name(&self) -> String {
        match self {
            Family::Gaussian => "gaussian".into(),
            Family::Sech { power } => format!("sech^{power}"),
            Family::Fixed { name, .. } => name.clone(),
        }
    }

    fn dimension(&self, comps: usize) -> usize {
        match self {
            Family::Fixed { .. } => 0,
            _ => 2 * comps - 1,
        }
    }

    fn build(&self, grid: &Arc<Grid<T>>, comps: usize, x: &[f64]) -> Result<StateVector<T>> {
        let profiles: Vec<Profile<T>> = (0..comps)
            .map(|j| {
                let w = T::lit(x[j].exp());
                let a = if j == 0 { T::one() } else { T::lit(x[comps + j - 1].exp()) };
                match self {
                    Family::Gaussian => Profile::gaussian(a, w),
                    Family::Sech { power } => Profile::sech_power(a, w, *power),
                    Family::Fixed { .. } => unreachable!(),
                }
            })
            .collect();
        build_state(grid, &profiles, &vec![T::zero(); comps])
    }
}

/// Search and refinement settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Widths in the coarse log-spaced scan.
    pub scan_points: usize,
    /// Nelder-Mead iterations (families with at most six parameters).
    pub simplex_iters: u64,
    pub flow_iters: usize,
    /// Target for the relative first-order residual of the flow.
    pub flow_tolerance: f64,
    pub refine: bool,
    pub mass: MassNorm,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            scan_points: 16,
            simplex_iters: 200,
            flow_iters: 3000,
            flow_tolerance: 1e-6,
            refine: true,
            mass: MassNorm::Plain,
        }
    }
}

/// Upper-bound estimate of a threshold with its diagnostics.
#[derive(Debug, Clone)]
pub struct ThresholdEstimate<T: Real> {
    pub kind: ThresholdKind,
    pub value: T,
    pub gamma: T,
    pub mass: MassNorm,
    /// Family whose refined candidate attained `value`.
    pub family: String,
    /// Best value over the analytic family alone, before refinement.
    pub family_value: T,
    /// `(family, refined value)` for every feasible family searched.
    pub per_family: Vec<(String, T)>,
    pub minimizer: StateVector<T>,
    /// `|constraint| / magnitude` at the minimizer.
    pub constraint_residual: T,
    pub evaluations: usize,
    pub iterations: usize,
    /// Relative first-order residual of the refined minimizer.
    pub residual: T,
    pub converged: bool,
}

/// Minimizes `kind`'s objective over each family on `grid` and refines the
/// best member by constrained flow. The value is an upper bound.
pub fn estimate_threshold<T: Real>(
    kind: ThresholdKind,
    params: &SystemParams<T>,
    grid: &Arc<Grid<T>>,
    families: &[Family<T>],
    config: &OptimizerConfig,
) -> Result<ThresholdEstimate<T>> {
    if grid.manifold() != kind.manifold() {
        bail!(Contract, "{kind:?} is posed on {:?}, grid is {:?}", kind.manifold(), grid.manifold());
    }
    if grid.dimension() != params.n() {
        bail!(Parameter, "grid dimension {} does not match n = {}", grid.dimension(), params.n());
    }
    kind.check_range(params)?;
    if families.is_empty() {
        bail!(Parameter, "no candidate family given");
    }
    let problem = Problem { kind, params, grid, config };
    let mut best: Option<ThresholdEstimate<T>> = None;
    let mut per_family = Vec::new();
    let mut evaluations = 0;
    for fam in families {
        let Some((x_state, fam_value, evals)) = problem.search(fam)? else {
            continue;
        };
        evaluations += evals;
        let flow = if config.refine { problem.refine(x_state)? } else { problem.unrefined(x_state)? };
        per_family.push((fam.name(), flow.value));
        let better = best.as_ref().is_none_or(|b| flow.value < b.value);
        if better {
            let rep = compute_functionals(&flow.state, params)?;
            let (c, mag) = kind.constraint().evaluate(&rep, params);
            best = Some(ThresholdEstimate {
                kind,
                value: flow.value,
                gamma: params.gamma(),
                mass: config.mass,
                family: fam.name(),
                family_value: fam_value,
                per_family: Vec::new(),
                minimizer: flow.state,
                constraint_residual: if mag > T::zero() { c.abs() / mag } else { c.abs() },
                evaluations: 0,
                iterations: flow.iterations,
                residual: flow.residual,
                converged: flow.converged,
            });
        }
    }
    let names: Vec<String> = families.iter().map(|f| f.name()).collect();
    let mut est = best.ok_or_else(|| Error::Infeasible(names.join(", ")))?;
    est.per_family = per_family;
    est.evaluations = evaluations;
    Ok(est)
}

struct Problem<'a, T: Real> {
    kind: ThresholdKind,
    params: &'a SystemParams<T>,
    grid: &'a Arc<Grid<T>>,
    config: &'a OptimizerConfig,
}

struct FlowResult<T: Real> {
    state: StateVector<T>,
    value: T,
    iterations: usize,
    residual: T,
    converged: bool,
}

/// Penalty standing in for infeasible candidates inside the simplex search.
const INFEASIBLE: f64 = 1e300;

impl<T: Real> Problem<'_, T> {
    /// Projects onto the constraint; `None` when scaling cannot reach it.
    fn project(&self, u: &StateVector<T>) -> Result<Option<(StateVector<T>, T)>> {
        let u = if self.kind == ThresholdKind::DS2 { antisymmetric_part(u) } else { u.clone() };
        let rep = match compute_functionals(&u, self.params) {
            Ok(r) => r,
            Err(Error::Evaluation(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        match scale_from_report(&rep, self.params, self.kind.constraint()) {
            Ok(k) => {
                let v = u.scaled(k);
                let r = compute_functionals(&v, self.params)?;
                let f = self.kind.objective_with(&r, self.params, self.config.mass);
                Ok(f.is_finite().then_some((v, f)))
            }
            Err(Error::NoScaling(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn width_bounds(&self) -> (f64, f64) {
        match self.grid.as_ref() {
            Grid::Euclidean(g) => (2.0 * g.dx().as_f64(), g.half_length().as_f64() / 4.0),
            Grid::Radial(g) => (2.0 * g.spacing().as_f64(), g.radius().as_f64() / 4.0),
            Grid::Sphere(g) => (2.0 * std::f64::consts::PI / g.lmax().max(1) as f64, 0.6),
        }
    }

    fn cost(&self, fam: &Family<T>, x: &[f64]) -> Result<Option<(StateVector<T>, T)>> {
        let comps = self.params.components();
        let (lo, hi) = self.width_bounds();
        if x[..comps].iter().any(|&l| !(l >= lo.ln() && l <= hi.ln())) || x[comps..].iter().any(|a| a.abs() > 12.0) {
            return Ok(None);
        }
        self.project(&fam.build(self.grid, comps, x)?)
    }

    /// Coarse scan then simplex polish. Returns the best projected member.
    fn search(&self, fam: &Family<T>) -> Result<Option<(StateVector<T>, T, usize)>> {
        let comps = self.params.components();
        if let Family::Fixed { state, .. } = fam {
            if state.n_components() != comps || !Arc::ptr_eq(state.grid(), self.grid) && state.grid().len() != self.grid.len() {
                bail!(Parameter, "fixed candidate does not match the grid or component count");
            }
            let s = StateVector::new(self.grid.clone(), T::zero(), state.components().to_vec())?;
            return Ok(self.project(&s)?.map(|(v, f)| (v, f, 1)));
        }
        let (lo, hi) = self.width_bounds();
        // K on {G = 0} is invariant under u -> k u(mu x) on R^n; on the box
        // the free direction drifts towards the constant state, so the first
        // width is pinned well inside the domain.
        let pinned = self.kind == ThresholdKind::DI;
        let m = if pinned { 1 } else { self.config.scan_points.max(2) };
        let ratios: &[f64] = if comps == 1 { &[1.0] } else { &[0.25, 0.5, 1.0, 2.0, 4.0] };
        let mut grid_x = Vec::new();
        for i in 0..m {
            let lw = if pinned {
                (hi / 4.0).ln()
            } else {
                lo.ln() + (hi.ln() - lo.ln()) * (i as f64 + 0.5) / m as f64
            };
            for &r in ratios {
                let mut x = vec![lw; comps];
                x.extend(std::iter::repeat_n(r.ln(), comps - 1));
                grid_x.push(x);
            }
        }
        let scanned: Vec<Option<f64>> = grid_x
            .par_iter()
            .map(|x| self.cost(fam, x).ok().flatten().map(|(_, f)| f.as_f64()))
            .collect();
        let mut evals = grid_x.len();
        let Some((i0, _)) = scanned
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|f| (i, f)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
        else {
            return Ok(None);
        };
        let mut x_best = grid_x[i0].clone();
        let free: Vec<usize> = (usize::from(pinned)..fam.dimension(comps)).collect();
        if !free.is_empty() && free.len() <= 6 && self.config.simplex_iters > 0 {
            let start: Vec<f64> = free.iter().map(|&i| x_best[i]).collect();
            let mut simplex = vec![start.clone()];
            for d in 0..free.len() {
                let mut x = start.clone();
                x[d] += 0.25;
                simplex.push(x);
            }
            let cost = SimplexCost { problem: self, family: fam, base: x_best.clone(), free: free.clone(), calls: std::cell::Cell::new(0) };
            let solver = NelderMead::new(simplex).with_sd_tolerance(1e-12).map_err(|e| Error::Evaluation(e.to_string()))?;
            let res = Executor::new(cost, solver)
                .configure(|s| s.max_iters(self.config.simplex_iters))
                .run()
                .map_err(|e| Error::Evaluation(e.to_string()))?;
            evals += res.problem.problem.as_ref().map_or(0, |c| c.calls.get());
            if let Some(x) = res.state().get_best_param() {
                if res.state().get_best_cost() < INFEASIBLE {
                    for (&i, &v) in free.iter().zip(x) {
                        x_best[i] = v;
                    }
                }
            }
        }
        let (state, value) = self.cost(fam, &x_best)?.ok_or_else(|| Error::Infeasible(fam.name()))?;
        Ok(Some((state, value, evals)))
    }

    fn unrefined(&self, state: StateVector<T>) -> Result<FlowResult<T>> {
        let rep = compute_functionals(&state, self.params)?;
        let value = self.kind.objective_with(&rep, self.params, self.config.mass);
        let (r, gf) = self.reduced_gradient(&state, &rep)?;
        let ops = Ops::new(self.grid);
        let shift = preconditioner_shift(&rep);
        let residual = ops.dual_ratio(&r, &gf, shift);
        Ok(FlowResult { state, value, iterations: 0, residual, converged: false })
    }

    /// Reduced gradient `grad f - (<grad f, v>/<grad c, v>) grad c` at `v` on
    /// the constraint, and the gradients of the objective's separate terms
    /// (which set the scale of the residual, since `grad f` itself may vanish).
    fn reduced_gradient(&self, v: &StateVector<T>, rep: &FunctionalReport<T>) -> Result<(Fields<T>, Vec<Fields<T>>)> {
        let ops = Ops::new(self.grid);
        let params = self.params;
        let u = v.components();
        let g_k = ops.neg_laplacian(u);
        let g_p = ops.potential_gradient(u, params);
        let p1 = params.p() + T::one();
        let m = rep.mass;
        // d(M^e) = e M^(e-2) v
        let mass_grad = |e: T| -> Fields<T> { scale(u, e * m.powf(e - T::lit(2.0))) };
        let objective_mass = match self.config.mass {
            MassNorm::Plain => mass_grad(params.gamma()),
            MassNorm::Lambda => {
                // d(M_lambda^e) = e M_lambda^(e-2) (lambda_j / 2) v_j
                let e = params.gamma();
                let c = e * rep.mass_lambda.powf(e - T::lit(2.0)) * T::lit(0.5);
                u.iter().zip(params.lambda()).map(|(uj, &l)| uj.iter().map(|&z| z * (c * l)).collect()).collect()
            }
        };
        let terms = if self.kind.kinetic_objective() {
            vec![g_k.clone()]
        } else {
            vec![objective_mass, g_k.clone(), scale(&g_p, -T::one() / p1)]
        };
        let gf = terms.iter().skip(1).fold(terms[0].clone(), |acc, t| axpy(&acc, T::one(), t));
        let gc = match self.kind.constraint().virial_dimension::<T>(params.n()) {
            None => axpy(&mass_grad(params.mass_exponent()), -T::one() / p1, &g_p),
            Some(d) => axpy(&g_k, -params.virial_coefficient(d), &g_p),
        };
        let denom = ops.inner(&gc, u);
        if !(denom.abs() > T::zero()) {
            bail!(Evaluation, "constraint gradient is orthogonal to the scaling direction");
        }
        let mu = ops.inner(&gf, u) / denom;
        let mut r = axpy(&gf, -mu, &gc);
        if self.kind == ThresholdKind::DS2 {
            ops.project_antisymmetric(&mut r);
        }
        Ok((r, terms))
    }

    /// Preconditioned Polak-Ribiere descent of the reduced objective with
    /// Armijo backtracking; every iterate is rescaled onto the constraint.
    fn refine(&self, start: StateVector<T>) -> Result<FlowResult<T>> {
        let ops = Ops::new(self.grid);
        let mut v = start;
        let mut rep = compute_functionals(&v, self.params)?;
        let mut fv = self.kind.objective_with(&rep, self.params, self.config.mass);
        let shift = preconditioner_shift(&rep);
        let (mut r, mut gf) = self.reduced_gradient(&v, &rep)?;
        let mut z = ops.precondition(&r, shift);
        let mut d = scale(&z, -T::one());
        let mut step = T::one();
        let tol = T::lit(self.config.flow_tolerance);
        let mut residual = ops.dual_ratio(&r, &gf, shift);
        let mut converged = residual <= tol;
        let mut iterations = 0;
        while !converged && iterations < self.config.flow_iters {
            iterations += 1;
            let mut slope = ops.inner(&r, &d);
            if !(slope < T::zero()) {
                d = scale(&z, -T::one());
                slope = -ops.inner(&r, &z);
            }
            let norm_v = ops.inner(v.components(), v.components()).sqrt();
            let norm_d = ops.inner(&d, &d).sqrt();
            // never move more than a fifth of the state in one step
            step = step.min(T::lit(0.2) * norm_v / norm_d);
            let mut accepted = None;
            for _ in 0..60 {
                let trial = StateVector::new(v.grid().clone(), T::zero(), axpy(v.components(), step, &d))?;
                if let Some((w, fw)) = self.project(&trial)? {
                    if fw <= fv + T::lit(1e-4) * step * slope {
                        accepted = Some((w, fw));
                        break;
                    }
                }
                step = step * T::lit(0.5);
            }
            let Some((w, fw)) = accepted else {
                break;
            };
            v = w;
            fv = fw;
            rep = compute_functionals(&v, self.params)?;
            let (r_new, gf_new) = self.reduced_gradient(&v, &rep)?;
            let z_new = ops.precondition(&r_new, shift);
            let num = ops.inner(&r_new, &axpy(&z_new, -T::one(), &z));
            let den = ops.inner(&r, &z);
            let beta = if den > T::zero() { (num / den).max(T::zero()) } else { T::zero() };
            d = axpy(&scale(&z_new, -T::one()), beta, &d);
            r = r_new;
            z = z_new;
            gf = gf_new;
            step = step * T::lit(2.0);
            residual = ops.dual_ratio(&r, &gf, shift);
            converged = residual <= tol;
        }
        Ok(FlowResult { state: v, value: fv, iterations, residual, converged })
    }
}

fn preconditioner_shift<T: Real>(rep: &FunctionalReport<T>) -> T {
    let m2 = rep.mass * rep.mass;
    if m2 > T::zero() && rep.kinetic > T::zero() {
        T::lit(2.0) * rep.kinetic / m2
    } else {
        T::one()
    }
}

fn antisymmetric_part<T: Real>(u: &StateVector<T>) -> StateVector<T> {
    let mut comps = u.components().to_vec();
    Ops::new(u.grid()).project_antisymmetric(&mut comps);
    StateVector::new(u.grid().clone(), u.t(), comps).expect("projection keeps the shape")
}

/// Simplex objective over the free coordinates `free` of `base`.
struct SimplexCost<'a, 'b, T: Real> {
    problem: &'a Problem<'b, T>,
    family: &'a Family<T>,
    base: Vec<f64>,
    free: Vec<usize>,
    calls: std::cell::Cell<usize>,
}

impl<T: Real> CostFunction for SimplexCost<'_, '_, T> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        self.calls.set(self.calls.get() + 1);
        let mut full = self.base.clone();
        for (&i, &v) in self.free.iter().zip(x) {
            full[i] = v;
        }
        Ok(match self.problem.cost(self.family, &full) {
            Ok(Some((_, f))) => f.as_f64(),
            _ => INFEASIBLE,
        })
    }
}

type Fields<T> = Vec<Vec<C<T>>>;

fn axpy<T: Real>(x: &[Vec<C<T>>], a: T, y: &[Vec<C<T>>]) -> Fields<T> {
    x.iter().zip(y).map(|(xj, yj)| xj.iter().zip(yj).map(|(&p, &q)| p + q * a).collect()).collect()
}

fn scale<T: Real>(x: &[Vec<C<T>>], a: T) -> Fields<T> {
    x.iter().map(|xj| xj.iter().map(|&p| p * a).collect()).collect()
}

/// Inner product, Laplacian, nonlinear gradient and `(shift - Lap)^(-1)` in
/// the quadrature of each grid (harmonic coefficients on the sphere).
struct Ops<'a, T: Real> {
    grid: &'a Grid<T>,
    bands: Option<(Vec<T>, Vec<T>, Vec<T>)>,
}

impl<'a, T: Real> Ops<'a, T> {
    fn new(grid: &'a Grid<T>) -> Self {
        let bands = grid.as_radial().map(laplacian_bands);
        Self { grid, bands }
    }

    fn inner(&self, a: &[Vec<C<T>>], b: &[Vec<C<T>>]) -> T {
        let mut s = T::zero();
        for (aj, bj) in a.iter().zip(b) {
            s = s + match self.grid {
                Grid::Euclidean(g) => aj.iter().zip(bj).map(|(x, y)| (x.conj() * y).re).sum::<T>() * g.cell_volume(),
                Grid::Radial(g) => {
                    (0..aj.len()).map(|k| (aj[k].conj() * bj[k]).re * g.weight(k)).sum::<T>()
                }
                Grid::Sphere(_) => aj.iter().zip(bj).map(|(x, y)| (x.conj() * y).re).sum::<T>(),
            };
        }
        s
    }

    fn neg_laplacian(&self, u: &[Vec<C<T>>]) -> Fields<T> {
        u.iter()
            .map(|c| match self.grid {
                Grid::Euclidean(g) => g.laplacian(c).into_iter().map(|z| -z).collect(),
                Grid::Radial(g) => g.laplacian(c).into_iter().map(|z| -z).collect(),
                Grid::Sphere(g) => {
                    let mut out = c.clone();
                    for l in 0..=g.lmax() {
                        let ev = T::from_usize_lossy(l * (l + 1));
                        for m in -(l as i64)..=(l as i64) {
                            let i = crate::grid::sh_index(l, m);
                            out[i] = out[i] * ev;
                        }
                    }
                    out
                }
            })
            .collect()
    }

    /// `N_j u_j` for every component (in coefficients on the sphere).
    fn nonlinear(&self, u: &[Vec<C<T>>], params: &SystemParams<T>) -> Fields<T> {
        let nl = Nonlinearity::new(params);
        let nodes: Fields<T> = match self.grid {
            Grid::Sphere(g) => u.iter().map(|c| g.synthesize(c)).collect(),
            _ => u.to_vec(),
        };
        let comps = nodes.len();
        let len = nodes[0].len();
        let mut out = vec![vec![C::new(T::zero(), T::zero()); len]; comps];
        let mut vals = vec![C::new(T::zero(), T::zero()); comps];
        let mut res = vals.clone();
        for i in 0..len {
            for j in 0..comps {
                vals[j] = nodes[j][i];
            }
            nl.apply(&vals, &mut res);
            for j in 0..comps {
                out[j][i] = res[j];
            }
        }
        match self.grid {
            Grid::Sphere(g) => out.iter().map(|c| g.analyze(c)).collect(),
            _ => out,
        }
    }

    /// Gradient of the potential, `(p+1) N_j u_j`.
    fn potential_gradient(&self, u: &[Vec<C<T>>], params: &SystemParams<T>) -> Fields<T> {
        scale(&self.nonlinear(u, params), params.p() + T::one())
    }

    fn precondition(&self, r: &[Vec<C<T>>], shift: T) -> Fields<T> {
        r.iter().map(|c| self.solve_shifted(c, shift)).collect()
    }

    /// `(shift - Lap)^(-1) c`.
    fn solve_shifted(&self, c: &[C<T>], shift: T) -> Vec<C<T>> {
        match self.grid {
            Grid::Euclidean(g) => {
                let mut s = g.fft(c);
                for (z, &k2) in s.iter_mut().zip(g.k_squared()) {
                    *z = *z / (shift + k2);
                }
                g.inverse(&mut s);
                s
            }
            Grid::Radial(_) => {
                let mut out = c.to_vec();
                solve_shifted(self.bands.as_ref().expect("radial bands"), shift, &mut out);
                out
            }
            Grid::Sphere(g) => {
                let mut out = c.to_vec();
                for l in 0..=g.lmax() {
                    let f = T::one() / (shift + T::from_usize_lossy(l * (l + 1)));
                    for m in -(l as i64)..=(l as i64) {
                        let i = crate::grid::sh_index(l, m);
                        out[i] = out[i] * f;
                    }
                }
                out
            }
        }
    }

    fn dual_norm(&self, r: &[Vec<C<T>>], shift: T) -> T {
        self.inner(r, &self.precondition(r, shift)).max(T::zero()).sqrt()
    }

    /// `||r||_* / max_i ||g_i||_*` in the preconditioned dual norm.
    fn dual_ratio(&self, r: &[Vec<C<T>>], terms: &[Fields<T>], shift: T) -> T {
        let rn = self.dual_norm(r, shift);
        let gn = terms.iter().map(|g| self.dual_norm(g, shift)).fold(T::zero(), T::max);
        if gn > T::zero() {
            rn / gn
        } else {
            rn
        }
    }

    fn project_antisymmetric(&self, u: &mut [Vec<C<T>>]) {
        if let Grid::Sphere(g) = self.grid {
            for c in u.iter_mut() {
                crate::sphere::project_coeffs(g.lmax(), c);
            }
        }
    }
}

/// Positive solution of `Lap w_j - lambda_j w_j + N_j(w) w_j = 0`.
#[derive(Debug, Clone)]
pub struct GroundState<T: Real> {
    pub w: StateVector<T>,
    pub lambda: Vec<T>,
    /// `max_j ||Lap w_j - lambda_j w_j + N_j w_j||_2 / ||w_j||_2`.
    pub residual: T,
    pub iterations: usize,
    pub converged: bool,
}

impl<T: Real> GroundState<T> {
    /// Accepted when the stationarity residual is at most `1e-8`.
    pub fn accepted(&self) -> bool {
        self.residual <= T::lit(1e-8)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundStateConfig {
    /// Imaginary-time steps before the fixed-point polish.
    pub flow_steps: usize,
    pub flow_tau: f64,
    pub max_iter: usize,
    pub tolerance: f64,
}

impl Default for GroundStateConfig {
    fn default() -> Self {
        Self { flow_steps: 100, flow_tau: 0.1, max_iter: 3000, tolerance: 1e-11 }
    }
}

/// Normalized gradient flow (semi-implicit imaginary time, each component
/// rescaled onto its own Nehari identity every step) followed by a
/// per-component Petviashvili iteration on the fixed-`lambda` equation.
pub fn ground_state_solve<T: Real>(
    params: &SystemParams<T>,
    lambda: &[T],
    init: &StateVector<T>,
    config: &GroundStateConfig,
) -> Result<GroundState<T>> {
    let comps = params.components();
    if lambda.len() != comps {
        bail!(Parameter, "{} frequencies for {comps} components", lambda.len());
    }
    if let Some(l) = lambda.iter().find(|l| !(**l > T::zero())) {
        bail!(Parameter, "frequency {l} must be positive");
    }
    if !(params.p() > T::one()) {
        bail!(Domain, "p = {} must exceed 1", params.p());
    }
    if init.n_components() != comps {
        bail!(Parameter, "initial guess has {} components, expected {comps}", init.n_components());
    }
    if init.grid().manifold() == Manifold::Sphere {
        bail!(Contract, "ground states are computed on the box and on radial H^n");
    }
    let ops = Ops::new(init.grid());
    let pm1 = params.p() - T::one();
    let mut w: Fields<T> = init.components().iter().map(|c| c.iter().map(|z| C::new(z.norm(), T::zero())).collect()).collect();
    let apply_l = |c: &[C<T>], lam: T| -> Vec<C<T>> {
        let nl = ops.neg_laplacian(&[c.to_vec()]).pop().expect("one component");
        nl.into_iter().zip(c).map(|(a, &b)| a + b * lam).collect()
    };
    let single = |c: &[C<T>]| vec![c.to_vec()];
    let nehari = |w: &Fields<T>, nw: &Fields<T>, j: usize| -> Result<T> {
        let a = ops.inner(&single(&w[j]), &single(&apply_l(&w[j], lambda[j])));
        let b = ops.inner(&single(&w[j]), &single(&nw[j]));
        if !(b > T::zero()) || !(a > T::zero()) || !(a / b).is_finite() {
            return Err(Error::NoGroundState(format!("component {j} lost its focusing part (<w, N w> = {b})")));
        }
        Ok(a / b)
    };
    let tau = T::lit(config.flow_tau);
    for _ in 0..config.flow_steps {
        let nw = ops.nonlinear(&w, params);
        for j in 0..comps {
            let rhs: Vec<C<T>> = w[j].iter().zip(&nw[j]).map(|(&a, &b)| (a + b * tau) / tau).collect();
            w[j] = ops.solve_shifted(&rhs, T::one() / tau + lambda[j]);
        }
        let nw = ops.nonlinear(&w, params);
        for j in 0..comps {
            let c = nehari(&w, &nw, j)?.powf(T::one() / pm1);
            w[j] = w[j].iter().map(|&z| z * c).collect();
        }
    }
    let residual_of = |w: &Fields<T>| -> T {
        let nw = ops.nonlinear(w, params);
        (0..comps)
            .map(|j| {
                let lw = apply_l(&w[j], lambda[j]);
                let r: Vec<C<T>> = nw[j].iter().zip(&lw).map(|(&a, &b)| a - b).collect();
                (ops.inner(&single(&r), &single(&r)) / ops.inner(&single(&w[j]), &single(&w[j]))).sqrt()
            })
            .fold(T::zero(), T::max)
    };
    let expo = params.p() / pm1;
    let tol = T::lit(config.tolerance);
    let mut residual = residual_of(&w);
    let mut best = (residual, w.clone());
    let mut iterations = 0;
    while residual > tol && iterations < config.max_iter {
        iterations += 1;
        let nw = ops.nonlinear(&w, params);
        let mut next = Vec::with_capacity(comps);
        for j in 0..comps {
            let f = nehari(&w, &nw, j)?.powf(expo);
            next.push(ops.solve_shifted(&nw[j], lambda[j]).into_iter().map(|z| z * f).collect());
        }
        w = next;
        residual = residual_of(&w);
        if !residual.is_finite() {
            return Err(Error::NoGroundState("fixed-point iteration diverged".into()));
        }
        if residual < best.0 {
            best = (residual, w.clone());
        }
    }
    let (residual, w) = best;
    for (j, c) in w.iter().enumerate() {
        let top = c.iter().map(|z| z.re).fold(T::zero(), T::max);
        if !(top > T::zero()) {
            return Err(Error::NoGroundState(format!("component {j} collapsed to zero")));
        }
    }
    Ok(GroundState {
        w: StateVector::new(init.grid().clone(), T::zero(), w)?,
        lambda: lambda.to_vec(),
        residual,
        iterations,
        converged: residual <= tol,
    })
}

/// The identities a ground state satisfies, each with its size relative to
/// `||grad w||^2 + 2 M_lambda^2 + P`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationarityReport<T> {
    /// `||grad w||^2 + 2 M_lambda^2 - P`.
    pub s: T,
    /// `(n/2 - 1)||grad w||^2 + n M_lambda^2 - n P/(p+1)`.
    pub pohozaev: T,
    pub q: T,
    /// `(n S/2 - Pohozaev)/2`, equal to `Q` identically.
    pub q_from_identities: T,
    pub scale: T,
    pub s_rel: T,
    pub pohozaev_rel: T,
    pub q_rel: T,
}

pub fn verify_stationarity<T: Real>(gs: &GroundState<T>, params: &SystemParams<T>) -> Result<StationarityReport<T>> {
    let params = params.clone().with_lambda(gs.lambda.clone())?;
    let rep = compute_functionals(&gs.w, &params)?;
    let n = T::from_usize_lossy(params.n());
    let pohozaev = rep.pohozaev(&params);
    let ml2 = rep.mass_lambda * rep.mass_lambda;
    let scale = T::lit(2.0) * rep.kinetic + T::lit(2.0) * ml2 + rep.potential.abs();
    let rel = |v: T| if scale > T::zero() { v.abs() / scale } else { v.abs() };
    Ok(StationarityReport {
        s: rep.s,
        pohozaev,
        q: rep.q,
        q_from_identities: (n * rep.s * T::lit(0.5) - pohozaev) * T::lit(0.5),
        scale,
        s_rel: rel(rep.s),
        pohozaev_rel: rel(pohozaev),
        q_rel: rel(rep.q),
    })
}

/// One point of `k -> (M_lambda(k w))^2 + E(k w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingPoint<T> {
    pub k: T,
    pub value: T,
    pub s: T,
    pub q: T,
}

/// Samples the action along amplitude scalings of a ground state; its
/// derivative in `k` is `S(k w)/k`.
pub fn scaling_profile<T: Real>(gs: &GroundState<T>, params: &SystemParams<T>, ks: &[T]) -> Result<Vec<ScalingPoint<T>>> {
    let params = params.clone().with_lambda(gs.lambda.clone())?;
    ks.iter()
        .map(|&k| {
            let rep = compute_functionals(&gs.w.scaled(k), &params)?;
            Ok(ScalingPoint { k, value: rep.mass_lambda * rep.mass_lambda + rep.energy, s: rep.s, q: rep.q })
        })
        .collect()
}
