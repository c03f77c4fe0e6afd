//! Virial quantities `J`, `J'`, `J''`, their consistency along runs, and the
//! classification of initial data against the sharp thresholds.

use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};
use crate::functionals::{compute_functionals, FunctionalReport};
use crate::grid::{Grid, Manifold};
use crate::hyperbolic::{default_weight, WeightKind, WeightSpec};
use crate::nonlinear::Nonlinearity;
use crate::num::{Real, C};
use crate::params::SystemParams;
use crate::solver::RunRecord;
use crate::sphere::{parity_defect, sphere_fields};
use crate::state::StateVector;
use crate::variational::{Constraint, MassNorm, ThresholdEstimate, ThresholdKind};

/// `J = sum_j int rho |phi_j|^2`, `J'`, and the value (box) or upper bound
/// (`H^n`) of `J''`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VirialSample<T> {
    pub j: T,
    pub jprime: T,
    /// `16 Q` for `|x|^2` and `r^2`, `8/(n-1) Q*` for `rho*`.
    pub jpp: T,
    /// The full four-term expression for `J''` on radial grids.
    pub jpp_exact: Option<T>,
}

pub fn virial_quantities<T: Real>(
    state: &StateVector<T>,
    weight: &WeightSpec<T>,
    report: &FunctionalReport<T>,
    params: &SystemParams<T>,
) -> Result<VirialSample<T>> {
    let grid = state.grid();
    if weight.rho.len() != grid.len() {
        bail!(Contract, "weight table has {} nodes, state has {}", weight.rho.len(), grid.len());
    }
    let n = T::from_usize_lossy(params.n());
    match (grid.as_ref(), weight.kind) {
        (Grid::Euclidean(g), WeightKind::EuclideanSquare) => {
            let dv = g.cell_volume();
            let mut j = T::zero();
            let mut jp = T::zero();
            for c in state.components() {
                j = j + c.iter().zip(&weight.rho).map(|(z, &r)| z.norm_sqr() * r).sum::<T>() * dv;
                let mut xgrad = vec![C::new(T::zero(), T::zero()); c.len()];
                for a in 0..g.dimension() {
                    let d = g.derivative(c, a);
                    for (f, v) in xgrad.iter_mut().enumerate() {
                        *v = *v + d[f] * g.position(f)[a];
                    }
                }
                jp = jp + xgrad.iter().zip(c).map(|(x, z)| (x * z.conj()).im).sum::<T>() * dv;
            }
            Ok(VirialSample { j, jprime: T::lit(4.0) * jp, jpp: T::lit(16.0) * report.q, jpp_exact: None })
        }
        (Grid::Radial(g), WeightKind::HyperbolicSquare | WeightKind::HyperbolicStar) => {
            let w = g.weights();
            let mut j = T::zero();
            let mut jp = T::zero();
            let mut hess = T::zero();
            let mut bilap = T::zero();
            for c in state.components() {
                let lap = g.laplacian(c);
                for k in 0..c.len() {
                    j = j + w[k] * weight.rho[k] * c[k].norm_sqr();
                    jp = jp + w[k] * weight.rho[k] * (c[k].conj() * lap[k]).im;
                    bilap = bilap + w[k] * weight.bilap_rho[k] * c[k].norm_sqr();
                }
                // rho'' |d_r phi|^2 at faces, rho'' averaged from the adjacent nodes
                let s = g.face_areas();
                let inv_h = T::one() / g.spacing();
                let last = c.len() - 1;
                for f in 1..c.len() {
                    let d2 = (weight.d2rho[f] + weight.d2rho[f - 1]) * T::lit(0.5);
                    hess = hess + d2 * s[f] * (c[f] - c[f - 1]).norm_sqr() * inv_h;
                }
                hess = hess + weight.d2rho[last] * T::lit(2.0) * s[c.len()] * c[last].norm_sqr() * inv_h;
            }
            hess = hess * g.sphere_area();
            let nl = Nonlinearity::new(params);
            let mut lap_pot = T::zero();
            let mut abs2 = vec![T::zero(); state.n_components()];
            for k in 0..g.len() {
                for (jx, a) in abs2.iter_mut().enumerate() {
                    *a = state.component(jx)[k].norm_sqr();
                }
                lap_pot = lap_pot + w[k] * weight.lap_rho[k] * nl.density(&abs2);
            }
            let p = params.p();
            let exact = T::lit(4.0) * hess - bilap - T::lit(2.0) * (p - T::one()) / (p + T::one()) * lap_pot;
            let jpp = match weight.kind {
                WeightKind::HyperbolicStar => {
                    T::lit(8.0) / (n - T::one()) * report.q_star.unwrap_or(T::nan())
                }
                _ => T::lit(16.0) * report.q,
            };
            Ok(VirialSample { j, jprime: T::lit(-2.0) * jp, jpp, jpp_exact: Some(exact) })
        }
        (g, k) => bail!(Contract, "weight {k:?} does not apply to a {:?} state", g.manifold()),
    }
}

/// Theorems and small-data criteria the classifier evaluates. The corollary
/// variants pick their threshold from the state's manifold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Theorem {
    /// First-type threshold on `R^n`: `M^alpha + E < d_I`, sign of `G`.
    T1,
    /// Second-type threshold on `R^n`: `M^gamma + E < d_II`, sign of `Q`.
    T2,
    /// First-type threshold for radial data on `H^n` (`rho = r^2`).
    T4,
    #[serde(rename = "T5-radial")]
    T5Radial,
    /// Second type on `H^n` with the `rho*` weight and `d*`.
    #[serde(rename = "T5-nonradial")]
    T5Nonradial,
    /// Antisymmetric data on `S^2`, sign of `Q**`.
    T7,
    /// `K + M^alpha < d_I` (or `d_HnI`).
    SmallDataI,
    /// `K + M^gamma < d_II` (or `d_HnII`, `d_S2`).
    SmallDataII,
}

impl Theorem {
    pub const ALL: [Theorem; 8] = [
        Self::T1,
        Self::T2,
        Self::T4,
        Self::T5Radial,
        Self::T5Nonradial,
        Self::T7,
        Self::SmallDataI,
        Self::SmallDataII,
    ];

    /// Threshold the theorem compares against on `manifold`.
    pub fn threshold_kind(self, manifold: Manifold) -> Result<ThresholdKind> {
        use Manifold::*;
        Ok(match (self, manifold) {
            (Self::T1, EuclideanBox) | (Self::SmallDataI, EuclideanBox) => ThresholdKind::DI,
            (Self::T2, EuclideanBox) | (Self::SmallDataII, EuclideanBox) => ThresholdKind::DII,
            (Self::T4, HyperbolicRadial) | (Self::SmallDataI, HyperbolicRadial) => ThresholdKind::DHnI,
            (Self::T5Radial, HyperbolicRadial) | (Self::SmallDataII, HyperbolicRadial) => ThresholdKind::DHnII,
            (Self::T5Nonradial, HyperbolicRadial) => ThresholdKind::DHnIIStar,
            (Self::T7, Sphere) | (Self::SmallDataII, Sphere) => ThresholdKind::DS2,
            (t, m) => bail!(Contract, "{t:?} does not apply to a {m:?} state"),
        })
    }

    /// Functional whose sign splits the dichotomy; `None` for small-data criteria.
    pub fn sign_functional(self) -> Option<Constraint> {
        match self {
            Self::T1 | Self::T4 => Some(Constraint::G),
            Self::T2 | Self::T5Radial => Some(Constraint::Q),
            Self::T5Nonradial => Some(Constraint::QStar),
            Self::T7 => Some(Constraint::QDStar),
            Self::SmallDataI | Self::SmallDataII => None,
        }
    }
}

/// One numerically evaluated hypothesis `lhs < rhs` (or `<=` when `strict` is false).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hypothesis<T> {
    pub name: String,
    pub lhs: T,
    pub rhs: T,
    pub strict: bool,
    /// `rhs - lhs`.
    pub margin: T,
    pub holds: bool,
}

impl<T: Real> Hypothesis<T> {
    fn less(name: &str, lhs: T, rhs: T) -> Self {
        let holds = lhs < rhs;
        Self { name: name.into(), lhs, rhs, strict: true, margin: rhs - lhs, holds }
    }

    fn at_most(name: &str, lhs: T, rhs: T) -> Self {
        let holds = lhs <= rhs;
        Self { name: name.into(), lhs, rhs, strict: false, margin: rhs - lhs, holds }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Prediction {
    Global,
    Blowup,
    Inapplicable,
}

/// Whether `f(M, E) < d` also holds with the threshold's uncertainty band removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Certainty {
    Certified,
    Heuristic,
}

/// The threshold a verdict was measured against.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdUsed<T> {
    pub kind: ThresholdKind,
    pub value: T,
    /// Relative band: the spread between candidate families, at least 1e-2.
    pub band: T,
    pub family: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremVerdict<T> {
    pub theorem: Theorem,
    pub hypotheses: Vec<Hypothesis<T>>,
    pub predicted: Prediction,
    pub certainty: Option<Certainty>,
    pub threshold_used: Option<ThresholdUsed<T>>,
    /// Why the theorem does not apply, when it does not.
    pub reason: Option<String>,
}

impl<T: Real> TheoremVerdict<T> {
    fn inapplicable(theorem: Theorem, hypotheses: Vec<Hypothesis<T>>, used: Option<ThresholdUsed<T>>, reason: String) -> Self {
        Self { theorem, hypotheses, predicted: Prediction::Inapplicable, certainty: None, threshold_used: used, reason: Some(reason) }
    }

    pub fn is_certified(&self) -> bool {
        self.certainty == Some(Certainty::Certified)
    }
}

/// Smallest relative band an estimate is credited with.
pub const MIN_BAND: f64 = 1e-2;

/// Tolerance under which `Im int (grad phi . grad rho) conj(phi)` counts as non-positive.
pub const MOMENTUM_TOL: f64 = 1e-12;

fn threshold_used<T: Real>(kind: ThresholdKind, estimates: &[ThresholdEstimate<T>]) -> Result<ThresholdUsed<T>> {
    let matching: Vec<&ThresholdEstimate<T>> = estimates.iter().filter(|e| e.kind == kind).collect();
    let best = matching
        .iter()
        .min_by(|a, b| a.value.partial_cmp(&b.value).unwrap_or(std::cmp::Ordering::Equal))
        .ok_or_else(|| Error::Contract(format!("no {kind:?} estimate supplied")))?;
    let values: Vec<T> = matching.iter().flat_map(|e| e.per_family.iter().map(|(_, v)| *v)).chain([best.value]).collect();
    let hi = values.iter().copied().fold(best.value, T::max);
    let spread = if best.value.abs() > T::zero() { (hi - best.value) / best.value.abs() } else { T::zero() };
    Ok(ThresholdUsed { kind, value: best.value, band: spread.max(T::lit(MIN_BAND)), family: best.family.clone() })
}

/// Evaluates the hypotheses of `theorem` for the initial datum `state0`.
///
/// `estimates` must contain the threshold the theorem uses; the smallest
/// matching value is taken and the verdict is certified only when
/// `f(M, E) < d (1 - band)`.
pub fn classify_initial_data<T: Real>(
    state0: &StateVector<T>,
    params: &SystemParams<T>,
    estimates: &[ThresholdEstimate<T>],
    theorem: Theorem,
) -> Result<TheoremVerdict<T>> {
    let manifold = state0.grid().manifold();
    let kind = theorem.threshold_kind(manifold)?;
    if state0.t() != T::zero() {
        bail!(Contract, "initial data must sit at t = 0, got t = {}", state0.t());
    }
    if state0.n_components() != params.components() {
        bail!(Parameter, "state has {} components, parameters {}", state0.n_components(), params.components());
    }
    let used = threshold_used(kind, estimates)?;
    if let Err(e) = kind.check_range(params) {
        let msg = match e {
            Error::Domain(msg) => msg,
            other => other.to_string(),
        };
        return Ok(TheoremVerdict::inapplicable(theorem, Vec::new(), Some(used), format!("power out of range: {msg}")));
    }
    let norm = estimates.iter().find(|e| e.kind == kind).map_or(MassNorm::Plain, |e| e.mass);
    let report = compute_functionals(state0, params)?;
    let mut hyps = Vec::new();
    if manifold == Manifold::Sphere {
        let defect = sphere_fields(state0)?
            .iter()
            .map(|f| parity_defect(f.lmax(), f.coeffs()))
            .fold(T::zero(), T::max);
        let h = Hypothesis::at_most("antisymmetric about the equator (max even-parity coefficient)", defect, T::lit(1e-12));
        let ok = h.holds;
        hyps.push(h);
        if !ok {
            return Ok(TheoremVerdict::inapplicable(theorem, hyps, Some(used), "initial data is not antisymmetric".into()));
        }
    }

    let d = used.value;
    let (f_name, f) = match theorem {
        Theorem::SmallDataI => ("K + M^alpha", report.kinetic + report.mass_power(params)),
        Theorem::SmallDataII => {
            let m = norm.of(&report);
            ("K + M^gamma", report.kinetic + if m == T::zero() { m } else { m.powf(params.gamma()) })
        }
        Theorem::T1 | Theorem::T4 => ("M^alpha + E", report.mass_power(params) + report.energy),
        _ => ("M^gamma + E", kind.objective_with(&report, params, norm)),
    };
    let below = Hypothesis::less(&format!("{f_name} < {kind:?}"), f, d);
    let certainty = if below.margin > used.band * d.abs() { Certainty::Certified } else { Certainty::Heuristic };
    let below_holds = below.holds;
    hyps.push(below);
    if !below_holds {
        return Ok(TheoremVerdict::inapplicable(theorem, hyps, Some(used), format!("{f_name} is not below the threshold")));
    }
    let Some(sign) = theorem.sign_functional() else {
        return Ok(TheoremVerdict {
            theorem,
            hypotheses: hyps,
            predicted: Prediction::Global,
            certainty: Some(certainty),
            threshold_used: Some(used),
            reason: None,
        });
    };
    let (s, _) = sign.evaluate(&report, params);
    let name = format!("{sign:?}");
    if s > T::zero() {
        hyps.push(Hypothesis::less(&format!("0 < {name}"), T::zero(), s));
        return Ok(TheoremVerdict {
            theorem,
            hypotheses: hyps,
            predicted: Prediction::Global,
            certainty: Some(certainty),
            threshold_used: Some(used),
            reason: None,
        });
    }
    if !(s < T::zero()) {
        hyps.push(Hypothesis::less(&format!("{name} != 0"), T::zero(), s.abs()));
        return Ok(TheoremVerdict::inapplicable(theorem, hyps, Some(used), format!("{name} vanishes")));
    }
    hyps.push(Hypothesis::less(&format!("{name} < 0"), s, T::zero()));

    // Blow-up branch: finite weighted mass, and for the first type above the
    // critical power a non-positive initial radial momentum.
    if manifold != Manifold::Sphere {
        let weight = default_weight(state0.grid())?;
        let v = virial_quantities(state0, &weight, &report, params)?;
        hyps.push(Hypothesis::less("weighted mass int rho |Phi_0|^2 finite", v.j, T::infinity()));
        let first_type = matches!(theorem, Theorem::T1 | Theorem::T4);
        if first_type && params.p() > params.critical_power() {
            // J' = 4 Im int (grad phi . x) conj(phi) on the box, 2 Im int (grad phi . grad rho) conj(phi) on H^n.
            let momentum = match manifold {
                Manifold::EuclideanBox => v.jprime / T::lit(4.0),
                _ => v.jprime / T::lit(2.0),
            };
            hyps.push(Hypothesis::at_most("initial momentum Im int (grad Phi . grad rho) conj(Phi) <= 0", momentum, T::lit(MOMENTUM_TOL)));
        }
        if let Some(h) = hyps.iter().find(|h| !h.holds) {
            let reason = format!("blow-up hypothesis fails: {}", h.name);
            return Ok(TheoremVerdict::inapplicable(theorem, hyps, Some(used), reason));
        }
    }
    Ok(TheoremVerdict {
        theorem,
        hypotheses: hyps,
        predicted: Prediction::Blowup,
        certainty: Some(certainty),
        threshold_used: Some(used),
        reason: None,
    })
}

/// Whether the second relation is an identity or a one-sided bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    Equality,
    UpperBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConsistencyPoint<T> {
    pub t: T,
    /// Finite-difference `dJ/dt` and the sampled `J'`.
    pub dj_dt: T,
    pub jprime: T,
    pub djprime_dt: T,
    /// `16 Q` (or `8/(n-1) Q*`).
    pub jpp: T,
    pub first_error: T,
    /// Relative mismatch (equality) or excess over the bound (upper bound).
    pub second_error: T,
    /// Mismatch against the full four-term expression on radial grids.
    pub exact_error: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VirialConsistencyReport<T> {
    pub relation: Relation,
    pub points: Vec<ConsistencyPoint<T>>,
    pub max_first_error: T,
    pub max_second_error: T,
    pub max_exact_error: Option<T>,
}

impl<T: Real> VirialConsistencyReport<T> {
    pub fn holds(&self, first_tol: T, second_tol: T) -> bool {
        self.max_first_error <= first_tol && self.max_second_error <= second_tol
    }
}

/// Weights of the first derivative at `x0` through the nodes `xs` (Fornberg).
fn derivative_weights<T: Real>(x0: T, xs: &[T]) -> Vec<T> {
    let n = xs.len();
    let mut c = vec![[T::zero(); 2]; n];
    c[0][0] = T::one();
    let mut c1 = T::one();
    let mut c4 = xs[0] - x0;
    for i in 1..n {
        let mn = i.min(1);
        let mut c2 = T::one();
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 = c2 * c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (T::from_usize_lossy(k) * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - T::from_usize_lossy(k) * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|w| w[1]).collect()
}

/// Derivative of the samples `f` at every interior index, five-point where
/// available and three-point next to the ends.
fn interior_derivatives<T: Real>(t: &[T], f: &[T]) -> Vec<(usize, T)> {
    let n = t.len();
    (1..n - 1)
        .map(|i| {
            let (a, b) = if i >= 2 && i + 2 < n { (i - 2, i + 3) } else { (i - 1, i + 2) };
            let w = derivative_weights(t[i], &t[a..b]);
            (i, w.iter().zip(&f[a..b]).map(|(&w, &v)| w * v).sum())
        })
        .collect()
}

/// Differentiates the sampled `J` and `J'` and compares with `J'` and `J''`.
///
/// Errors are relative to the compared value with a floor set by the natural
/// scale of each side (`4 sqrt(2 J K)` for `J'`, the magnitude of the two
/// terms of `Q` for `J''`), so that identically vanishing cases stay finite.
pub fn check_virial_consistency<T: Real>(record: &RunRecord<T>, params: &SystemParams<T>) -> Result<VirialConsistencyReport<T>> {
    let s = &record.samples;
    if s.len() < 5 {
        bail!(Contract, "virial consistency needs at least 5 samples, got {}", s.len());
    }
    let t: Vec<T> = s.iter().map(|x| x.t).collect();
    if t.windows(2).any(|w| !(w[1] > w[0])) {
        bail!(Contract, "sample times must increase strictly");
    }
    let relation = if s[0].virial.jpp_exact.is_some() { Relation::UpperBound } else { Relation::Equality };
    let j: Vec<T> = s.iter().map(|x| x.virial.j).collect();
    let jp: Vec<T> = s.iter().map(|x| x.virial.jprime).collect();
    let dj = interior_derivatives(&t, &j);
    let djp = interior_derivatives(&t, &jp);
    let c = params.virial_coefficient(T::from_usize_lossy(params.n()));
    let floor = T::lit(1e-3);
    let mut points = Vec::with_capacity(dj.len());
    for (&(i, d1), &(_, d2)) in dj.iter().zip(&djp) {
        let x = &s[i];
        let v = &x.virial;
        let k = x.report.kinetic;
        let first_scale = T::lit(4.0) * (T::lit(2.0) * v.j.abs() * k.abs()).sqrt();
        let first_error = (d1 - v.jprime).abs() / (v.jprime.abs() + floor * first_scale);
        let second_scale = T::lit(16.0) * k.abs().max(c * x.report.potential.abs());
        let denom = v.jpp.abs() + floor * second_scale;
        let second_error = match relation {
            Relation::Equality => (d2 - v.jpp).abs() / denom,
            Relation::UpperBound => (d2 - v.jpp).max(T::zero()) / denom,
        };
        let exact_error = v.jpp_exact.map(|e| (d2 - e).abs() / (e.abs() + floor * second_scale));
        points.push(ConsistencyPoint { t: x.t, dj_dt: d1, jprime: v.jprime, djprime_dt: d2, jpp: v.jpp, first_error, second_error, exact_error });
    }
    let max = |f: &dyn Fn(&ConsistencyPoint<T>) -> T| points.iter().map(f).fold(T::zero(), T::max);
    let max_first_error = max(&|p| p.first_error);
    let max_second_error = max(&|p| p.second_error);
    let max_exact_error = (relation == Relation::UpperBound).then(|| max(&|p| p.exact_error.unwrap_or(T::zero())));
    Ok(VirialConsistencyReport { relation, points, max_first_error, max_second_error, max_exact_error })
}

/// Sign history of a functional along a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignPersistence<T> {
    pub functional: Constraint,
    pub initial: T,
    /// Number of samples whose sign differs from the initial one.
    pub violations: usize,
    pub first_violation: Option<T>,
    /// Smallest `|value| / magnitude` seen, a measure of how close the run came to the boundary.
    pub min_relative: T,
}

impl<T> SignPersistence<T> {
    pub fn persists(&self) -> bool {
        self.violations == 0
    }
}

pub fn check_sign_persistence<T: Real>(record: &RunRecord<T>, params: &SystemParams<T>, functional: Constraint) -> Result<SignPersistence<T>> {
    let first = record.samples.first().ok_or_else(|| Error::Contract("record has no samples".into()))?;
    let (initial, _) = functional.evaluate(&first.report, params);
    if initial == T::zero() {
        bail!(Contract, "{functional:?} vanishes initially; no sign to persist");
    }
    let mut violations = 0;
    let mut first_violation = None;
    let mut min_relative = T::infinity();
    for s in &record.samples {
        let (v, mag) = functional.evaluate(&s.report, params);
        if v.signum() != initial.signum() {
            violations += 1;
            first_violation.get_or_insert(s.t);
        }
        if mag > T::zero() {
            min_relative = min_relative.min(v.abs() / mag);
        }
    }
    Ok(SignPersistence { functional, initial, violations, first_violation, min_relative })
}
