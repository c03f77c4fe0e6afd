//! Time integration shared by the box and radial solvers: configuration, the
//! adaptive Strang loop, sampling, and blow-up classification.

use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};
use crate::functionals::{compute_functionals, FunctionalReport};
use crate::grid::Grid;
use crate::hyperbolic::WeightSpec;
use crate::nonlinear::Nonlinearity;
use crate::num::{is_finite_c, Real, C};
use crate::params::SystemParams;
use crate::state::StateVector;
use crate::virial::{virial_quantities, VirialSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub dt0: f64,
    pub t_max: f64,
    pub dealias: bool,
    pub cfl_safety: f64,
    pub blowup_gradnorm_factor: f64,
    pub blowup_tail_fraction: f64,
    pub dt_min: f64,
    /// Steps between mass checks (drift maxima between samples).
    pub conservation_check_interval: usize,
    /// Time between recorded samples.
    pub sample_interval: f64,
    pub adaptive: bool,
    /// Cap for step growth; `None` caps at `dt0`.
    pub dt_max: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt0: 1e-3,
            t_max: 10.0,
            dealias: true,
            cfl_safety: 0.5,
            blowup_gradnorm_factor: 1e6,
            blowup_tail_fraction: 0.1,
            dt_min: 1e-9,
            conservation_check_interval: 100,
            sample_interval: 0.1,
            adaptive: true,
            dt_max: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_min > 0.0) || !(self.dt0 > self.dt_min) {
            bail!(Parameter, "need dt0 > dt_min > 0 (dt0 = {}, dt_min = {})", self.dt0, self.dt_min);
        }
        if !(self.t_max > 0.0) || !self.t_max.is_finite() {
            bail!(Parameter, "t_max = {} must be positive", self.t_max);
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            bail!(Parameter, "cfl_safety = {} must lie in (0, 1]", self.cfl_safety);
        }
        if !(self.sample_interval > 0.0) {
            bail!(Parameter, "sample_interval = {} must be positive", self.sample_interval);
        }
        if !(self.blowup_gradnorm_factor > 1.0) || !(self.blowup_tail_fraction > 0.0 && self.blowup_tail_fraction < 1.0) {
            bail!(Parameter, "blow-up factor must exceed 1 and tail fraction lie in (0, 1)");
        }
        if let Some(m) = self.dt_max {
            if !(m >= self.dt0) {
                bail!(Parameter, "dt_max = {m} must be at least dt0 = {}", self.dt0);
            }
        }
        if self.conservation_check_interval == 0 {
            bail!(Parameter, "conservation_check_interval must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Classification<T> {
    GlobalToHorizon,
    Blowup { t_star: T },
    Inconclusive { t: T, reason: InconclusiveReason },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InconclusiveReason {
    /// The step fell below `dt_min` without the blow-up predicate firing.
    StepUnderflow,
    /// Non-finite values appeared without the predicate firing.
    Overflow,
    /// The horizon was reached but `K` grew past the blow-up factor on the way
    /// (grid-saturated collapse).
    UnresolvedGrowth,
}

impl<T> Classification<T> {
    pub fn is_global(&self) -> bool {
        matches!(self, Classification::GlobalToHorizon)
    }
    pub fn is_blowup(&self) -> bool {
        matches!(self, Classification::Blowup { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample<T> {
    pub t: T,
    pub dt: T,
    pub report: FunctionalReport<T>,
    pub virial: VirialSample<T>,
}

#[derive(Debug, Clone)]
pub struct RunRecord<T: Real> {
    pub samples: Vec<Sample<T>>,
    pub classification: Classification<T>,
    /// `max |M(t) - M(0)| / M(0)` over checks.
    pub mass_drift: T,
    /// `max |E(t) - E(0)| / |E(0)|` over samples (absolute when `E(0) = 0`).
    pub energy_drift: T,
    pub max_kinetic: T,
    pub steps: usize,
    pub rejected_steps: usize,
    pub min_dt: T,
    pub warnings: Vec<String>,
    pub final_state: StateVector<T>,
}

impl<T: Real> RunRecord<T> {
    pub fn times(&self) -> Vec<T> {
        self.samples.iter().map(|s| s.t).collect()
    }
}

/// Error of a single step: bad input, or non-finite output with the last valid state.
#[derive(Debug)]
pub enum StepError<T: Real> {
    Setup(Error),
    Overflow { last_valid: Box<StateVector<T>> },
}

impl<T: Real> std::fmt::Display for StepError<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StepError::Setup(e) => write!(f, "{e}"),
            StepError::Overflow { last_valid } => {
                write!(f, "overflow: non-finite values after the step from t = {}", last_valid.t())
            }
        }
    }
}

impl<T: Real> std::error::Error for StepError<T> {}

impl<T: Real> From<Error> for StepError<T> {
    fn from(e: Error) -> Self {
        StepError::Setup(e)
    }
}

/// Linear part of a Strang step on one kind of grid.
pub(crate) trait Propagator<T: Real> {
    /// `e^{i tau Lap}` on every component; `last` marks the closing half step.
    fn linear(&mut self, fields: &mut [Vec<C<T>>], tau: T, last: bool);
}

/// `phi_j <- phi_j e^{i dt N_j}`; returns the largest `N_j` over points that
/// carry a non-negligible share of their component.
pub(crate) fn rotate<T: Real>(nl: &Nonlinearity<T>, fields: &mut [Vec<C<T>>], dt: T) -> T {
    let comps = fields.len();
    let len = fields[0].len();
    let floor: Vec<T> = fields
        .iter()
        .map(|c| c.iter().map(|z| z.norm_sqr()).fold(T::zero(), T::max) * T::lit(1e-12))
        .collect();
    let mut abs2 = vec![T::zero(); comps];
    let mut mult = vec![T::zero(); comps];
    let mut max_n = T::zero();
    for i in 0..len {
        for j in 0..comps {
            abs2[j] = fields[j][i].norm_sqr();
        }
        nl.multipliers(&abs2, &mut mult);
        for j in 0..comps {
            if abs2[j] > floor[j] {
                max_n = max_n.max(mult[j].abs());
            }
            let (s, c) = (dt * mult[j]).sin_cos();
            fields[j][i] = fields[j][i] * C::new(c, s);
        }
    }
    max_n
}

pub(crate) fn strang<T: Real, P: Propagator<T>>(prop: &mut P, nl: &Nonlinearity<T>, fields: &mut [Vec<C<T>>], dt: T) -> T {
    let half = dt * T::lit(0.5);
    prop.linear(fields, half, false);
    let max_n = rotate(nl, fields, dt);
    prop.linear(fields, half, true);
    max_n
}

/// `K = 1/2 ||grad Phi||^2` from the grid alone.
pub fn kinetic<T: Real>(state: &StateVector<T>) -> T {
    let g = state.grid();
    let s: T = state
        .components()
        .iter()
        .map(|c| match g.as_ref() {
            Grid::Euclidean(e) => e.gradient_norm_squared(c),
            Grid::Radial(r) => r.gradient_norm_squared(c),
            Grid::Sphere(s) => {
                let mut acc = T::zero();
                for l in 0..=s.lmax() {
                    for m in -(l as i64)..=(l as i64) {
                        acc = acc + T::from_usize_lossy(l * (l + 1)) * c[crate::grid::sh_index(l, m)].norm_sqr();
                    }
                }
                acc
            }
        })
        .sum();
    s * T::lit(0.5)
}

/// Share of the kinetic energy at the resolution limit: the outer third of
/// the active (dealiased) band on the box, the innermost 8 cells on `H^n`.
pub fn tail_fraction<T: Real>(state: &StateVector<T>, dealias: bool) -> T {
    let (mut tail, mut total) = (T::zero(), T::zero());
    match state.grid().as_ref() {
        Grid::Euclidean(g) => {
            let active = if dealias { g.points() / 3 } else { g.points() / 2 };
            let cut = (2 * active).div_ceil(3);
            for c in state.components() {
                let spec = g.fft(c);
                for ((z, &k2), &b) in spec.iter().zip(g.k_squared()).zip(g.band()) {
                    let e = z.norm_sqr() * k2;
                    total = total + e;
                    if b >= cut {
                        tail = tail + e;
                    }
                }
            }
        }
        Grid::Radial(g) => {
            let s = g.face_areas();
            for c in state.components() {
                for f in 1..c.len() {
                    let e = s[f] * (c[f] - c[f - 1]).norm_sqr();
                    total = total + e;
                    if f <= 8 {
                        tail = tail + e;
                    }
                }
            }
        }
        Grid::Sphere(_) => return T::zero(),
    }
    if total > T::zero() {
        tail / total
    } else {
        T::zero()
    }
}

/// Fraction of the mass in the outer tenth of the domain.
pub fn boundary_fraction<T: Real>(state: &StateVector<T>) -> T {
    let (mut edge, mut total) = (T::zero(), T::zero());
    match state.grid().as_ref() {
        Grid::Euclidean(g) => {
            let lim = g.half_length() * T::lit(0.9);
            for c in state.components() {
                for (f, z) in c.iter().enumerate() {
                    let x = g.position(f);
                    let m = z.norm_sqr();
                    total = total + m;
                    if x[..g.dimension()].iter().any(|v| v.abs() > lim) {
                        edge = edge + m;
                    }
                }
            }
        }
        Grid::Radial(g) => {
            let start = g.len() - g.len() / 10;
            for c in state.components() {
                for (k, z) in c.iter().enumerate() {
                    let m = z.norm_sqr() * g.weight(k);
                    total = total + m;
                    if k >= start {
                        edge = edge + m;
                    }
                }
            }
        }
        Grid::Sphere(_) => return T::zero(),
    }
    if total > T::zero() {
        edge / total
    } else {
        T::zero()
    }
}

/// All three together: `K > factor K(0)`, kinetic tail share above the
/// threshold, and the step driven below `10 dt_min`.
pub fn detect_blowup<T: Real>(history: &RunRecord<T>, state: &StateVector<T>, config: &SolverConfig, dt: T) -> bool {
    let Some(first) = history.samples.first() else {
        return false;
    };
    blowup_predicate(first.report.kinetic, state, config, dt)
}

fn blowup_predicate<T: Real>(k_ref: T, state: &StateVector<T>, config: &SolverConfig, dt: T) -> bool {
    if !(dt < T::lit(10.0 * config.dt_min)) {
        return false;
    }
    let k = kinetic(state);
    k > T::lit(config.blowup_gradnorm_factor) * k_ref && tail_fraction(state, config.dealias) > T::lit(config.blowup_tail_fraction)
}

fn mass2<T: Real>(state: &StateVector<T>) -> T {
    match state.grid().as_ref() {
        Grid::Euclidean(g) => {
            state.components().iter().flatten().map(|z| z.norm_sqr()).sum::<T>() * g.cell_volume()
        }
        Grid::Radial(g) => state
            .components()
            .iter()
            .map(|c| c.iter().enumerate().map(|(k, z)| z.norm_sqr() * g.weight(k)).sum::<T>())
            .sum(),
        Grid::Sphere(_) => state.components().iter().flatten().map(|z| z.norm_sqr()).sum(),
    }
}

fn sample<T: Real>(state: &StateVector<T>, dt: T, params: &SystemParams<T>, weight: &WeightSpec<T>) -> Result<Sample<T>> {
    let report = compute_functionals(state, params)?;
    let virial = virial_quantities(state, weight, &report, params)?;
    Ok(Sample { t: state.t(), dt, report, virial })
}

/// The adaptive Strang loop.
pub(crate) fn run<T: Real, P: Propagator<T>>(
    prop: &mut P,
    state0: &StateVector<T>,
    params: &SystemParams<T>,
    config: &SolverConfig,
    weight: &WeightSpec<T>,
) -> Result<RunRecord<T>> {
    config.validate()?;
    if state0.n_components() != params.components() {
        bail!(Parameter, "state has {} components, parameters {}", state0.n_components(), params.components());
    }
    let grid = state0.grid().clone();
    let nl = Nonlinearity::new(params);
    let t_max = T::lit(config.t_max);
    let interval = T::lit(config.sample_interval);
    let cfl = T::lit(config.cfl_safety) * T::PI();
    let dt_min = T::lit(config.dt_min);
    let dt_max = T::lit(config.dt_max.unwrap_or(config.dt0));
    let mut dt = T::lit(config.dt0);

    let state = state0.clone().with_time(T::zero());
    let first = sample(&state, dt, params, weight)?;
    let k_ref = first.report.kinetic;
    let m0 = mass2(&state);
    let e0 = first.report.energy;
    let mut rec = RunRecord {
        samples: vec![first],
        classification: Classification::GlobalToHorizon,
        mass_drift: T::zero(),
        energy_drift: T::zero(),
        max_kinetic: k_ref,
        steps: 0,
        rejected_steps: 0,
        min_dt: dt,
        warnings: Vec::new(),
        final_state: state.clone(),
    };
    let mut fields = state.into_components();
    let mut backup = fields.clone();
    let mut t = T::zero();
    let mut next = interval.min(t_max);
    let mut since_check = 0usize;
    let mut boundary_warned = false;
    let snapshot = |fields: &[Vec<C<T>>], t: T| StateVector::from_parts(grid.clone(), t, fields.to_vec());

    let outcome = loop {
        if t >= t_max {
            break Classification::GlobalToHorizon;
        }
        let remaining = next - t;
        let nsteps = ((remaining / dt) - T::lit(1e-9)).ceil().max(T::one());
        let h = remaining / nsteps;
        backup.clone_from(&fields);
        let max_n = strang(prop, &nl, &mut fields, h);
        if !fields.iter().flatten().all(|z| is_finite_c(*z)) {
            fields.clone_from(&backup);
            let last = snapshot(&fields, t);
            break if blowup_predicate(k_ref, &last, config, h) {
                Classification::Blowup { t_star: t }
            } else {
                Classification::Inconclusive { t, reason: InconclusiveReason::Overflow }
            };
        }
        if config.adaptive && h * max_n > cfl {
            fields.clone_from(&backup);
            rec.rejected_steps += 1;
            dt = h * T::lit(0.5);
            rec.min_dt = rec.min_dt.min(dt);
            if dt < dt_min {
                let last = snapshot(&fields, t);
                break if blowup_predicate(k_ref, &last, config, dt) {
                    Classification::Blowup { t_star: t }
                } else {
                    Classification::Inconclusive { t, reason: InconclusiveReason::StepUnderflow }
                };
            }
            continue;
        }
        t = if nsteps == T::one() { next } else { t + h };
        rec.steps += 1;
        rec.min_dt = rec.min_dt.min(h);
        if config.adaptive && h * max_n < T::lit(0.1) * cfl {
            dt = (dt * T::lit(1.2)).min(dt_max);
        }
        since_check += 1;
        if since_check >= config.conservation_check_interval {
            since_check = 0;
            let m = mass2(&snapshot(&fields, t));
            if m0 > T::zero() {
                rec.mass_drift = rec.mass_drift.max(((m.sqrt() - m0.sqrt()) / m0.sqrt()).abs());
            }
        }
        if dt < T::lit(10.0) * dt_min {
            let now = snapshot(&fields, t);
            if blowup_predicate(k_ref, &now, config, dt) {
                if t > rec.samples.last().map(|s| s.t).unwrap_or(T::zero()) {
                    let s = sample(&now, h, params, weight)?;
                    rec.max_kinetic = rec.max_kinetic.max(s.report.kinetic);
                    rec.samples.push(s);
                }
                break Classification::Blowup { t_star: t };
            }
        }
        if t == next {
            let now = snapshot(&fields, t);
            let s = sample(&now, h, params, weight)?;
            rec.max_kinetic = rec.max_kinetic.max(s.report.kinetic);
            let de = (s.report.energy - e0).abs();
            rec.energy_drift = rec.energy_drift.max(if e0 != T::zero() { de / e0.abs() } else { de });
            if m0 > T::zero() {
                let m = s.report.mass;
                rec.mass_drift = rec.mass_drift.max(((m - m0.sqrt()) / m0.sqrt()).abs());
            }
            if !boundary_warned && boundary_fraction(&now) > T::lit(1e-8) {
                boundary_warned = true;
                rec.warnings.push(format!("boundary mass fraction exceeds 1e-8 at t = {t}"));
            }
            rec.samples.push(s);
            next = (next + interval).min(t_max);
            if t_max - next < interval * T::lit(1e-9) {
                next = t_max;
            }
        }
    };
    rec.classification = match outcome {
        Classification::GlobalToHorizon if rec.max_kinetic > T::lit(config.blowup_gradnorm_factor) * k_ref => {
            Classification::Inconclusive { t, reason: InconclusiveReason::UnresolvedGrowth }
        }
        other => other,
    };
    rec.final_state = snapshot(&fields, t);
    Ok(rec)
}
