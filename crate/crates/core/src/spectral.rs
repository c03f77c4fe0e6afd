//! Split-step Fourier integration on the periodic box.

use crate::error::{bail, Result};
use crate::grid::{EuclideanGrid, Grid};
use crate::hyperbolic::{CrankNicolson, WeightSpec};
use crate::nonlinear::Nonlinearity;
use crate::num::{is_finite_c, Real, C};
use crate::params::SystemParams;
use crate::solver::{run, strang, Propagator, RunRecord, SolverConfig, StepError};
use crate::state::StateVector;

pub(crate) struct FourierPropagator<'a, T: Real> {
    grid: &'a EuclideanGrid<T>,
    dealias: bool,
    tau: T,
    phase: Vec<C<T>>,
    masked: Vec<C<T>>,
}

impl<'a, T: Real> FourierPropagator<'a, T> {
    pub(crate) fn new(grid: &'a EuclideanGrid<T>, dealias: bool) -> Self {
        Self { grid, dealias, tau: T::nan(), phase: Vec::new(), masked: Vec::new() }
    }

    fn prepare(&mut self, tau: T) {
        if tau == self.tau {
            return;
        }
        self.phase = self.grid.k_squared().iter().map(|&k2| C::from_polar(T::one(), -k2 * tau)).collect();
        self.masked = self
            .phase
            .iter()
            .zip(self.grid.dealias_mask())
            .map(|(&z, &keep)| if keep { z } else { C::new(T::zero(), T::zero()) })
            .collect();
        self.tau = tau;
    }
}

impl<T: Real> Propagator<T> for FourierPropagator<'_, T> {
    fn linear(&mut self, fields: &mut [Vec<C<T>>], tau: T, last: bool) {
        self.prepare(tau);
        let factors = if last && self.dealias { &self.masked } else { &self.phase };
        for c in fields.iter_mut() {
            self.grid.forward(c);
            for (z, &f) in c.iter_mut().zip(factors) {
                *z = *z * f;
            }
            self.grid.inverse(c);
        }
    }
}

pub(crate) struct RadialPropagator<T: Real> {
    cn: CrankNicolson<T>,
}

impl<T: Real> Propagator<T> for RadialPropagator<T> {
    fn linear(&mut self, fields: &mut [Vec<C<T>>], tau: T, _last: bool) {
        for c in fields.iter_mut() {
            self.cn.apply(c, tau);
        }
    }
}

/// One Strang step `e^{i dt/2 Lap} e^{i dt N} e^{i dt/2 Lap}` (2/3-rule mask
/// applied after the nonlinear substep when `dealias` is set).
pub fn step<T: Real>(
    state: &StateVector<T>,
    params: &SystemParams<T>,
    dt: T,
    dealias: bool,
) -> Result<StateVector<T>, StepError<T>> {
    if !(dt > T::zero()) {
        return Err(crate::error::Error::Parameter(format!("dt = {dt} must be positive")).into());
    }
    if state.n_components() != params.components() {
        return Err(crate::error::Error::Parameter(format!(
            "state has {} components, parameters {}",
            state.n_components(),
            params.components()
        ))
        .into());
    }
    let nl = Nonlinearity::new(params);
    let mut fields = state.components().to_vec();
    match state.grid().as_ref() {
        Grid::Euclidean(g) => {
            strang(&mut FourierPropagator::new(g, dealias), &nl, &mut fields, dt);
        }
        Grid::Radial(g) => {
            strang(&mut RadialPropagator { cn: CrankNicolson::new(g) }, &nl, &mut fields, dt);
        }
        Grid::Sphere(_) => {
            return Err(crate::error::Error::Contract("no time evolution on the sphere".into()).into())
        }
    }
    if !fields.iter().flatten().all(|z| is_finite_c(*z)) {
        return Err(StepError::Overflow { last_valid: Box::new(state.clone()) });
    }
    Ok(StateVector::from_parts(state.grid().clone(), state.t() + dt, fields))
}

/// Integrates to `t_max` or until the blow-up predicate fires.
pub fn evolve<T: Real>(
    state0: &StateVector<T>,
    params: &SystemParams<T>,
    config: &SolverConfig,
    weight: &WeightSpec<T>,
) -> Result<RunRecord<T>> {
    match state0.grid().as_ref() {
        Grid::Euclidean(g) => run(&mut FourierPropagator::new(g, config.dealias), state0, params, config, weight),
        Grid::Radial(g) => run(&mut RadialPropagator { cn: CrankNicolson::new(g) }, state0, params, config, weight),
        Grid::Sphere(_) => bail!(Contract, "time evolution on the sphere is not supported"),
    }
}
