//! Multi-component complex fields on a shared grid.

use std::sync::Arc;

use crate::error::{bail, Result};
use crate::grid::Grid;
use crate::num::{is_finite_c, Real, C};

/// Analytic or sampled initial profile of one component.
///
/// Analytic profiles are functions of the distance to `center` on the box, of
/// the geodesic radius on `H^n`, and of the colatitude on `S^2`.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile<T> {
    /// `A exp(-|x - c|^2 / (2 sigma^2))`.
    Gaussian { amplitude: T, width: T, center: Vec<T> },
    /// `A sech(|x| / width)^power`.
    Sech { amplitude: T, width: T, power: T },
    /// Node values, or harmonic coefficients on the sphere.
    Sampled(Vec<C<T>>),
}

impl<T: Real> Profile<T> {
    pub fn gaussian(amplitude: T, width: T) -> Self {
        Profile::Gaussian { amplitude, width, center: Vec::new() }
    }

    pub fn sech(amplitude: T, width: T) -> Self {
        Profile::Sech { amplitude, width, power: T::one() }
    }

    pub fn sech_power(amplitude: T, width: T, power: T) -> Self {
        Profile::Sech { amplitude, width, power }
    }

    fn eval(&self, dist2: T) -> T {
        match self {
            Profile::Gaussian { amplitude, width, .. } => {
                *amplitude * (-dist2 / (T::lit(2.0) * *width * *width)).exp()
            }
            Profile::Sech { amplitude, width, power } => {
                let z = dist2.sqrt() / *width;
                // sech z = 2 e^{-z} / (1 + e^{-2z})
                let e = (-z).exp();
                *amplitude * (T::lit(2.0) * e / (T::one() + e * e)).powf(*power)
            }
            Profile::Sampled(_) => unreachable!(),
        }
    }
}

/// `N` complex fields sampled on one grid at time `t`.
#[derive(Debug, Clone)]
pub struct StateVector<T: Real> {
    grid: Arc<Grid<T>>,
    t: T,
    components: Vec<Vec<C<T>>>,
}

impl<T: Real> StateVector<T> {
    pub fn new(grid: Arc<Grid<T>>, t: T, components: Vec<Vec<C<T>>>) -> Result<Self> {
        if components.is_empty() {
            bail!(Parameter, "a state needs at least one component");
        }
        for (j, c) in components.iter().enumerate() {
            if c.len() != grid.len() {
                bail!(Construction, "component {j} has {} samples, grid has {}", c.len(), grid.len());
            }
            if let Some(i) = c.iter().position(|z| !is_finite_c(*z)) {
                bail!(Construction, "component {j} is not finite at sample {i}");
            }
        }
        Ok(Self { grid, t, components })
    }

    /// Skips validation; used by solvers on values they produced themselves.
    pub(crate) fn from_parts(grid: Arc<Grid<T>>, t: T, components: Vec<Vec<C<T>>>) -> Self {
        Self { grid, t, components }
    }

    pub fn zeros(grid: Arc<Grid<T>>, n_components: usize) -> Self {
        let len = grid.len();
        Self { grid, t: T::zero(), components: vec![vec![C::new(T::zero(), T::zero()); len]; n_components] }
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }
    pub fn t(&self) -> T {
        self.t
    }
    pub fn components(&self) -> &[Vec<C<T>>] {
        &self.components
    }
    pub fn component(&self, j: usize) -> &[C<T>] {
        &self.components[j]
    }
    pub fn n_components(&self) -> usize {
        self.components.len()
    }
    pub fn into_components(self) -> Vec<Vec<C<T>>> {
        self.components
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(|c| c.iter().all(|z| is_finite_c(*z)))
    }

    pub fn with_time(mut self, t: T) -> Self {
        self.t = t;
        self
    }

    /// `k * Phi`.
    pub fn scaled(&self, k: T) -> Self {
        self.map(|_, z| z * k)
    }

    /// Applies `f(component, value)` to every sample.
    pub fn map(&self, f: impl Fn(usize, C<T>) -> C<T>) -> Self {
        let components = self
            .components
            .iter()
            .enumerate()
            .map(|(j, c)| c.iter().map(|&z| f(j, z)).collect())
            .collect();
        Self { grid: self.grid.clone(), t: self.t, components }
    }

    /// Multiplies component `j` by `e^{i theta_j}`.
    pub fn with_phases(&self, theta: &[T]) -> Self {
        self.map(|j, z| z * C::from_polar(T::one(), theta[j]))
    }

    /// Reorders components: new `k` is old `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let components = perm.iter().map(|&k| self.components[k].clone()).collect();
        Self { grid: self.grid.clone(), t: self.t, components }
    }

    /// Largest modulus over all components.
    pub fn max_abs(&self) -> T {
        self.components.iter().flatten().map(|z| z.norm()).fold(T::zero(), T::max)
    }
}

/// Builds a state at `t = 0` with `phi_j = e^{i theta_j} profile_j`.
pub fn build_state<T: Real>(grid: &Arc<Grid<T>>, specs: &[Profile<T>], phases: &[T]) -> Result<StateVector<T>> {
    if specs.is_empty() {
        bail!(Parameter, "at least one component profile is required");
    }
    if phases.len() != specs.len() {
        bail!(Parameter, "{} profiles but {} phases", specs.len(), phases.len());
    }
    let mut components = Vec::with_capacity(specs.len());
    for (j, (spec, &theta)) in specs.iter().zip(phases).enumerate() {
        let rot = C::from_polar(T::one(), theta);
        let values = match spec {
            Profile::Sampled(v) => {
                if v.len() != grid.len() {
                    bail!(Parameter, "sampled component {j} has {} values, grid needs {}", v.len(), grid.len());
                }
                v.clone()
            }
            analytic => sample_analytic(grid, analytic, j)?,
        };
        if let Some(i) = values.iter().position(|z| !is_finite_c(*z)) {
            bail!(Construction, "profile of component {j} is undefined at node {i}");
        }
        components.push(values.into_iter().map(|z| z * rot).collect());
    }
    Ok(StateVector { grid: grid.clone(), t: T::zero(), components })
}

fn sample_analytic<T: Real>(grid: &Grid<T>, spec: &Profile<T>, j: usize) -> Result<Vec<C<T>>> {
    let real = |v: T| C::new(v, T::zero());
    if let Profile::Gaussian { width, .. } | Profile::Sech { width, .. } = spec {
        if !(*width > T::zero()) {
            bail!(Construction, "profile of component {j} has non-positive width {width}");
        }
    }
    Ok(match grid {
        Grid::Euclidean(g) => {
            let center: Vec<T> = match spec {
                Profile::Gaussian { center, .. } if !center.is_empty() => {
                    if center.len() != g.dimension() {
                        bail!(Parameter, "center of component {j} has {} coordinates, n = {}", center.len(), g.dimension());
                    }
                    center.clone()
                }
                _ => vec![T::zero(); g.dimension()],
            };
            (0..g.len())
                .map(|f| {
                    let x = g.position(f);
                    let d2 = (0..g.dimension()).map(|a| (x[a] - center[a]) * (x[a] - center[a])).sum();
                    real(spec.eval(d2))
                })
                .collect()
        }
        Grid::Radial(g) => g.nodes().iter().map(|&r| real(spec.eval(r * r))).collect(),
        Grid::Sphere(g) => {
            let nodes: Vec<C<T>> = g
                .cos_theta()
                .iter()
                .flat_map(|&x| {
                    let th = x.acos();
                    std::iter::repeat_n(real(spec.eval(th * th)), g.n_lon())
                })
                .collect();
            g.analyze(&nodes)
        }
    })
}
