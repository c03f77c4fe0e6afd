//! Physical parameters of the coupled system.

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::num::Real;

/// Parameters of the `N`-component system
/// `-i d_t phi_j = Lap phi_j + mu_j |phi_j|^(p-1) phi_j + sum_{i != j} beta_ij |phi_i|^((p+1)/2) |phi_j|^((p-3)/2) phi_j`.
///
/// The constructor enforces the standing assumptions: symmetric coupling with
/// zero diagonal, positive `mu`, `lambda`, `gamma`, and `1 <= p < 1 + 4/(n-2)^+`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams<T> {
    n: usize,
    p: T,
    mu: Vec<T>,
    beta: Vec<Vec<T>>,
    lambda: Vec<T>,
    gamma: T,
}

impl<T: Real> SystemParams<T> {
    pub fn new(n: usize, p: T, mu: Vec<T>, beta: Vec<Vec<T>>, lambda: Vec<T>, gamma: T) -> Result<Self> {
        let comps = mu.len();
        if n == 0 {
            bail!(Parameter, "dimension n must be at least 1");
        }
        if comps == 0 {
            bail!(Parameter, "at least one component is required");
        }
        if beta.len() != comps || beta.iter().any(|row| row.len() != comps) {
            bail!(Parameter, "beta must be a {comps}x{comps} matrix");
        }
        if lambda.len() != comps {
            bail!(Parameter, "lambda has {} entries, expected {comps}", lambda.len());
        }
        if let Some(j) = mu.iter().position(|m| !(*m > T::zero()) || !m.is_finite()) {
            bail!(Parameter, "mu[{j}] = {} must be positive", mu[j]);
        }
        if let Some(j) = lambda.iter().position(|l| !(*l > T::zero()) || !l.is_finite()) {
            bail!(Parameter, "lambda[{j}] = {} must be positive", lambda[j]);
        }
        if !(gamma > T::zero()) || !gamma.is_finite() {
            bail!(Parameter, "gamma = {gamma} must be positive");
        }
        for i in 0..comps {
            if beta[i][i] != T::zero() {
                bail!(Parameter, "beta[{i}][{i}] = {} must be zero", beta[i][i]);
            }
            for j in 0..i {
                if !beta[i][j].is_finite() {
                    bail!(Parameter, "beta[{i}][{j}] is not finite");
                }
                if beta[i][j] != beta[j][i] {
                    bail!(
                        Parameter,
                        "beta must be symmetric: beta[{i}][{j}] = {} but beta[{j}][{i}] = {}",
                        beta[i][j],
                        beta[j][i]
                    );
                }
            }
        }
        if !(p >= T::one()) || !p.is_finite() {
            bail!(Parameter, "p = {p} must satisfy p >= 1");
        }
        if let Some(upper) = energy_critical_power::<T>(n) {
            if !(p < upper) {
                bail!(Parameter, "p = {p} must satisfy p < 1 + 4/(n-2) = {upper} for n = {n}");
            }
        }
        Ok(Self { n, p, mu, beta, lambda, gamma })
    }

    /// Single component with `mu = lambda = 1`, `gamma = 2`.
    pub fn scalar(n: usize, p: T) -> Result<Self> {
        Self::new(n, p, vec![T::one()], vec![vec![T::zero()]], vec![T::one()], T::lit(2.0))
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn p(&self) -> T {
        self.p
    }
    pub fn mu(&self) -> &[T] {
        &self.mu
    }
    pub fn beta(&self) -> &[Vec<T>] {
        &self.beta
    }
    pub fn lambda(&self) -> &[T] {
        &self.lambda
    }
    pub fn gamma(&self) -> T {
        self.gamma
    }
    pub fn components(&self) -> usize {
        self.mu.len()
    }

    pub fn with_gamma(mut self, gamma: T) -> Result<Self> {
        if !(gamma > T::zero()) {
            bail!(Parameter, "gamma = {gamma} must be positive");
        }
        self.gamma = gamma;
        Ok(self)
    }

    pub fn with_lambda(self, lambda: Vec<T>) -> Result<Self> {
        Self::new(self.n, self.p, self.mu, self.beta, lambda, self.gamma)
    }

    pub fn with_p(self, p: T) -> Result<Self> {
        Self::new(self.n, p, self.mu, self.beta, self.lambda, self.gamma)
    }

    /// Same system posed in another dimension (re-validates the power range).
    pub fn with_dimension(self, n: usize) -> Result<Self> {
        Self::new(n, self.p, self.mu, self.beta, self.lambda, self.gamma)
    }

    /// Mass-critical power `1 + 4/n`.
    pub fn critical_power(&self) -> T {
        T::one() + T::lit(4.0) / T::from_usize_lossy(self.n)
    }

    /// Exponent `p + 1 - n(p-1)/2` of the mass in `G` and in the first threshold.
    pub fn mass_exponent(&self) -> T {
        mass_exponent(self.n, self.p)
    }

    /// Coefficient `d(p-1)/(4(p+1))` in front of the potential in `Q`-type functionals,
    /// for effective dimension `d`.
    pub fn virial_coefficient(&self, d: T) -> T {
        d * (self.p - T::one()) / (T::lit(4.0) * (self.p + T::one()))
    }

    /// Drops every component but the first.
    pub fn reduce_to_scalar(&self) -> Self {
        Self {
            n: self.n,
            p: self.p,
            mu: vec![self.mu[0]],
            beta: vec![vec![T::zero()]],
            lambda: vec![self.lambda[0]],
            gamma: self.gamma,
        }
    }

    /// Relabels components: new component `k` is old component `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let comps = self.components();
        let mut seen = vec![false; comps];
        if perm.len() != comps || perm.iter().any(|&k| k >= comps || std::mem::replace(&mut seen[k], true)) {
            bail!(Parameter, "{perm:?} is not a permutation of 0..{comps}");
        }
        let mu = perm.iter().map(|&k| self.mu[k]).collect();
        let lambda = perm.iter().map(|&k| self.lambda[k]).collect();
        let beta = perm
            .iter()
            .map(|&a| perm.iter().map(|&b| self.beta[a][b]).collect())
            .collect();
        Ok(Self { mu, lambda, beta, ..self.clone() })
    }

    pub fn cast<U: Real>(&self) -> SystemParams<U> {
        let c = |x: T| U::lit(x.as_f64());
        SystemParams {
            n: self.n,
            p: c(self.p),
            mu: self.mu.iter().map(|&x| c(x)).collect(),
            beta: self.beta.iter().map(|r| r.iter().map(|&x| c(x)).collect()).collect(),
            lambda: self.lambda.iter().map(|&x| c(x)).collect(),
            gamma: c(self.gamma),
        }
    }
}

/// `1 + 4/(n-2)` for `n >= 3`, `None` (no upper bound) for `n <= 2`.
pub fn energy_critical_power<T: Real>(n: usize) -> Option<T> {
    (n >= 3).then(|| T::one() + T::lit(4.0) / T::from_usize_lossy(n - 2))
}

pub fn mass_exponent<T: Real>(n: usize, p: T) -> T {
    p + T::one() - T::from_usize_lossy(n) * (p - T::one()) * T::lit(0.5)
}
