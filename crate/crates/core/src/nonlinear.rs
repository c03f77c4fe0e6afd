//! Pointwise evaluation of the coupled power nonlinearity.

use crate::num::{pow_abs, Real, C};
use crate::params::SystemParams;

/// Precomputed exponents and couplings of
/// `N_j = mu_j |phi_j|^(p-1) + sum_{i != j} beta_ij |phi_i|^((p+1)/2) |phi_j|^((p-3)/2)`.
#[derive(Debug, Clone)]
pub struct Nonlinearity<T> {
    p: T,
    mu: Vec<T>,
    beta: Vec<Vec<T>>,
    coupled: bool,
    floor2: T,
}

impl<T: Real> Nonlinearity<T> {
    pub fn new(params: &SystemParams<T>) -> Self {
        let coupled = params.beta().iter().flatten().any(|&b| b != T::zero());
        // |phi_j| is clamped below at 1e-300 inside the singular factor (p < 3).
        let floor = T::lit(1e-300).max(T::min_positive_value().sqrt());
        Self { p: params.p(), mu: params.mu().to_vec(), beta: params.beta().to_vec(), coupled, floor2: floor * floor }
    }

    pub fn components(&self) -> usize {
        self.mu.len()
    }

    /// Integrand of the potential at one node, from `|phi_j|^2`.
    pub fn density(&self, abs2: &[T]) -> T {
        let e = (self.p + T::one()) * T::lit(0.5);
        if !self.coupled {
            return abs2.iter().zip(&self.mu).map(|(&a, &m)| m * pow_abs(a, self.p + T::one())).sum();
        }
        let s: Vec<T> = abs2.iter().map(|&a| pow_abs(a, e)).collect();
        let mut d = T::zero();
        for j in 0..s.len() {
            d = d + self.mu[j] * s[j] * s[j];
            for i in 0..s.len() {
                if i != j {
                    d = d + self.beta[i][j] * s[i] * s[j];
                }
            }
        }
        d
    }

    /// Density of `sum_j mu_j |phi_j|^(p+1)` only (the self-interaction part).
    pub fn self_density(&self, abs2: &[T]) -> T {
        abs2.iter().zip(&self.mu).map(|(&a, &m)| m * pow_abs(a, self.p + T::one())).sum()
    }

    /// Real multipliers `N_j` at one node.
    pub fn multipliers(&self, abs2: &[T], out: &mut [T]) {
        let pm1 = self.p - T::one();
        for j in 0..abs2.len() {
            out[j] = self.mu[j] * pow_abs(abs2[j], pm1);
        }
        if !self.coupled {
            return;
        }
        let e = (self.p + T::one()) * T::lit(0.5);
        let f = (self.p - T::lit(3.0)) * T::lit(0.5);
        for j in 0..abs2.len() {
            let mut cross = T::zero();
            for i in 0..abs2.len() {
                if i != j && self.beta[i][j] != T::zero() {
                    cross = cross + self.beta[i][j] * pow_abs(abs2[i], e);
                }
            }
            if cross != T::zero() {
                out[j] = out[j] + cross * pow_abs(abs2[j].max(self.floor2), f);
            }
        }
    }

    /// `N_j phi_j` at one node, written in the form that is continuous at `phi_j = 0`.
    pub fn apply(&self, values: &[C<T>], out: &mut [C<T>]) {
        let abs2: Vec<T> = values.iter().map(|z| z.norm_sqr()).collect();
        let pm1 = self.p - T::one();
        let e = (self.p + T::one()) * T::lit(0.5);
        let half = pm1 * T::lit(0.5);
        for j in 0..values.len() {
            let mut acc = values[j] * (self.mu[j] * pow_abs(abs2[j], pm1));
            if self.coupled && abs2[j] > T::zero() {
                let mut cross = T::zero();
                for i in 0..values.len() {
                    if i != j {
                        cross = cross + self.beta[i][j] * pow_abs(abs2[i], e);
                    }
                }
                // |phi_j|^((p-1)/2) * phi_j / |phi_j|
                let r = abs2[j].sqrt();
                acc = acc + values[j] * (cross * pow_abs(abs2[j], half) / r);
            }
            out[j] = acc;
        }
    }

    /// Whether the coupling matrix has a nonzero entry.
    pub fn is_coupled(&self) -> bool {
        self.coupled
    }
}
