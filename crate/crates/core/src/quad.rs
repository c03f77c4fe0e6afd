//! Gauss-Legendre rules.

use crate::num::Real;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// nodes ascending.
pub fn gauss_legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    assert!(n > 0, "Gauss-Legendre rule needs at least one node");
    let mut x = vec![T::zero(); n];
    let mut w = vec![T::zero(); n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, refined by Newton on P_n in f64 then T.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = T::lit(-z);
        x[n - 1 - i] = T::lit(z);
        w[i] = T::lit(wi);
        w[n - 1 - i] = T::lit(wi);
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Integrates `f` over `[a, b]` with a fixed rule mapped from `[-1, 1]`.
pub fn integrate<T: Real>(rule: &(Vec<T>, Vec<T>), a: T, b: T, mut f: impl FnMut(T) -> T) -> T {
    let half = (b - a) * T::lit(0.5);
    let mid = (b + a) * T::lit(0.5);
    rule.0
        .iter()
        .zip(&rule.1)
        .map(|(&x, &w)| w * f(mid + half * x))
        .sum::<T>()
        * half
}
