#![allow(dead_code)]

use cnls_core::SolverConfig;

/// Trapezoid rule on `[-l, l]`; spectrally accurate for smooth decaying integrands.
pub fn trapezoid(l: f64, h: f64, f: impl Fn(f64) -> f64) -> f64 {
    let n = (2.0 * l / h).round() as i64;
    let h = 2.0 * l / n as f64;
    (0..=n)
        .map(|i| {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            w * f(-l + i as f64 * h)
        })
        .sum::<f64>()
        * h
}

/// Exact 1D ground state of `w'' - lam w + w^p = 0`:
/// `w = (a sech^2(b x))^(1/(p-1))`, `a = (p+1) lam / 2`, `b = (p-1) sqrt(lam) / 2`.
pub struct Soliton {
    pub p: f64,
    pub a: f64,
    pub b: f64,
}

impl Soliton {
    pub fn new(p: f64, lam: f64) -> Self {
        Self { p, a: (p + 1.0) * lam / 2.0, b: (p - 1.0) * lam.sqrt() / 2.0 }
    }

    pub fn value(&self, x: f64) -> f64 {
        (self.a / (self.b * x).cosh().powi(2)).powf(1.0 / (self.p - 1.0))
    }

    pub fn slope(&self, x: f64) -> f64 {
        -2.0 * self.b / (self.p - 1.0) * (self.b * x).tanh() * self.value(x)
    }

    /// `(||w||^2, K, int w^(p+1))`.
    pub fn integrals(&self) -> (f64, f64, f64) {
        let l = 40.0 / self.b;
        let h = 1e-3 / self.b;
        (
            trapezoid(l, h, |x| self.value(x).powi(2)),
            0.5 * trapezoid(l, h, |x| self.slope(x).powi(2)),
            trapezoid(l, h, |x| self.value(x).powf(self.p + 1.0)),
        )
    }
}

/// Golden-section minimum of a unimodal `f` on `[a, b]`.
pub fn golden_min(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Detector settings used for collapse runs: the default factor `1e6` and
/// `dt_min = 1e-9` are not reachable before the grid saturates.
pub fn collapse_config(t_max: f64, sample_interval: f64) -> SolverConfig {
    SolverConfig {
        dt0: 1e-4,
        t_max,
        cfl_safety: 0.05,
        blowup_gradnorm_factor: 1e3,
        blowup_tail_fraction: 0.01,
        dt_min: 1e-6,
        sample_interval,
        dt_max: Some(5e-3),
        ..Default::default()
    }
}

/// Radial collapse saturates the grid long before `K` grows a thousandfold.
pub fn radial_collapse_config(t_max: f64, sample_interval: f64) -> SolverConfig {
    SolverConfig { blowup_gradnorm_factor: 50.0, dt_min: 1e-8, ..collapse_config(t_max, sample_interval) }
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
