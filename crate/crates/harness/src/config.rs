//! Experiment configuration: a TOML document validated into [`ExperimentConfig`].
//!
//! Validation errors carry the line of the offending key, or the flag name
//! when the value came from a command-line override.

use std::ops::Range;
use std::path::PathBuf;

use cnls_core::grid::Manifold;
use cnls_core::variational::{GroundStateConfig, OptimizerConfig, ThresholdKind};
use cnls_core::virial::Theorem;
use cnls_core::{GridSpec, Params, SolverConfig};
use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SingleRun,
    AmplitudeSweep,
    ThresholdBisect,
    Instability,
    ThresholdEstimate,
    IdentitySuite,
}

impl ExperimentKind {
    pub fn evolves(self) -> bool {
        matches!(self, Self::SingleRun | Self::AmplitudeSweep | Self::ThresholdBisect | Self::Instability)
    }
}

/// Initial profile of one component.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum ComponentSpec {
    Gaussian { amplitude: f64, width: f64, phase: f64 },
    Sech { amplitude: f64, width: f64, power: f64, phase: f64 },
    /// Real spherical harmonic `amplitude * Y_l^m`.
    Harmonic { l: usize, m: i64, amplitude: f64 },
    /// Seeded random field with coefficient decay `(1 + l)^-decay`.
    Random { amplitude: f64, decay: f64, antisymmetric: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BisectSpec {
    pub c_lo: f64,
    pub c_hi: f64,
    pub tolerance: f64,
    /// Interior amplitudes tried per round.
    pub probes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstabilitySpec {
    pub k: Vec<f64>,
    pub profile_k: Vec<f64>,
    pub ground_state: GroundStateConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdSpec {
    pub kind: Option<ThresholdKind>,
    pub families: Vec<String>,
    pub sech_power: f64,
    pub optimizer: OptimizerConfig,
    /// Grid for the estimate; the run grid when absent.
    pub grid: Option<GridSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifySpec {
    pub random_fields: usize,
    pub lmax: usize,
}

/// Fully validated experiment description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub params: Params,
    pub grid: GridSpec,
    pub solver: SolverConfig,
    pub theorem: Option<Theorem>,
    pub data: Vec<ComponentSpec>,
    /// Amplitude factor applied to the initial data of a single run.
    pub scale: f64,
    pub sweep: Vec<f64>,
    pub bisect: Option<BisectSpec>,
    pub instability: InstabilitySpec,
    pub threshold: ThresholdSpec,
    pub verify: VerifySpec,
    pub seed: u64,
    pub workers: usize,
    pub output: PathBuf,
}

/// Command-line values that replace the corresponding config entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub experiment: Option<ExperimentKind>,
    pub p: Option<f64>,
    pub c: Option<f64>,
    pub k: Option<f64>,
    pub t_max: Option<f64>,
    pub points: Option<usize>,
    pub output: Option<PathBuf>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Option<Spanned<ExperimentKind>>,
    seed: Option<u64>,
    workers: Option<Spanned<usize>>,
    output: Option<PathBuf>,
    theorem: Option<Spanned<Theorem>>,
    system: Spanned<RawSystem>,
    grid: Spanned<RawGrid>,
    solver: Option<Spanned<SolverConfig>>,
    data: Option<RawData>,
    sweep: Option<Spanned<RawRange>>,
    bisect: Option<Spanned<RawBisect>>,
    instability: Option<RawInstability>,
    threshold: Option<RawThreshold>,
    verify: Option<RawVerify>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    n: usize,
    p: Spanned<f64>,
    mu: Option<Vec<f64>>,
    beta: Option<Vec<Vec<Spanned<f64>>>>,
    lambda: Option<Vec<f64>>,
    gamma: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    manifold: Manifold,
    points: Option<usize>,
    half_length: Option<f64>,
    radius: Option<f64>,
    lmax: Option<usize>,
    n_lat: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    #[serde(default)]
    component: Vec<Spanned<RawComponent>>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Shape {
    Gaussian,
    Sech,
    Harmonic,
    Random,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawComponent {
    shape: Shape,
    amplitude: Option<f64>,
    width: Option<f64>,
    power: Option<f64>,
    phase: Option<f64>,
    l: Option<usize>,
    m: Option<i64>,
    decay: Option<f64>,
    antisymmetric: Option<bool>,
}

/// Explicit list, or `count` evenly spaced values from `min` to `max`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRange {
    #[serde(alias = "k")]
    c: Option<Vec<f64>>,
    #[serde(alias = "k_min")]
    c_min: Option<f64>,
    #[serde(alias = "k_max")]
    c_max: Option<f64>,
    count: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBisect {
    c_lo: f64,
    c_hi: f64,
    tolerance: f64,
    probes: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstability {
    k: Option<Spanned<Vec<f64>>>,
    k_min: Option<f64>,
    k_max: Option<f64>,
    count: Option<usize>,
    profile_k: Option<Spanned<Vec<f64>>>,
    ground_state: Option<GroundStateConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawThreshold {
    kind: Option<ThresholdKind>,
    families: Option<Spanned<Vec<String>>>,
    sech_power: Option<f64>,
    optimizer: Option<OptimizerConfig>,
    grid: Option<Spanned<RawGrid>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVerify {
    random_fields: Option<usize>,
    lmax: Option<usize>,
}

/// Where a value came from, for error messages.
#[derive(Clone, Copy)]
struct Anchor<'a> {
    src: &'a str,
}

impl Anchor<'_> {
    fn line(&self, span: Range<usize>) -> usize {
        let end = span.start.min(self.src.len());
        self.src[..end].bytes().filter(|&b| b == b'\n').count() + 1
    }

    fn err(&self, span: Range<usize>, msg: impl std::fmt::Display) -> HarnessError {
        HarnessError::Validation(format!("line {}: {msg}", self.line(span)))
    }
}

fn flag_err(flag: &str, msg: impl std::fmt::Display) -> HarnessError {
    HarnessError::Validation(format!("{flag}: {msg}"))
}

/// Parses and validates a config document with no overrides.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_config_with(text, &Overrides::default())
}

pub fn parse_config_with(text: &str, ov: &Overrides) -> Result<ExperimentConfig> {
    let at = Anchor { src: text };
    let raw: RawConfig = toml::from_str(text).map_err(|e| match e.span() {
        Some(span) => at.err(span, e.message().trim()),
        None => HarnessError::Validation(e.message().trim().to_string()),
    })?;

    let experiment = match (&raw.experiment, ov.experiment) {
        (Some(k), Some(want)) if *k.get_ref() != want => {
            return Err(at.err(k.span(), format!("config declares experiment {:?} but the command runs {want:?}", k.get_ref())));
        }
        (Some(k), _) => *k.get_ref(),
        (None, Some(want)) => want,
        (None, None) => return Err(HarnessError::Validation("missing key `experiment`".into())),
    };

    let sys_span = raw.system.span();
    let sys = raw.system.into_inner();
    let comps = sys.mu.as_ref().map_or(1, Vec::len);
    let mu = sys.mu.clone().unwrap_or_else(|| vec![1.0]);
    let beta: Vec<Vec<f64>> = match &sys.beta {
        Some(rows) => {
            if rows.len() != comps || rows.iter().any(|r| r.len() != comps) {
                return Err(at.err(sys_span, format!("beta must be a {comps}x{comps} matrix to match mu")));
            }
            for i in 0..comps {
                for j in 0..i {
                    let (a, b) = (&rows[i][j], &rows[j][i]);
                    if a.get_ref() != b.get_ref() {
                        return Err(at.err(
                            a.span(),
                            format!(
                                "beta must be symmetric: beta[{i}][{j}] = {} (line {}) but beta[{j}][{i}] = {} (line {})",
                                a.get_ref(),
                                at.line(a.span()),
                                b.get_ref(),
                                at.line(b.span())
                            ),
                        ));
                    }
                }
            }
            rows.iter().map(|r| r.iter().map(|v| *v.get_ref()).collect()).collect()
        }
        None => vec![vec![0.0; comps]; comps],
    };
    let lambda = sys.lambda.clone().unwrap_or_else(|| vec![1.0; comps]);
    let (p, p_err): (f64, Box<dyn Fn(String) -> HarnessError>) = match ov.p {
        Some(p) => (p, Box::new(|m| flag_err("--p", m))),
        None => {
            let span = sys.p.span();
            (*sys.p.get_ref(), Box::new(move |m| at.err(span.clone(), m)))
        }
    };
    let params = Params::new(sys.n, p, mu, beta, lambda, sys.gamma.unwrap_or(2.0)).map_err(|e| {
        if e.to_string().contains("p = ") {
            p_err(e.to_string())
        } else {
            at.err(sys_span.clone(), e)
        }
    })?;

    let grid_span = raw.grid.span();
    let mut grid_raw = raw.grid.into_inner();
    if let Some(points) = ov.points {
        match grid_raw.manifold {
            Manifold::Sphere => grid_raw.n_lat = Some(points),
            _ => grid_raw.points = Some(points),
        }
    }
    let grid = grid_spec(&grid_raw, sys.n).map_err(|m| at.err(grid_span.clone(), m))?;
    grid.build::<f64>().map_err(|e| at.err(grid_span.clone(), e))?;
    let manifold = grid.manifold();
    if manifold == Manifold::Sphere && sys.n != 2 {
        return Err(at.err(sys_span, format!("the sphere grid needs n = 2, got n = {}", sys.n)));
    }
    if manifold == Manifold::Sphere && experiment.evolves() {
        return Err(at.err(grid_span, format!("{experiment:?} evolves in time, which is not available on the sphere")));
    }

    let theorem = match &raw.theorem {
        Some(t) => {
            let kind = t.get_ref().threshold_kind(manifold).map_err(|e| at.err(t.span(), e))?;
            kind.check_range(&params).map_err(|e| p_err(format!("p = {p} is out of range for {:?}: {e}", t.get_ref())))?;
            Some(*t.get_ref())
        }
        None => None,
    };

    let (mut solver, solver_span) = match raw.solver {
        Some(s) => {
            let span = s.span();
            (s.into_inner(), span)
        }
        None => (SolverConfig::default(), 0..0),
    };
    if let Some(t) = ov.t_max {
        solver.t_max = t;
    }
    solver.validate().map_err(|e| match ov.t_max {
        Some(_) if e.to_string().contains("t_max") => flag_err("--t-max", e),
        _ => at.err(solver_span.clone(), e),
    })?;

    let data = match raw.data {
        Some(d) if !d.component.is_empty() => d
            .component
            .into_iter()
            .map(|c| {
                let span = c.span();
                component_spec(c.into_inner(), manifold).map_err(|m| at.err(span, m))
            })
            .collect::<Result<Vec<_>>>()?,
        _ => match manifold {
            Manifold::Sphere => vec![ComponentSpec::Harmonic { l: 1, m: 0, amplitude: 1.0 }; comps],
            _ => vec![ComponentSpec::Gaussian { amplitude: 1.0, width: 1.0, phase: 0.0 }; comps],
        },
    };
    if data.len() != comps {
        return Err(HarnessError::Validation(format!("[data] has {} components, the system has {comps}", data.len())));
    }

    let scale = ov.c.unwrap_or(1.0);
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(flag_err("--c", format!("amplitude factor must be positive, got {scale}")));
    }

    let sweep = match (ov.c, raw.sweep) {
        (Some(c), _) => vec![c],
        (None, Some(s)) => {
            let span = s.span();
            let s = s.into_inner();
            range(s.c, s.c_min, s.c_max, s.count).map_err(|m| at.err(span, format!("[sweep] {m}")))?
        }
        (None, None) if experiment == ExperimentKind::AmplitudeSweep => {
            return Err(HarnessError::Validation("amplitude-sweep needs a [sweep] section".into()));
        }
        (None, None) => Vec::new(),
    };

    let bisect = match raw.bisect {
        Some(b) => {
            let span = b.span();
            let b = b.into_inner();
            if !(b.tolerance > 0.0) {
                return Err(at.err(span, format!("bisection tolerance must be positive, got {}", b.tolerance)));
            }
            if !(b.c_lo > 0.0 && b.c_lo < b.c_hi && b.c_hi.is_finite()) {
                return Err(at.err(span, format!("need 0 < c_lo < c_hi, got c_lo = {}, c_hi = {}", b.c_lo, b.c_hi)));
            }
            let probes = b.probes.unwrap_or(1);
            if probes == 0 {
                return Err(at.err(span, "probes must be at least 1"));
            }
            Some(BisectSpec { c_lo: b.c_lo, c_hi: b.c_hi, tolerance: b.tolerance, probes })
        }
        None if experiment == ExperimentKind::ThresholdBisect => {
            return Err(HarnessError::Validation("threshold-bisect needs a [bisect] section".into()));
        }
        None => None,
    };

    let instability = match raw.instability {
        Some(s) => {
            let span = s.k.as_ref().map_or(0..0, |k| k.span());
            let k = match (ov.k, s.k.is_some() || s.k_min.is_some()) {
                (Some(k), _) => vec![k],
                (None, true) => range(s.k.map(Spanned::into_inner), s.k_min, s.k_max, s.count)
                    .map_err(|m| at.err(span, format!("[instability] {m}")))?,
                (None, false) => vec![0.95, 1.05],
            };
            let profile_k = match s.profile_k {
                Some(pk) => {
                    let span = pk.span();
                    let pk = pk.into_inner();
                    if pk.is_empty() || pk.iter().any(|k| !(*k > 0.0)) {
                        return Err(at.err(span, "[instability] profile_k must be nonempty and positive"));
                    }
                    pk
                }
                None => default_profile_k(),
            };
            InstabilitySpec { k, profile_k, ground_state: s.ground_state.unwrap_or_default() }
        }
        None => InstabilitySpec {
            k: ov.k.map_or_else(|| vec![0.95, 1.05], |k| vec![k]),
            profile_k: default_profile_k(),
            ground_state: GroundStateConfig::default(),
        },
    };
    if experiment == ExperimentKind::Instability {
        if manifold != Manifold::EuclideanBox {
            return Err(at.err(grid_span, "instability needs a euclidean-box grid"));
        }
        if instability.k.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
            return Err(flag_err("--k", "scaling factors must be positive"));
        }
    }

    let threshold = match raw.threshold {
        Some(t) => {
            let span = t.families.as_ref().map_or(0..0, |f| f.span());
            let families = t.families.map_or_else(default_families, Spanned::into_inner);
            if families.is_empty() {
                return Err(at.err(span, "[threshold] families must be nonempty"));
            }
            if let Some(f) = families.iter().find(|f| !matches!(f.as_str(), "gaussian" | "sech")) {
                return Err(at.err(span, format!("[threshold] unknown family `{f}` (expected gaussian or sech)")));
            }
            let grid = match t.grid {
                Some(g) => {
                    let gspan = g.span();
                    let spec = grid_spec(g.get_ref(), sys.n).map_err(|m| at.err(gspan.clone(), m))?;
                    if spec.manifold() != manifold {
                        return Err(at.err(gspan, "[threshold.grid] must use the run grid's manifold"));
                    }
                    spec.build::<f64>().map_err(|e| at.err(gspan, e))?;
                    Some(spec)
                }
                None => None,
            };
            if let Some(kind) = t.kind {
                kind.check_range(&params).map_err(|e| p_err(format!("p = {p} is out of range for {kind:?}: {e}")))?;
            }
            ThresholdSpec {
                kind: t.kind,
                families,
                sech_power: t.sech_power.unwrap_or(1.0),
                optimizer: t.optimizer.unwrap_or_default(),
                grid,
            }
        }
        None => ThresholdSpec {
            kind: None,
            families: default_families(),
            sech_power: 1.0,
            optimizer: OptimizerConfig::default(),
            grid: None,
        },
    };
    if experiment == ExperimentKind::ThresholdEstimate && threshold.kind.is_none() && theorem.is_none() {
        return Err(HarnessError::Validation("threshold-estimate needs [threshold] kind or a theorem".into()));
    }

    let verify = raw.verify.map_or(VerifySpec { random_fields: 100, lmax: 12 }, |v| VerifySpec {
        random_fields: v.random_fields.unwrap_or(100),
        lmax: v.lmax.unwrap_or(12),
    });

    let workers = match (ov.workers, &raw.workers) {
        (Some(w), _) => w,
        (None, Some(w)) => *w.get_ref(),
        (None, None) => 1,
    };
    if workers == 0 {
        return Err(match &raw.workers {
            Some(w) if ov.workers.is_none() => at.err(w.span(), "workers must be at least 1"),
            _ => flag_err("--workers", "workers must be at least 1"),
        });
    }

    Ok(ExperimentConfig {
        experiment,
        params,
        grid,
        solver,
        theorem,
        data,
        scale,
        sweep,
        bisect,
        instability,
        threshold,
        verify,
        seed: ov.seed.or(raw.seed).unwrap_or(0),
        workers,
        output: ov.output.clone().or(raw.output).unwrap_or_else(|| PathBuf::from("out")),
    })
}

fn default_families() -> Vec<String> {
    vec!["gaussian".into(), "sech".into()]
}

fn default_profile_k() -> Vec<f64> {
    (0..=20).map(|i| 1.0 + i as f64 / 20.0).collect()
}

fn grid_spec(g: &RawGrid, n: usize) -> Result<GridSpec, String> {
    let need = |v: Option<usize>, key: &str| v.ok_or_else(|| format!("{:?} grid needs `{key}`", g.manifold));
    let needf = |v: Option<f64>, key: &str| v.ok_or_else(|| format!("{:?} grid needs `{key}`", g.manifold));
    Ok(match g.manifold {
        Manifold::EuclideanBox => GridSpec::EuclideanBox { n, points: need(g.points, "points")?, half_length: needf(g.half_length, "half_length")? },
        Manifold::HyperbolicRadial => GridSpec::HyperbolicRadial { n, points: need(g.points, "points")?, radius: needf(g.radius, "radius")? },
        Manifold::Sphere => GridSpec::Sphere { lmax: need(g.lmax, "lmax")?, n_lat: need(g.n_lat, "n_lat")? },
    })
}

fn component_spec(c: RawComponent, manifold: Manifold) -> Result<ComponentSpec, String> {
    let amplitude = c.amplitude.unwrap_or(1.0);
    if !amplitude.is_finite() || amplitude < 0.0 {
        return Err(format!("amplitude must be finite and nonnegative, got {amplitude}"));
    }
    let on_sphere = manifold == Manifold::Sphere;
    let spec = match c.shape {
        Shape::Gaussian | Shape::Sech if on_sphere => {
            return Err("gaussian and sech profiles need a box or radial grid; use harmonic or random on the sphere".into());
        }
        Shape::Harmonic | Shape::Random if !on_sphere => return Err("harmonic and random fields live on the sphere".into()),
        Shape::Gaussian => ComponentSpec::Gaussian { amplitude, width: c.width.unwrap_or(1.0), phase: c.phase.unwrap_or(0.0) },
        Shape::Sech => ComponentSpec::Sech {
            amplitude,
            width: c.width.unwrap_or(1.0),
            power: c.power.unwrap_or(1.0),
            phase: c.phase.unwrap_or(0.0),
        },
        Shape::Harmonic => ComponentSpec::Harmonic { l: c.l.unwrap_or(1), m: c.m.unwrap_or(0), amplitude },
        Shape::Random => ComponentSpec::Random { amplitude, decay: c.decay.unwrap_or(1.0), antisymmetric: c.antisymmetric.unwrap_or(true) },
    };
    if let ComponentSpec::Gaussian { width, .. } | ComponentSpec::Sech { width, .. } = spec {
        if !(width > 0.0 && width.is_finite()) {
            return Err(format!("width must be positive, got {width}"));
        }
    }
    Ok(spec)
}

fn range(list: Option<Vec<f64>>, min: Option<f64>, max: Option<f64>, count: Option<usize>) -> Result<Vec<f64>, String> {
    let v = match (list, min, max) {
        (Some(v), None, None) => v,
        (None, Some(a), Some(b)) => {
            let n = count.unwrap_or(11);
            if n == 0 {
                return Err("count must be at least 1".into());
            }
            if !(a <= b) {
                return Err(format!("range is empty: {a} > {b}"));
            }
            if n == 1 {
                vec![a]
            } else {
                (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
            }
        }
        _ => return Err("give either an explicit list or both range ends".into()),
    };
    if v.is_empty() {
        return Err("range must be nonempty".into());
    }
    if v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err("values must be positive and finite".into());
    }
    Ok(v)
}
