//! Orchestration of the experiment kinds over the core solvers.

use std::sync::Arc;

use cnls_core::functionals::{compute_functionals, h_lambda};
use cnls_core::grid::{Grid, Manifold, RadialGrid, SphereGrid};
use cnls_core::hyperbolic::{check_weight_inequalities, default_weight, virial_weights, WeightKind};
use cnls_core::sphere::{check_poincare_antisymmetric, check_sobolev_sphere, check_sphere_weights, random_field, sphere_state, SphereField};
use cnls_core::state::{build_state, Profile};
use cnls_core::variational::{
    estimate_threshold, ground_state_solve, scaling_profile, verify_stationarity, Family, MassNorm, ScalingPoint, StationarityReport,
    ThresholdEstimate, ThresholdKind,
};
use cnls_core::virial::{check_sign_persistence, check_virial_consistency, classify_initial_data, Certainty, Prediction, SignPersistence, TheoremVerdict};
use cnls_core::{spectral, Classification, Complex, Params, Record, Report, State};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ComponentSpec, ExperimentConfig, ExperimentKind};
use crate::error::{HarnessError, Result};

/// Outcome of one time evolution.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub index: usize,
    /// Name of the scanned factor (`c` for amplitudes, `k` for ground-state scalings).
    pub label: &'static str,
    pub factor: f64,
    pub initial: Report,
    pub verdict: Option<TheoremVerdict<f64>>,
    pub classification: Classification<f64>,
    /// Whether a certified verdict matched the outcome; `None` when nothing was certified
    /// or the run was inconclusive.
    pub concordant: Option<bool>,
    pub sign_persistence: Option<SignPersistence<f64>>,
    pub mass_drift: f64,
    pub energy_drift: f64,
    pub max_kinetic: f64,
    pub steps: usize,
    pub rejected_steps: usize,
    pub min_dt: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdSummary {
    pub kind: ThresholdKind,
    pub value: f64,
    pub gamma: f64,
    pub mass: MassNorm,
    pub family: String,
    pub family_value: f64,
    pub per_family: Vec<(String, f64)>,
    pub constraint_residual: f64,
    pub residual: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
}

impl From<&ThresholdEstimate<f64>> for ThresholdSummary {
    fn from(e: &ThresholdEstimate<f64>) -> Self {
        Self {
            kind: e.kind,
            value: e.value,
            gamma: e.gamma,
            mass: e.mass,
            family: e.family.clone(),
            family_value: e.family_value,
            per_family: e.per_family.clone(),
            constraint_residual: e.constraint_residual,
            residual: e.residual,
            evaluations: e.evaluations,
            iterations: e.iterations,
            converged: e.converged,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub outcomes: Vec<(f64, String)>,
    /// No global outcome above a blow-up outcome.
    pub monotone: bool,
    /// `[largest global c below the first blow-up, first blow-up c]`.
    pub transition: Option<[f64; 2]>,
    pub largest_certified_global: Option<f64>,
    /// The observed transition lies at or above every certified-global amplitude.
    pub ordering_consistent: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BisectionReport {
    pub bracket: [f64; 2],
    pub width: f64,
    pub c_star: f64,
    pub rounds: usize,
    pub converged: bool,
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InstabilityReport {
    pub lambda: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub accepted: bool,
    pub stationarity: StationarityReport<f64>,
    pub profile: Vec<ScalingPoint<f64>>,
    /// The scaling map decreases strictly on the sampled `k > 1`.
    pub decreasing_above_one: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Everything an experiment reports besides the time series.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub runs: Vec<RunSummary>,
    pub threshold: Option<ThresholdSummary>,
    pub sweep: Option<SweepReport>,
    pub bisection: Option<BisectionReport>,
    pub instability: Option<InstabilityReport>,
    pub identities: Option<Vec<IdentityCheck>>,
    /// Warnings that make the experiment a numerical failure (exit status 2).
    pub failures: Vec<String>,
    pub warnings: Vec<String>,
}

impl Summary {
    fn new(config: &ExperimentConfig) -> Self {
        Self {
            config: config.clone(),
            runs: Vec::new(),
            threshold: None,
            sweep: None,
            bisection: None,
            instability: None,
            identities: None,
            failures: Vec::new(),
            warnings: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub summary: Summary,
    /// Time series, `records[i]` belonging to `summary.runs[i]`.
    pub records: Vec<Record>,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Experiment> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| HarnessError::Numerical(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        let mut ex = Experiment { summary: Summary::new(cfg), records: Vec::new() };
        match cfg.experiment {
            ExperimentKind::SingleRun => single_run(cfg, &mut ex)?,
            ExperimentKind::AmplitudeSweep => sweep(cfg, &mut ex)?,
            ExperimentKind::ThresholdBisect => bisect(cfg, &mut ex)?,
            ExperimentKind::Instability => instability(cfg, &mut ex)?,
            ExperimentKind::ThresholdEstimate => threshold_only(cfg, &mut ex)?,
            ExperimentKind::IdentitySuite => identity_suite(cfg, &mut ex)?,
        }
        for run in &ex.summary.runs {
            if let Classification::Inconclusive { t, reason } = run.classification {
                ex.summary.failures.push(format!("run {} ({} = {}) inconclusive at t = {t}: {reason:?}", run.index, run.label, run.factor));
            }
            if run.concordant == Some(false) {
                ex.summary.failures.push(format!("run {} ({} = {}) contradicts its certified verdict", run.index, run.label, run.factor));
            }
            for w in &run.warnings {
                ex.summary.warnings.push(format!("run {}: {w}", run.index));
            }
        }
        Ok(ex)
    })
}

fn families(cfg: &ExperimentConfig) -> Vec<Family<f64>> {
    cfg.threshold
        .families
        .iter()
        .map(|f| match f.as_str() {
            "gaussian" => Family::Gaussian,
            _ => Family::Sech { power: cfg.threshold.sech_power },
        })
        .collect()
}

fn estimate(cfg: &ExperimentConfig, kind: ThresholdKind) -> Result<ThresholdEstimate<f64>> {
    let grid = cfg.threshold.grid.as_ref().unwrap_or(&cfg.grid).build::<f64>()?;
    Ok(estimate_threshold(kind, &cfg.params, &grid, &families(cfg), &cfg.threshold.optimizer)?)
}

/// Threshold the configured theorem compares against, estimated once per experiment.
fn theorem_estimate(cfg: &ExperimentConfig, ex: &mut Experiment) -> Result<Option<ThresholdEstimate<f64>>> {
    let Some(th) = cfg.theorem else { return Ok(None) };
    let est = estimate(cfg, th.threshold_kind(cfg.grid.manifold())?)?;
    ex.summary.threshold = Some((&est).into());
    Ok(Some(est))
}

pub fn initial_state(cfg: &ExperimentConfig, grid: &Arc<Grid<f64>>) -> Result<State> {
    if grid.manifold() == Manifold::Sphere {
        let cnls_core::GridSpec::Sphere { lmax, .. } = cfg.grid else { unreachable!("sphere grid") };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let fields = cfg
            .data
            .iter()
            .map(|c| match *c {
                ComponentSpec::Harmonic { l, m, amplitude } => Ok(SphereField::harmonic(lmax, l, m)?.scaled(amplitude)),
                ComponentSpec::Random { amplitude, decay, antisymmetric } => {
                    Ok(random_field::<f64, _>(lmax, decay, antisymmetric, &mut rng).scaled(amplitude))
                }
                _ => Err(HarnessError::Validation("profile shape does not apply on the sphere".into())),
            })
            .collect::<Result<Vec<_>>>()?;
        return Ok(sphere_state(grid, &fields)?.scaled(cfg.scale));
    }
    let mut profiles = Vec::new();
    let mut phases = Vec::new();
    for c in &cfg.data {
        match *c {
            ComponentSpec::Gaussian { amplitude, width, phase } => {
                profiles.push(Profile::gaussian(amplitude, width));
                phases.push(phase);
            }
            ComponentSpec::Sech { amplitude, width, power, phase } => {
                profiles.push(Profile::sech_power(amplitude, width, power));
                phases.push(phase);
            }
            _ => return Err(HarnessError::Validation("harmonic and random fields live on the sphere".into())),
        }
    }
    Ok(build_state(grid, &profiles, &phases)?.scaled(cfg.scale))
}

/// Classifies (when a theorem is set) and evolves `state0`.
fn simulate(
    cfg: &ExperimentConfig,
    state0: &State,
    est: Option<&ThresholdEstimate<f64>>,
    label: &'static str,
    factor: f64,
) -> Result<(RunSummary, Record)> {
    let params = &cfg.params;
    let initial = compute_functionals(state0, params)?;
    let verdict = match (cfg.theorem, est) {
        (Some(th), Some(e)) => Some(classify_initial_data(state0, params, std::slice::from_ref(e), th)?),
        _ => None,
    };
    let weight = default_weight(state0.grid())?;
    let rec = spectral::evolve(state0, params, &cfg.solver, &weight)?;
    let resolved = rec.classification.is_global() || rec.classification.is_blowup();
    let concordant = verdict.as_ref().and_then(|v| {
        if v.certainty != Some(Certainty::Certified) || !resolved {
            return None;
        }
        match v.predicted {
            Prediction::Global => Some(rec.classification.is_global()),
            Prediction::Blowup => Some(rec.classification.is_blowup()),
            Prediction::Inapplicable => None,
        }
    });
    let sign_persistence = verdict.as_ref().and_then(|v| {
        let f = v.theorem.sign_functional()?;
        if v.predicted == Prediction::Inapplicable || !resolved {
            return None;
        }
        check_sign_persistence(&rec, params, f).ok()
    });
    let summary = RunSummary {
        index: 0,
        label,
        factor,
        initial,
        verdict,
        classification: rec.classification,
        concordant,
        sign_persistence,
        mass_drift: rec.mass_drift,
        energy_drift: rec.energy_drift,
        max_kinetic: rec.max_kinetic,
        steps: rec.steps,
        rejected_steps: rec.rejected_steps,
        min_dt: rec.min_dt,
        warnings: rec.warnings.clone(),
    };
    Ok((summary, rec))
}

fn push_runs(ex: &mut Experiment, mut runs: Vec<(RunSummary, Record)>) {
    runs.sort_by(|a, b| a.0.factor.total_cmp(&b.0.factor));
    for (mut s, r) in runs {
        s.index = ex.summary.runs.len();
        if let Some(sp) = &s.sign_persistence {
            if sp.violations > 0 {
                ex.summary.failures.push(format!("{:?} changed sign along the run at {} = {}", sp.functional, s.label, s.factor));
            }
        }
        ex.summary.runs.push(s);
        ex.records.push(r);
    }
}

fn scaled_runs(cfg: &ExperimentConfig, base: &State, est: Option<&ThresholdEstimate<f64>>, label: &'static str, factors: &[f64]) -> Result<Vec<(RunSummary, Record)>> {
    factors.par_iter().map(|&c| simulate(cfg, &base.scaled(c), est, label, c)).collect()
}

fn single_run(cfg: &ExperimentConfig, ex: &mut Experiment) -> Result<()> {
    let grid = cfg.grid.build::<f64>()?;
    let est = theorem_estimate(cfg, ex)?;
    let s0 = initial_state(cfg, &grid)?;
    let run = simulate(cfg, &s0, est.as_ref(), "c", cfg.scale)?;
    push_runs(ex, vec![run]);
    Ok(())
}

fn outcome_name(c: &Classification<f64>) -> String {
    match c {
        Classification::GlobalToHorizon => "global".into(),
        Classification::Blowup { .. } => "blowup".into(),
        Classification::Inconclusive { .. } => "inconclusive".into(),
    }
}

fn sweep(cfg: &ExperimentConfig, ex: &mut Experiment) -> Result<()> {
    let grid = cfg.grid.build::<f64>()?;
    let est = theorem_estimate(cfg, ex)?;
    let base = initial_state(cfg, &grid)?;
    let runs = scaled_runs(cfg, &base, est.as_ref(), "c", &cfg.sweep)?;
    push_runs(ex, runs);
    let points: Vec<(f64, Classification<f64>, bool)> = ex
        .summary
        .runs
        .iter()
        .map(|r| {
            let certified_global = r.verdict.as_ref().is_some_and(|v| v.predicted == Prediction::Global && v.certainty == Some(Certainty::Certified));
            (r.factor, r.classification, certified_global)
        })
        .collect();
    let report = assess_sweep(&points);
    if !report.monotone {
        let msg = "NON-MONOTONE verdict sequence in c: a global run lies above a blow-up run (possible under-resolution)".to_string();
        eprintln!("warning: {msg}");
        ex.summary.failures.push(msg);
    }
    if report.ordering_consistent == Some(false) {
        ex.summary.failures.push("observed transition lies below an amplitude certified global".into());
    }
    ex.summary.sweep = Some(report);
    Ok(())
}

/// Orders `(c, outcome, certified global)` triples by `c` and summarizes the
/// global/blow-up transition.
pub fn assess_sweep(points: &[(f64, Classification<f64>, bool)]) -> SweepReport {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let outcomes = pts.iter().map(|p| (p.0, outcome_name(&p.1))).collect();
    let first_blowup = pts.iter().position(|p| p.1.is_blowup());
    let monotone = first_blowup.is_none_or(|i| !pts[i..].iter().any(|p| p.1.is_global()));
    let transition = first_blowup.and_then(|i| pts[..i].iter().rev().find(|p| p.1.is_global()).map(|g| [g.0, pts[i].0]));
    let largest_certified_global = pts.iter().filter(|p| p.2).map(|p| p.0).reduce(f64::max);
    let ordering_consistent = match (transition, largest_certified_global) {
        (Some([lo, _]), Some(g)) => Some(lo >= g),
        _ => None,
    };
    SweepReport { outcomes, monotone, transition, largest_certified_global, ordering_consistent }
}

fn bisect(cfg: &ExperimentConfig, ex: &mut Experiment) -> Result<()> {
    let spec = cfg.bisect.expect("validated");
    let grid = cfg.grid.build::<f64>()?;
    let est = theorem_estimate(cfg, ex)?;
    let base = initial_state(cfg, &grid)?;
    let (mut lo, mut hi) = (spec.c_lo, spec.c_hi);
    let mut rounds = 0;
    let mut aborted = None;

    let ends = scaled_runs(cfg, &base, est.as_ref(), "c", &[lo, hi])?;
    let (lo_ok, hi_ok) = (ends[0].0.classification.is_global(), ends[1].0.classification.is_blowup());
    push_runs(ex, ends);
    if !lo_ok || !hi_ok {
        let which = if !lo_ok { format!("c_lo = {lo} is not global-to-horizon") } else { format!("c_hi = {hi} does not blow up") };
        aborted = Some(which);
    }
    while aborted.is_none() && hi - lo > spec.tolerance {
        rounds += 1;
        let m = spec.probes;
        let probes: Vec<f64> = (1..=m).map(|i| lo + (hi - lo) * i as f64 / (m + 1) as f64).collect();
        let mut runs = scaled_runs(cfg, &base, est.as_ref(), "c", &probes)?;
        runs.sort_by(|a, b| a.0.factor.total_cmp(&b.0.factor));
        let classes: Vec<Classification<f64>> = runs.iter().map(|r| r.0.classification).collect();
        push_runs(ex, runs);
        if let Some(i) = classes.iter().position(|c| !(c.is_global() || c.is_blowup())) {
            aborted = Some(format!("probe c = {} is inconclusive", probes[i]));
            break;
        }
        let first = classes.iter().position(|c| c.is_blowup()).unwrap_or(m);
        if classes[first..].iter().any(|c| c.is_global()) {
            ex.summary.failures.push(format!("NON-MONOTONE outcomes in bisection round {rounds}"));
        }
        let new_hi = if first < m { probes[first] } else { hi };
        let new_lo = if first > 0 { probes[first - 1] } else { lo };
        lo = new_lo;
        hi = new_hi;
    }
    if let Some(msg) = &aborted {
        ex.summary.failures.push(format!("bisection aborted: {msg}; partial bracket [{lo}, {hi}]"));
    }
    ex.summary.bisection = Some(BisectionReport {
        bracket: [lo, hi],
        width: hi - lo,
        c_star: 0.5 * (lo + hi),
        rounds,
        converged: aborted.is_none() && hi - lo <= spec.tolerance,
        aborted,
    });
    Ok(())
}

fn instability(cfg: &ExperimentConfig, ex: &mut Experiment) -> Result<()> {
    let grid = cfg.grid.build::<f64>()?;
    let init = initial_state(cfg, &grid)?;
    let spec = &cfg.instability;
    let lambda = cfg.params.lambda().to_vec();
    let gs = ground_state_solve(&cfg.params, &lambda, &init, &spec.ground_state)?;
    if !gs.accepted() {
        ex.summary.failures.push(format!("ground state residual {} above the acceptance level", gs.residual));
    }
    let stationarity = verify_stationarity(&gs, &cfg.params)?;
    let profile = scaling_profile(&gs, &cfg.params, &spec.profile_k)?;
    let above: Vec<&ScalingPoint<f64>> = profile.iter().filter(|p| p.k >= 1.0).collect();
    let decreasing_above_one = above.windows(2).all(|w| w[1].value < w[0].value);
    ex.summary.instability = Some(InstabilityReport {
        lambda,
        residual: gs.residual,
        iterations: gs.iterations,
        accepted: gs.accepted(),
        stationarity,
        profile,
        decreasing_above_one,
    });
    let est = theorem_estimate(cfg, ex)?;
    let runs = scaled_runs(cfg, &gs.w, est.as_ref(), "k", &spec.k)?;
    push_runs(ex, runs);
    Ok(())
}

fn threshold_only(cfg: &ExperimentConfig, ex: &mut Experiment) -> Result<()> {
    let kind = match (cfg.threshold.kind, cfg.theorem) {
        (Some(k), _) => k,
        (None, Some(th)) => th.threshold_kind(cfg.grid.manifold())?,
        (None, None) => unreachable!("validated"),
    };
    let est = estimate(cfg, kind)?;
    if !est.converged {
        ex.summary.warnings.push("threshold refinement did not converge".into());
    }
    ex.summary.threshold = Some((&est).into());
    Ok(())
}

/// Uniform deviate in `[0, 1)`.
fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

fn check(name: impl Into<String>, value: f64, bound: f64, pass: bool) -> IdentityCheck {
    IdentityCheck { name: name.into(), value, bound, pass }
}

fn identity_suite(cfg: &ExperimentConfig, ex: &mut Experiment) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();

    let lams: Vec<f64> = (1..=99).map(|k| k as f64 / 100.0).collect();
    let mut max_h = f64::NEG_INFINITY;
    for (n, p) in [(1usize, 7.0), (2, 4.0), (3, 3.0)] {
        for &l in &lams {
            max_h = max_h.max(h_lambda(l, n, p)?);
        }
    }
    out.push(check("h(lambda) < 0 above the critical power", max_h, 0.0, max_h < 0.0));
    let mut max_crit = 0.0f64;
    for n in 1..=3usize {
        for &l in &lams {
            max_crit = max_crit.max(h_lambda(l, n, 1.0 + 4.0 / n as f64)?.abs());
        }
    }
    out.push(check("|h(lambda)| at the critical power", max_crit, 1e-12, max_crit <= 1e-12));

    for n in [2usize, 3] {
        let g = Arc::new(Grid::Radial(RadialGrid::<f64>::new(n, 400, 8.0)?));
        let rg = g.as_radial().expect("radial");
        let fields: Vec<Vec<Complex>> = (0..8)
            .map(|_| {
                let (a, w, b) = (0.2 + 2.0 * uniform(&mut rng), 0.3 + 3.0 * uniform(&mut rng), uniform(&mut rng));
                rg.nodes().iter().map(|&r| Complex::new(a * (-(r / w).powi(2)).exp(), b * r * (-r).exp())).collect()
            })
            .collect();
        let sq = check_weight_inequalities(&virial_weights(&g, WeightKind::HyperbolicSquare)?, rg, &fields)?;
        let v = sq.hessian_violation.max(sq.laplacian_violation);
        out.push(check(format!("r^2 weight inequalities on H^{n}"), v, 0.0, v <= 0.0 && sq.bilaplacian_min > 0.0));
        let st = check_weight_inequalities(&virial_weights(&g, WeightKind::HyperbolicStar)?, rg, &fields)?;
        let v = st.hessian_violation.max(st.eigenvalue_violation);
        out.push(check(format!("rho* weight inequalities on H^{n}"), v, 1e-12, v <= 1e-12));
        out.push(check(format!("|Lap rho* - 1| on H^{n}"), st.laplacian_violation, 1e-8, st.laplacian_violation <= 1e-8));
    }

    let sw = check_sphere_weights(64)?;
    let v = sw.laplacian_error.max(sw.max_gradient - 1.0).max(sw.max_hessian - 1.0).max(sw.max_angular - 1.0);
    out.push(check("sphere cutoff weight identities", v, 1e-8, sw.holds(1e-8)));

    let lmax = cfg.verify.lmax;
    let count = cfg.verify.random_fields;
    let mut worst = 0.0f64;
    for _ in 0..count {
        worst = worst.max(check_poincare_antisymmetric(&random_field::<f64, _>(lmax, 0.5, true, &mut rng))?);
    }
    let bound = 0.5f64.sqrt() + 1e-12;
    out.push(check(format!("Poincare ratio on {count} odd fields"), worst, bound, worst <= bound));
    let sg = SphereGrid::<f64>::new(lmax, 5 * lmax)?;
    for q in [4.0, 8.0] {
        let mut min_rel = f64::INFINITY;
        for _ in 0..count {
            let s = check_sobolev_sphere(&sg, &random_field::<f64, _>(lmax, 1.0, false, &mut rng), q)?;
            min_rel = min_rel.min(s.slack / (s.gradient_term + s.mass_term));
        }
        let min_rel = if count == 0 { 0.0 } else { min_rel };
        out.push(check(format!("Sobolev slack on {count} fields, q = {q}"), min_rel, 0.0, min_rel >= -1e-12));
    }

    let g = cnls_core::GridSpec::EuclideanBox { n: 1, points: 1024, half_length: 40.0 }.build::<f64>()?;
    let params = Params::scalar(1, 7.0)?;
    let s0 = build_state(&g, &[Profile::gaussian(1e-6, 1.0)], &[0.0])?;
    let free_cfg = cnls_core::SolverConfig { t_max: 2.0, sample_interval: 0.05, adaptive: false, ..Default::default() };
    let rec = spectral::evolve(&s0, &params, &free_cfg, &default_weight(&g)?)?;
    let c = check_virial_consistency(&rec, &params)?;
    let v = c.max_first_error.max(c.max_second_error);
    out.push(check("virial identities on free flow", v, 1e-6, v <= 1e-6));

    for c in out.iter().filter(|c| !c.pass) {
        ex.summary.failures.push(format!("identity check failed: {} ({} vs {})", c.name, c.value, c.bound));
    }
    ex.summary.identities = Some(out);
    Ok(())
}
