//! One pass/fail line per acceptance criterion, tolerances pinned below.

mod common;

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use cnls_core::functionals::h_lambda;
use cnls_core::grid::{Grid, RadialGrid, SphereGrid};
use cnls_core::hyperbolic::{default_weight, evolve_radial, rho_star_table, virial_weights, WeightKind};
use cnls_core::solver::RunRecord;
use cnls_core::spectral::evolve;
use cnls_core::sphere::{check_poincare_antisymmetric, check_sobolev_sphere, check_sphere_weights, random_field};
use cnls_core::state::{build_state, Profile};
use cnls_core::variational::*;
use cnls_core::virial::*;
use cnls_core::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MASS_TOL: f64 = 1e-10;
const ENERGY_TOL: f64 = 1e-6;
const ORDER_RANGE: (f64, f64) = (3.3, 5.0);
const C1_RUNTIME_S: f64 = 120.0;
const SCALAR_SOLITON_TOL: f64 = 1e-6;
const COUPLED_SOLITON_TOL: f64 = 1e-5;
const VIRIAL_TOL: f64 = 1e-3;
/// Samples with `K < 5 K(0)` form the approach window of a collapse run.
const APPROACH_FACTOR: f64 = 5.0;
const H_ZERO_TOL: f64 = 1e-12;
const FAMILY_AGREEMENT: f64 = 1e-2;
const DICHOTOMY_T_MAX: f64 = 50.0;
const K_BOUND_SLACK: f64 = 0.05;
const GS_RESIDUAL: f64 = 1e-8;
const GS_IDENTITY_TOL: f64 = 1e-6;
const STAR_LAPLACIAN_TOL: f64 = 1e-8;
const STAR_SLOPE_TOL: f64 = 1e-10;
const POINCARE_CAP: f64 = 4.0;
const SPHERE_WEIGHT_TOL: f64 = 1e-8;

/// Result of one criterion plus the sign histories it contributes to the last one.
struct Outcome {
    pass: bool,
    detail: String,
    signs: Vec<(String, bool)>,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail, signs: Vec::new() }
    }
}

fn line(points: usize, half_length: f64) -> Arc<Grid<f64>> {
    GridSpec::EuclideanBox { n: 1, points, half_length }.build().unwrap()
}

fn pair(p: f64, beta: f64) -> Params {
    params::SystemParams::new(1, p, vec![1.0, 1.0], vec![vec![0.0, beta], vec![beta, 0.0]], vec![1.0, 1.0], 2.0).unwrap()
}

fn fixed(dt: f64, t_max: f64, sample_interval: f64) -> SolverConfig {
    SolverConfig { dt0: dt, t_max, adaptive: false, sample_interval, ..Default::default() }
}

fn families() -> [Family<f64>; 2] {
    [Family::Gaussian, Family::Sech { power: 1.0 }]
}

fn window(rec: &RunRecord<f64>) -> RunRecord<f64> {
    let k0 = rec.samples[0].report.kinetic;
    let mut out = rec.clone();
    out.samples.retain(|s| s.report.kinetic < APPROACH_FACTOR * k0);
    out
}

/// Sign history of the verdict's functional for a resolved run whose hypotheses held.
fn persistence(label: &str, verdict: &TheoremVerdict<f64>, rec: &RunRecord<f64>, params: &Params) -> Option<(String, bool)> {
    let resolved = rec.classification.is_global() || rec.classification.is_blowup();
    if verdict.predicted == Prediction::Inapplicable || !resolved {
        return None;
    }
    let f = verdict.theorem.sign_functional()?;
    let sp = check_sign_persistence(rec, params, f).unwrap();
    Some((format!("{label} {f:?}"), sp.persists()))
}

fn c1_conservation() -> Outcome {
    let start = Instant::now();
    let g = line(4096, 20.0);
    let params = pair(3.0, 0.5);
    let s0 = build_state(&g, &[Profile::gaussian(1.2, 1.0), Profile::gaussian(0.8, 1.5)], &[0.0, 0.7]).unwrap();
    let w = default_weight(&g).unwrap();
    let run = |dt: f64| evolve(&s0, &params, &fixed(dt, 10.0, 0.1), &w).unwrap();
    let (a, b) = (run(1e-3), run(5e-4));
    let ratio = a.energy_drift / b.energy_drift;
    let secs = start.elapsed().as_secs_f64();
    let pass = a.classification.is_global()
        && a.mass_drift <= MASS_TOL
        && a.energy_drift <= ENERGY_TOL
        && (ORDER_RANGE.0..=ORDER_RANGE.1).contains(&ratio)
        && secs <= C1_RUNTIME_S;
    Outcome::new(pass, format!("dM/M {:.1e}, dE/E {:.1e}, drift ratio {ratio:.3}, {secs:.1} s", a.mass_drift, a.energy_drift))
}

fn c2_solitons() -> Outcome {
    let g = line(1024, 20.0);
    let e = g.as_euclidean().unwrap();
    let w = default_weight(&g).unwrap();
    let l2 = |c: &[Complex], amp: f64| -> f64 {
        (c.iter().zip(e.axis()).map(|(z, &x)| (z.norm() - amp / x.cosh()).powi(2)).sum::<f64>() * e.dx()).sqrt()
    };
    let scalar = evolve(&build_state(&g, &[Profile::sech(2f64.sqrt(), 1.0)], &[0.0]).unwrap(), &Params::scalar(1, 3.0).unwrap(), &fixed(1e-3, 10.0, 0.5), &w).unwrap();
    let e1 = l2(scalar.final_state.component(0), 2f64.sqrt());
    let a = (2.0f64 / 1.5).sqrt();
    let s0 = build_state(&g, &[Profile::sech(a, 1.0), Profile::sech(a, 1.0)], &[0.0, 0.0]).unwrap();
    let coupled = evolve(&s0, &pair(3.0, 0.5), &fixed(1e-3, 10.0, 0.5), &w).unwrap();
    let e2 = l2(coupled.final_state.component(0), a).max(l2(coupled.final_state.component(1), a));
    Outcome::new(e1 <= SCALAR_SOLITON_TOL && e2 <= COUPLED_SOLITON_TOL, format!("scalar L2 error {e1:.1e}, coupled {e2:.1e}"))
}

fn c3_virial() -> Outcome {
    let mut worst = Vec::new();
    let mut pass = true;
    // free flow (vanishing amplitude)
    let g = line(1024, 40.0);
    let params = Params::scalar(1, 7.0).unwrap();
    let free = evolve(&build_state(&g, &[Profile::gaussian(1e-6, 1.0)], &[0.0]).unwrap(), &params, &fixed(1e-3, 2.0, 0.05), &default_weight(&g).unwrap()).unwrap();
    let c = check_virial_consistency(&free, &params).unwrap();
    pass &= c.relation == Relation::Equality && c.max_second_error <= VIRIAL_TOL;
    worst.push(("free", c.max_second_error));
    // cubic soliton
    let g = line(1024, 20.0);
    let params = Params::scalar(1, 3.0).unwrap();
    let sol = evolve(&build_state(&g, &[Profile::sech(2f64.sqrt(), 1.0)], &[0.0]).unwrap(), &params, &fixed(1e-3, 2.0, 0.02), &default_weight(&g).unwrap()).unwrap();
    let c = check_virial_consistency(&sol, &params).unwrap();
    pass &= c.max_second_error <= VIRIAL_TOL;
    worst.push(("soliton", c.max_second_error));
    // approach to collapse
    let g = line(4096, 8.0);
    let params = Params::scalar(1, 5.0).unwrap();
    let rec = evolve(&build_state(&g, &[Profile::gaussian(3.0, 1.0)], &[0.0]).unwrap(), &params, &common::collapse_config(2.0, 1e-3), &default_weight(&g).unwrap()).unwrap();
    let c = check_virial_consistency(&window(&rec), &params).unwrap();
    pass &= rec.classification.is_blowup() && c.max_second_error <= VIRIAL_TOL;
    worst.push(("collapse", c.max_second_error));
    let detail = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect::<Vec<_>>().join(", ");
    Outcome::new(pass, format!("max relative |dJ'/dt - 16Q|: {detail}"))
}

fn c4_h_sign() -> Outcome {
    let grid: Vec<f64> = (1..=99).map(|k| k as f64 / 100.0).collect();
    let mut max_h = f64::NEG_INFINITY;
    for (n, p) in [(1usize, 7.0), (2, 4.0), (3, 3.0)] {
        for &l in &grid {
            max_h = max_h.max(h_lambda(l, n, p).unwrap());
        }
    }
    let mut max_crit = 0.0f64;
    for n in 1..=3usize {
        for &l in &grid {
            max_crit = max_crit.max(h_lambda(l, n, 1.0 + 4.0 / n as f64).unwrap().abs());
        }
    }
    Outcome::new(max_h < 0.0 && max_crit <= H_ZERO_TOL, format!("max h {max_h:.3e} (supercritical), max |h| {max_crit:.1e} (critical)"))
}

fn c5_thresholds() -> Outcome {
    let g = line(1024, 20.0);
    let cfg = OptimizerConfig::default();
    let mut parts = Vec::new();
    let mut pass = true;
    for (kind, p) in [(ThresholdKind::DI, 5.0), (ThresholdKind::DI, 7.0), (ThresholdKind::DII, 7.0)] {
        let e = estimate_threshold(kind, &Params::scalar(1, p).unwrap(), &g, &families(), &cfg).unwrap();
        let vals: Vec<f64> = e.per_family.iter().map(|(_, v)| *v).collect();
        let spread = (vals.iter().copied().fold(f64::MIN, f64::max) - vals.iter().copied().fold(f64::MAX, f64::min)) / e.value;
        pass &= e.value > 0.0 && vals.len() == 2 && spread <= FAMILY_AGREEMENT;
        parts.push(format!("{kind:?}(p={p}) {:.7} spread {spread:.1e}", e.value));
    }
    Outcome::new(pass, parts.join(", "))
}

fn c6_dichotomy() -> Outcome {
    let params = Params::scalar(1, 7.0).unwrap();
    let est = estimate_threshold(ThresholdKind::DII, &params, &line(1024, 20.0), &families(), &OptimizerConfig::default()).unwrap();
    let d = est.value;
    let k_bound = 3.0 * d * (1.0 + K_BOUND_SLACK);
    let g = line(4096, 8.0);
    let w = default_weight(&g).unwrap();
    let data = [(0.5, 1.0), (0.9, 1.0), (1.1, 0.5), (1.5, 1.0), (2.0, 1.0), (1.6, 2.0)];
    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = data
            .iter()
            .map(|&(a, wd)| {
                let (g, w, params, est) = (&g, &w, &params, &est);
                s.spawn(move || {
                    let s0 = build_state(g, &[Profile::gaussian(a, wd)], &[0.0]).unwrap();
                    let v = classify_initial_data(&s0, params, std::slice::from_ref(est), Theorem::T2).unwrap();
                    let rec = evolve(&s0, params, &common::collapse_config(DICHOTOMY_T_MAX, 0.1), w).unwrap();
                    (a, wd, v, rec)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let (mut global, mut blowup, mut discordant, mut max_k) = (0, 0, 0, 0.0f64);
    let mut signs = Vec::new();
    for (a, wd, v, rec) in &results {
        if !v.is_certified() {
            continue;
        }
        let ok = match v.predicted {
            Prediction::Global => {
                global += 1;
                max_k = max_k.max(rec.max_kinetic);
                rec.classification.is_global() && rec.max_kinetic <= k_bound
            }
            Prediction::Blowup => {
                blowup += 1;
                rec.classification.is_blowup()
            }
            Prediction::Inapplicable => true,
        };
        discordant += usize::from(!ok);
        signs.extend(persistence(&format!("box ({a}, {wd})"), v, rec, &params));
    }
    let pass = discordant == 0 && global >= 3 && blowup >= 3;
    let mut out = Outcome::new(
        pass,
        format!("d_II {d:.7}; {global} certified global (max K {max_k:.3} <= {k_bound:.3}), {blowup} certified blow-up, {discordant} discordant"),
    );
    out.signs = signs;
    out
}

fn c7_instability() -> Outcome {
    let params = Params::scalar(1, 7.0).unwrap();
    let g = line(8192, 20.0);
    let init = build_state(&g, &[Profile::gaussian(1.0, 1.0)], &[0.0]).unwrap();
    let gs = ground_state_solve(&params, &[1.0], &init, &GroundStateConfig::default()).unwrap();
    let st = verify_stationarity(&gs, &params).unwrap();
    let stationary = gs.residual <= GS_RESIDUAL && st.s_rel <= GS_IDENTITY_TOL && st.pohozaev_rel <= GS_IDENTITY_TOL && st.q_rel <= GS_IDENTITY_TOL;
    let ks: Vec<f64> = (0..=20).map(|i| 1.0 + i as f64 / 20.0).collect();
    let prof = scaling_profile(&gs, &params, &ks).unwrap();
    let decreasing = prof.windows(2).all(|w| w[1].value < w[0].value);
    let cfg = OptimizerConfig { mass: MassNorm::Lambda, ..Default::default() };
    let est = estimate_threshold(ThresholdKind::DII, &params, &line(1024, 20.0), &families(), &cfg).unwrap();
    let s0 = gs.w.scaled(1.05);
    let v = classify_initial_data(&s0, &params, std::slice::from_ref(&est), Theorem::T2).unwrap();
    let rec = evolve(&s0, &params, &common::collapse_config(5.0, 1e-3), &default_weight(&g).unwrap()).unwrap();
    let t_star = match rec.classification {
        Classification::Blowup { t_star } => t_star,
        _ => f64::NAN,
    };
    let pass = stationary && decreasing && rec.classification.is_blowup();
    let mut out = Outcome::new(
        pass,
        format!(
            "residual {:.1e}, |S| {:.1e}, |Poh| {:.1e}, |Q| {:.1e} (relative); 1.05 w: {:?} {} at t* = {t_star:.4}; profile decreasing on (1, 2]: {decreasing}",
            gs.residual, st.s_rel, st.pohozaev_rel, st.q_rel, v.predicted, if v.is_certified() { "certified" } else { "heuristic" }
        ),
    );
    out.signs.extend(persistence("ground state x1.05", &v, &rec, &params));
    out
}

fn c8_hyperbolic() -> Outcome {
    let mut lap_err = 0.0f64;
    for n in [2usize, 3] {
        let g = RadialGrid::<f64>::new(n, 1000, 10.0).unwrap();
        let faces: Vec<f64> = (1..=g.len()).map(|k| k as f64 * g.spacing()).collect();
        let (_, d) = rho_star_table(n, &faces);
        let (area, vol) = (g.face_areas(), g.cell_volumes());
        for c in 0..g.len() {
            let inner = if c == 0 { 0.0 } else { area[c] * d[c - 1] };
            lap_err = lap_err.max(((area[c + 1] * d[c] - inner) / vol[c] - 1.0).abs());
        }
    }
    let radii: Vec<f64> = (1..=200).map(|k| k as f64 * 0.05).collect();
    let (_, d2) = rho_star_table(2, &radii);
    let slope_err = radii.iter().zip(&d2).map(|(&r, &d)| (d - (r / 2.0).tanh()).abs()).fold(0.0, f64::max);

    let params = Params::scalar(3, 3.0).unwrap();
    let est = estimate_threshold(
        ThresholdKind::DHnII,
        &params,
        &GridSpec::HyperbolicRadial { n: 3, points: 800, radius: 10.0 }.build().unwrap(),
        &families(),
        &OptimizerConfig::default(),
    )
    .unwrap();
    let mut bound_err = 0.0f64;
    let mut signs = Vec::new();
    let mut runs_ok = true;
    let wide = GridSpec::HyperbolicRadial { n: 3, points: 4000, radius: 16.0 }.build::<f64>().unwrap();
    let s0 = build_state(&wide, &[Profile::gaussian(0.5, 1.0)], &[0.0]).unwrap();
    let v = classify_initial_data(&s0, &params, std::slice::from_ref(&est), Theorem::T5Radial).unwrap();
    for kind in [WeightKind::HyperbolicSquare, WeightKind::HyperbolicStar] {
        let rec = evolve_radial(&s0, &params, &common::collapse_config(1.5, 0.01), &virial_weights(&wide, kind).unwrap()).unwrap();
        let c = check_virial_consistency(&rec, &params).unwrap();
        bound_err = bound_err.max(c.max_second_error);
        runs_ok &= rec.classification.is_global() && c.relation == Relation::UpperBound;
        if kind == WeightKind::HyperbolicSquare {
            runs_ok &= v.predicted == Prediction::Global;
            signs.extend(persistence("H^3 (0.5, 1)", &v, &rec, &params));
        }
    }
    let tight = GridSpec::HyperbolicRadial { n: 3, points: 8000, radius: 8.0 }.build::<f64>().unwrap();
    let s0 = build_state(&tight, &[Profile::gaussian(8.0, 0.4)], &[0.0]).unwrap();
    let v = classify_initial_data(&s0, &params, std::slice::from_ref(&est), Theorem::T5Radial).unwrap();
    let rec = evolve_radial(&s0, &params, &common::radial_collapse_config(1.0, 1e-4), &default_weight(&tight).unwrap()).unwrap();
    let c = check_virial_consistency(&window(&rec), &params).unwrap();
    bound_err = bound_err.max(c.max_second_error);
    runs_ok &= rec.classification.is_blowup() && v.predicted == Prediction::Blowup;
    signs.extend(persistence("H^3 (8, 0.4)", &v, &rec, &params));

    let pass = lap_err <= STAR_LAPLACIAN_TOL && slope_err <= STAR_SLOPE_TOL && bound_err <= VIRIAL_TOL && runs_ok;
    let mut out = Outcome::new(
        pass,
        format!("|Lap rho* - 1| {lap_err:.1e}, |rho*' - tanh(r/2)| {slope_err:.1e}, max excess of dJ'/dt over the bound {bound_err:.1e}, runs as predicted: {runs_ok}"),
    );
    out.signs = signs;
    out
}

fn c9_sphere() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let poincare = (0..100)
        .map(|_| check_poincare_antisymmetric(&random_field::<f64, _>(16, 0.5, true, &mut rng)).unwrap())
        .fold(0.0, f64::max);
    let lmax = 12;
    let sg = SphereGrid::<f64>::new(lmax, 60).unwrap();
    let mut min_slack = f64::INFINITY;
    for q in [4.0, 8.0] {
        for _ in 0..100 {
            let f = random_field::<f64, _>(lmax, 1.0, false, &mut rng);
            let s = check_sobolev_sphere(&sg, &f, q).unwrap();
            min_slack = min_slack.min(s.slack / (s.gradient_term + s.mass_term));
        }
    }
    let weights = check_sphere_weights(64).unwrap();
    let g = GridSpec::Sphere { lmax: 16, n_lat: 64 }.build::<f64>().unwrap();
    let d = estimate_threshold(ThresholdKind::DS2, &Params::scalar(2, 6.0).unwrap(), &g, &families(), &OptimizerConfig::default()).unwrap();
    let pass = poincare <= POINCARE_CAP && min_slack >= 0.0 && weights.holds(SPHERE_WEIGHT_TOL) && d.value > 0.0;
    Outcome::new(
        pass,
        format!(
            "max Poincare ratio {poincare:.4}, min relative Sobolev slack {min_slack:.2e}, weight identities within {:.1e}, d_S2(p=6) {:.5}",
            weights.laplacian_error.max(weights.max_gradient - 1.0).max(weights.max_hessian - 1.0),
            d.value
        ),
    )
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("conservation", c1_conservation),
        ("soliton oracle", c2_solitons),
        ("virial exactness", c3_virial),
        ("h(lambda) sign", c4_h_sign),
        ("threshold positivity", c5_thresholds),
        ("dichotomy", c6_dichotomy),
        ("ground-state instability", c7_instability),
        ("hyperbolic identities", c8_hyperbolic),
        ("sphere inequalities", c9_sphere),
    ];
    let outcomes: Vec<Outcome> = std::thread::scope(|s| {
        let handles: Vec<_> = criteria.iter().map(|(_, f)| s.spawn(f)).collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let signs: Vec<&(String, bool)> = outcomes.iter().flat_map(|o| &o.signs).collect();
    let broken: Vec<&str> = signs.iter().filter(|(_, ok)| !ok).map(|(l, _)| l.as_str()).collect();
    let c10 = Outcome::new(
        broken.is_empty() && !signs.is_empty(),
        format!("{} resolved runs with valid hypotheses, sign changes in {:?}", signs.len(), broken),
    );

    let mut out = std::io::stdout().lock();
    writeln!(out).unwrap();
    let mut failed = Vec::new();
    let names = criteria.iter().map(|(n, _)| *n).chain(["invariant-set persistence"]);
    for (i, (name, o)) in names.zip(outcomes.iter().chain([&c10])).enumerate() {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        writeln!(out, "criterion {:>2} [{tag}] {name}: {}", i + 1, o.detail).unwrap();
        if !o.pass {
            failed.push(i + 1);
        }
    }
    out.flush().unwrap();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
