mod common;

use cnls_core::functionals::compute_functionals;
use cnls_core::params::SystemParams;
use cnls_core::state::{build_state, Profile};
use cnls_core::variational::*;
use cnls_core::*;
use common::{golden_min, rel, Soliton};
use proptest::prelude::*;
use std::sync::Arc;

fn line(points: usize, half: f64) -> Arc<grid::Grid<f64>> {
    GridSpec::EuclideanBox { n: 1, points, half_length: half }.build().unwrap()
}

fn pair(p: f64, beta: f64) -> Params {
    SystemParams::new(1, p, vec![1.0, 1.0], vec![vec![0.0, beta], vec![beta, 0.0]], vec![1.0, 1.0], 2.0).unwrap()
}

fn families() -> [Family<f64>; 2] {
    [Family::Gaussian, Family::Sech { power: 1.0 }]
}

/// Sharp `K`-threshold on the `G = 0` set from the optimal interpolation constant.
fn d_first_oracle(p: f64) -> f64 {
    let (m2, k, lp) = Soliton::new(p, 1.0).integrals();
    let c = lp / (k.powf((p - 1.0) / 4.0) * m2.sqrt().powf(p + 1.0 - (p - 1.0) / 2.0));
    ((p + 1.0) / c).powf(4.0 / (p - 1.0))
}

/// `min M^2 + E` over `Q = 0` along the soliton orbit, `p = 7`, `n = 1`.
fn d_second_oracle() -> f64 {
    let (p, c) = (7.0, 3.0 / 16.0);
    let f = |log_lam: f64| {
        let (m2, k, lp) = Soliton::new(p, log_lam.exp()).integrals();
        let amp2 = (k / (c * lp)).powf(2.0 / (p - 1.0));
        // on Q = 0, E = K - P/8 = K/3
        amp2 * (m2 + k / 3.0)
    };
    golden_min(-4.0, 4.0, f).1
}

#[test]
fn first_threshold_matches_interpolation_constant() {
    let g = line(1024, 20.0);
    for p in [5.0, 7.0] {
        let e = estimate_threshold(ThresholdKind::DI, &Params::scalar(1, p).unwrap(), &g, &families(), &OptimizerConfig::default()).unwrap();
        let oracle = d_first_oracle(p);
        assert!(rel(e.value, oracle) < 1e-8, "p={p}: {} vs {oracle}", e.value);
        assert!(e.converged);
        assert!(e.constraint_residual < 1e-10);
    }
}

#[test]
fn second_threshold_matches_orbit_minimum() {
    let g = line(1024, 20.0);
    let e = estimate_threshold(ThresholdKind::DII, &Params::scalar(1, 7.0).unwrap(), &g, &families(), &OptimizerConfig::default()).unwrap();
    let oracle = d_second_oracle();
    assert!(rel(e.value, oracle) < 1e-8, "{} vs {oracle}", e.value);
    // value is the smallest of the per-family refinements
    let best = e.per_family.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
    assert_eq!(best, e.value);
    assert!(e.value <= e.family_value + 1e-12);
}

#[test]
fn lambda_mass_threshold_is_the_ground_state_action() {
    let g = line(1024, 20.0);
    let cfg = OptimizerConfig { mass: MassNorm::Lambda, ..Default::default() };
    let e = estimate_threshold(ThresholdKind::DII, &Params::scalar(1, 7.0).unwrap(), &g, &families(), &cfg).unwrap();
    assert_eq!(e.mass, MassNorm::Lambda);
    let (m2, k, lp) = Soliton::new(7.0, 1.0).integrals();
    let action = m2 / 2.0 + k - lp / 8.0;
    assert!(rel(e.value, action) < 1e-8, "{} vs {action}", e.value);
}

#[test]
fn strongly_coupled_minimizer_is_symmetric() {
    let g = line(1024, 20.0);
    let scalar = estimate_threshold(ThresholdKind::DII, &Params::scalar(1, 7.0).unwrap(), &g, &families(), &OptimizerConfig::default()).unwrap();
    let params = pair(7.0, 10.0);
    let e = estimate_threshold(ThresholdKind::DII, &params, &g, &families(), &OptimizerConfig::default()).unwrap();
    // equal components see the scalar problem with P scaled by 1 + beta
    let oracle = 2.0 * (1.0 + 10.0f64).powf(-1.0 / 3.0) * scalar.value;
    assert!(rel(e.value, oracle) < 1e-8, "{} vs {oracle}", e.value);
    let mass = |j: usize| e.minimizer.component(j).iter().map(|z| z.norm_sqr()).sum::<f64>();
    assert!(rel(mass(0), mass(1)) < 1e-6);
}

#[test]
fn weakly_coupled_minimizer_is_semitrivial() {
    let g = line(1024, 20.0);
    let scalar = estimate_threshold(ThresholdKind::DII, &Params::scalar(1, 7.0).unwrap(), &g, &families(), &OptimizerConfig::default()).unwrap();
    let e = estimate_threshold(ThresholdKind::DII, &pair(7.0, 0.5), &g, &families(), &OptimizerConfig::default()).unwrap();
    assert!(rel(e.value, scalar.value) < 1e-8);
    let mass = |j: usize| e.minimizer.component(j).iter().map(|z| z.norm_sqr()).sum::<f64>();
    assert!(mass(0).min(mass(1)) < 1e-6 * mass(0).max(mass(1)));
}

#[test]
fn threshold_is_below_every_sampled_candidate() {
    let g = GridSpec::HyperbolicRadial { n: 3, points: 800, radius: 10.0 }.build::<f64>().unwrap();
    let params = Params::scalar(3, 3.0).unwrap();
    let e = estimate_threshold(ThresholdKind::DHnII, &params, &g, &families(), &OptimizerConfig::default()).unwrap();
    for w in [0.3, 0.6, 1.0, 1.5, 2.5] {
        let u = build_state(&g, &[Profile::gaussian(1.0, w)], &[0.0]).unwrap();
        let k = scale_to_constraint(&u, &params, Constraint::Q).unwrap();
        let r = compute_functionals(&u.scaled(k), &params).unwrap();
        assert!(ThresholdKind::DHnII.objective(&r, &params) >= e.value, "w={w}");
    }
    // both families refine to the same value
    let vals: Vec<f64> = e.per_family.iter().map(|(_, v)| *v).collect();
    assert_eq!(vals.len(), 2);
    assert!(rel(vals[0], vals[1]) < 1e-3, "{vals:?}");
}

#[test]
fn sphere_threshold_is_positive() {
    let g = GridSpec::Sphere { lmax: 16, n_lat: 64 }.build::<f64>().unwrap();
    let e = estimate_threshold(ThresholdKind::DS2, &Params::scalar(2, 6.0).unwrap(), &g, &families(), &OptimizerConfig::default()).unwrap();
    assert!(e.value > 0.0 && e.value.is_finite());
    assert_eq!(cnls_core::sphere::parity_defect(16, e.minimizer.component(0)), 0.0);
}

#[test]
fn out_of_range_requests_are_rejected() {
    let g = line(256, 20.0);
    let fams = families();
    let cfg = OptimizerConfig::default();
    assert!(matches!(estimate_threshold(ThresholdKind::DII, &Params::scalar(1, 5.0).unwrap(), &g, &fams, &cfg), Err(Error::Domain(_))));
    assert!(matches!(estimate_threshold(ThresholdKind::DI, &Params::scalar(1, 3.0).unwrap(), &g, &fams, &cfg), Err(Error::Domain(_))));
    assert!(matches!(estimate_threshold(ThresholdKind::DHnII, &Params::scalar(1, 7.0).unwrap(), &g, &fams, &cfg), Err(Error::Contract(_))));
    assert!(estimate_threshold(ThresholdKind::DI, &Params::scalar(1, 7.0).unwrap(), &g, &[], &cfg).is_err());
    let sg = GridSpec::Sphere { lmax: 8, n_lat: 32 }.build::<f64>().unwrap();
    assert!(matches!(estimate_threshold(ThresholdKind::DS2, &Params::scalar(2, 5.0).unwrap(), &sg, &fams, &cfg), Err(Error::Domain(_))));
}

#[test]
fn scalar_ground_state_is_the_soliton() {
    let g = line(1024, 20.0);
    let params = Params::scalar(1, 7.0).unwrap();
    let init = build_state(&g, &[Profile::gaussian(1.0, 1.0)], &[0.0]).unwrap();
    let gs = ground_state_solve(&params, &[1.0], &init, &GroundStateConfig::default()).unwrap();
    assert!(gs.accepted());
    let sol = Soliton::new(7.0, 1.0);
    let x = g.as_euclidean().unwrap().axis().to_vec();
    let err = gs.w.component(0).iter().zip(&x).map(|(z, &x)| (z.re - sol.value(x)).abs()).fold(0.0, f64::max);
    assert!(err < 1e-8, "max error {err}");
    let st = verify_stationarity(&gs, &params).unwrap();
    assert!(st.s_rel < 1e-9 && st.pohozaev_rel < 1e-9, "{st:?}");
    assert!((st.q - st.q_from_identities).abs() < 1e-10 * st.scale);
}

#[test]
fn coupled_ground_state_has_equal_components() {
    let g = line(1024, 20.0);
    for (p, beta) in [(3.0, 0.5), (7.0, 2.0)] {
        let params = pair(p, beta);
        let init = build_state(&g, &[Profile::gaussian(1.0, 1.0), Profile::gaussian(0.8, 1.2)], &[0.0, 0.0]).unwrap();
        let gs = ground_state_solve(&params, &[1.0, 1.0], &init, &GroundStateConfig::default()).unwrap();
        assert!(gs.accepted(), "p={p}: {}", gs.residual);
        // N_j = (1 + beta) w^(p-1) on the diagonal
        let a = (1.0 + beta).powf(-1.0 / (p - 1.0));
        let sol = Soliton::new(p, 1.0);
        let x = g.as_euclidean().unwrap().axis();
        for j in 0..2 {
            let err = gs.w.component(j).iter().zip(x).map(|(z, &x)| (z.re - a * sol.value(x)).abs()).fold(0.0, f64::max);
            assert!(err < 1e-8, "p={p} j={j}: {err}");
        }
    }
}

#[test]
fn ground_state_input_errors() {
    let g = line(256, 20.0);
    let params = Params::scalar(1, 7.0).unwrap();
    let init = build_state(&g, &[Profile::gaussian(1.0, 1.0)], &[0.0]).unwrap();
    let cfg = GroundStateConfig::default();
    assert!(ground_state_solve(&params, &[-1.0], &init, &cfg).is_err());
    assert!(ground_state_solve(&params, &[1.0, 1.0], &init, &cfg).is_err());
    assert!(ground_state_solve(&Params::scalar(1, 1.0).unwrap(), &[1.0], &init, &cfg).is_err());
    let sg = GridSpec::Sphere { lmax: 4, n_lat: 16 }.build::<f64>().unwrap();
    let s = build_state(&sg, &[Profile::gaussian(1.0, 1.0)], &[0.0]);
    if let Ok(s) = s {
        assert!(ground_state_solve(&Params::scalar(2, 7.0).unwrap(), &[1.0], &s, &cfg).is_err());
    }
}

#[test]
fn scaling_profile_peaks_at_the_ground_state() {
    let g = line(1024, 20.0);
    let params = Params::scalar(1, 7.0).unwrap();
    let init = build_state(&g, &[Profile::gaussian(1.0, 1.0)], &[0.0]).unwrap();
    let gs = ground_state_solve(&params, &[1.0], &init, &GroundStateConfig::default()).unwrap();
    let ks: Vec<f64> = (10..=40).map(|i| i as f64 / 20.0).collect();
    let prof = scaling_profile(&gs, &params, &ks).unwrap();
    let at_one = prof.iter().find(|s| s.k == 1.0).unwrap();
    assert!(prof.iter().all(|s| s.value <= at_one.value + 1e-12));
    for w in prof.windows(2).filter(|w| w[0].k >= 1.0) {
        assert!(w[1].value < w[0].value);
        assert!(w[1].s < 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn scaling_lands_on_the_constraint(a in 0.1f64..3.0, w in 0.4f64..3.0, c in 0.2f64..5.0) {
        let g = line(512, 20.0);
        let params = Params::scalar(1, 7.0).unwrap();
        let u = build_state(&g, &[Profile::gaussian(a, w)], &[0.0]).unwrap();
        for con in [Constraint::G, Constraint::Q] {
            let k = scale_to_constraint(&u, &params, con).unwrap();
            let r = compute_functionals(&u.scaled(k), &params).unwrap();
            let (v, mag) = con.evaluate(&r, &params);
            prop_assert!(v.abs() <= 1e-10 * mag);
            // the scale is equivariant under amplitude changes
            let kc = scale_to_constraint(&u.scaled(c), &params, con).unwrap();
            prop_assert!(rel(kc * c, k) < 1e-10);
        }
    }
}
