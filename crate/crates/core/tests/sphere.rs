use cnls_core::grid::{sh_index, Grid, SphereGrid};
use cnls_core::sphere::*;
use cnls_core::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::sync::Arc;

fn sphere(lmax: usize, n_lat: usize) -> Arc<Grid<f64>> {
    GridSpec::Sphere { lmax, n_lat }.build().unwrap()
}

fn field_from(lmax: usize, coeffs: &[(f64, f64)]) -> SphereField<f64> {
    SphereField::new(lmax, coeffs.iter().map(|&(a, b)| Complex::new(a, b)).collect()).unwrap()
}

#[test]
fn projection_keeps_odd_and_kills_even_harmonics() {
    let y10 = SphereField::<f64>::harmonic(4, 1, 0).unwrap();
    assert_eq!(project_antisymmetric(&y10), y10);
    assert_eq!(project_antisymmetric(&SphereField::<f64>::harmonic(4, 2, 0).unwrap()).norm_squared(), 0.0);
    assert_eq!(project_antisymmetric(&SphereField::<f64>::harmonic(4, 3, 1).unwrap()).norm_squared(), 0.0);
    assert!(project_antisymmetric(&SphereField::<f64>::harmonic(4, 2, 1).unwrap()).norm_squared() > 0.0);
}

#[test]
fn projected_fields_are_odd_pointwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let lmax = 8;
    let g = SphereGrid::<f64>::new(lmax, 20).unwrap();
    let f = random_field::<f64, _>(lmax, 1.0, true, &mut rng);
    assert!(f.is_antisymmetric());
    for k in 0..100 {
        let th = PI * (k as f64 + 0.5) / 100.0;
        let ph = 2.0 * PI * ((k * 37) % 100) as f64 / 100.0;
        let up = g.evaluate(f.coeffs(), th, ph);
        let down = g.evaluate(f.coeffs(), PI - th, ph);
        assert!((up + down).norm() < 1e-12, "theta {th}");
    }
    // a generic field is not
    let e = random_field::<f64, _>(lmax, 1.0, false, &mut rng);
    let th = 0.7;
    assert!((g.evaluate(e.coeffs(), th, 0.3) + g.evaluate(e.coeffs(), PI - th, 0.3)).norm() > 1e-3);
}

#[test]
fn reflection_matches_pointwise_reflection() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = SphereGrid::<f64>::new(6, 16).unwrap();
    let f = random_field::<f64, _>(6, 0.5, false, &mut rng);
    let r = f.reflected();
    for &(th, ph) in &[(0.3, 0.1), (1.2, 2.0), (2.9, 5.5)] {
        assert!((g.evaluate(r.coeffs(), th, ph) - g.evaluate(f.coeffs(), PI - th, ph)).norm() < 1e-12);
    }
}

#[test]
fn parseval_against_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = SphereGrid::<f64>::new(10, 24).unwrap();
    let f = random_field::<f64, _>(10, 0.7, false, &mut rng);
    let vals: Vec<f64> = g.synthesize(f.coeffs()).iter().map(|z| z.norm_sqr()).collect();
    assert!((g.integrate(&vals) - f.norm_squared()).abs() < 1e-12 * f.norm_squared());
    let back = g.analyze(&g.synthesize(f.coeffs()));
    for (a, b) in back.iter().zip(f.coeffs()) {
        assert!((a - b).norm() < 1e-12);
    }
}

#[test]
fn first_harmonic_functionals() {
    let g = sphere(4, 17);
    let params = Params::scalar(2, 7.0).unwrap();
    let y10 = SphereField::<f64>::harmonic(4, 1, 0).unwrap();
    let r = compute_sphere_functionals(&g, &[y10.clone()], &params).unwrap();
    assert!((r.mass - 1.0).abs() < 1e-14);
    // int |grad Y_1^0|^2 = 2
    assert!((r.kinetic - 1.0).abs() < 1e-14);
    for c in [0.5f64, 1.0, 2.0] {
        let r = compute_sphere_functionals(&g, &[y10.scaled(c)], &params).unwrap();
        // int (c sqrt(3/4pi) cos)^8 = 2 pi (3/4pi)^4 (2/9) c^8
        let exact = 2.0 * PI * (3.0 / (4.0 * PI)).powi(4) * (2.0 / 9.0) * c.powi(8);
        assert!((r.potential - exact).abs() < 1e-12 * exact, "c={c}");
        assert!(r.q_dstar.is_some() && r.q_star.is_none());
    }
}

#[test]
fn underresolved_quadrature_is_an_error() {
    let params = Params::scalar(2, 7.0).unwrap();
    let coarse = sphere(6, 8);
    let f = SphereField::<f64>::harmonic(6, 5, 0).unwrap();
    assert!(matches!(compute_sphere_functionals(&coarse, &[f.clone()], &params), Err(Error::Resolution(_))));
    let sg = SphereGrid::<f64>::new(6, 8).unwrap();
    assert!(matches!(check_sobolev_sphere(&sg, &f, 8.0), Err(Error::Resolution(_))));
    assert!(compute_sphere_functionals(&sphere(6, 30), &[f], &params).is_ok());
}

#[test]
fn degree_mismatch_is_rejected() {
    let g = sphere(4, 12);
    let f = SphereField::<f64>::harmonic(3, 1, 0).unwrap();
    assert!(sphere_state(&g, &[f]).is_err());
    assert!(SphereField::<f64>::new(3, vec![Complex::new(0.0, 0.0); 15]).is_err());
    assert!(SphereField::<f64>::harmonic(3, 4, 0).is_err());
}

#[test]
fn poincare_ratio_of_single_harmonics() {
    let y10 = SphereField::<f64>::harmonic(5, 1, 0).unwrap();
    assert!((check_poincare_antisymmetric(&y10).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
    let y30 = SphereField::<f64>::harmonic(5, 3, 0).unwrap();
    assert!((check_poincare_antisymmetric(&y30).unwrap() - (1.0f64 / 12.0).sqrt()).abs() < 1e-15);
    assert!(matches!(check_poincare_antisymmetric(&SphereField::<f64>::harmonic(5, 1, 1).unwrap()), Err(Error::NotAntisymmetric(_))));
    assert!(matches!(check_poincare_antisymmetric(&SphereField::<f64>::zero(5)), Err(Error::UndefinedRatio)));
}

#[test]
fn poincare_bound_on_random_odd_fields() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..100 {
        let f = random_field::<f64, _>(12, 0.3, true, &mut rng);
        assert!(check_poincare_antisymmetric(&f).unwrap() <= 0.5f64.sqrt() + 1e-15);
    }
}

#[test]
fn sobolev_inequality() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let lmax = 8;
    let g = SphereGrid::<f64>::new(lmax, 40).unwrap();
    for q in [4.0, 8.0] {
        for _ in 0..20 {
            let f = random_field::<f64, _>(lmax, 1.0, false, &mut rng);
            let s = check_sobolev_sphere(&g, &f, q).unwrap();
            assert!(s.slack >= -1e-12, "q={q}: {s:?}");
        }
        // equality for constants
        let mut c = vec![Complex::new(0.0, 0.0); (lmax + 1) * (lmax + 1)];
        c[sh_index(0, 0)] = Complex::new(1.7, 0.0);
        let s = check_sobolev_sphere(&g, &SphereField::new(lmax, c).unwrap(), q).unwrap();
        assert!(s.slack.abs() < 1e-12 * s.lhs, "q={q}: {s:?}");
        let z = check_sobolev_sphere(&g, &SphereField::<f64>::zero(lmax), q).unwrap();
        assert_eq!(z.slack, 0.0);
    }
    assert!(check_sobolev_sphere(&g, &SphereField::<f64>::zero(lmax), 1.5).is_err());
}

#[test]
fn cutoff_weights() {
    let (rho, d1, _, lap) = sphere_weight(PI / 2.0);
    assert!((rho - 2f64.ln()).abs() < 1e-15);
    assert!((d1 - 1.0).abs() < 1e-15);
    assert_eq!(lap, 1.0);
    for k in 1..30 {
        let r = k as f64 * 0.05;
        let (rho, d1, d2, _) = sphere_weight(r);
        assert!((rho + 2.0 * (r / 2.0).cos().ln()).abs() < 1e-14);
        assert!((d1 - (r / 2.0).tan()).abs() < 1e-14);
        // rho'' + cot(r) rho' = 1
        assert!((d2 + d1 / r.tan() - 1.0).abs() < 1e-12);
    }
    let rep = check_sphere_weights(32).unwrap();
    assert_eq!(rep.nodes, 32);
    assert!(rep.holds(1e-9), "{rep:?}");
    assert!(check_sphere_weights(1).is_err());
}

#[test]
fn functionals_on_a_two_component_odd_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let lmax = 6;
    let g = sphere(lmax, 40);
    let params = params::SystemParams::new(2, 7.0, vec![1.0, 1.0], vec![vec![0.0, 0.5], vec![0.5, 0.0]], vec![1.0, 1.0], 2.0).unwrap();
    let a = random_field::<f64, _>(lmax, 1.0, true, &mut rng);
    let b = random_field::<f64, _>(lmax, 1.0, true, &mut rng);
    let r = compute_sphere_functionals(&g, &[a.clone(), b.clone()], &params).unwrap();
    assert!((r.mass.powi(2) - a.norm_squared() - b.norm_squared()).abs() < 1e-12);
    assert!((2.0 * r.kinetic - a.gradient_norm_squared() - b.gradient_norm_squared()).abs() < 1e-12);
    let s = sphere_state(&g, &[a, b]).unwrap();
    let back = sphere_fields(&s).unwrap();
    assert!(back.iter().all(|f| f.is_antisymmetric()));
    assert!(parity_defect(lmax, s.component(0)) == 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn projection_is_idempotent_and_self_adjoint(
        a in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 36),
        b in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 36),
    ) {
        let (f, g) = (field_from(5, &a), field_from(5, &b));
        let pf = project_antisymmetric(&f);
        prop_assert_eq!(&project_antisymmetric(&pf), &pf);
        let dot = |x: &SphereField<f64>, y: &SphereField<f64>| x.coeffs().iter().zip(y.coeffs()).map(|(p, q)| p.conj() * q).sum::<Complex>();
        let (l, r) = (dot(&pf, &g), dot(&f, &project_antisymmetric(&g)));
        prop_assert!((l - r).norm() < 1e-12);
        prop_assert_eq!(parity_defect(5, pf.coeffs()), 0.0);
    }
}
