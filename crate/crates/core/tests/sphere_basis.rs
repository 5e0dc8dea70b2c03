use std::f64::consts::PI;
use std::sync::Arc;

use obstacle_epi::sphere_basis::*;
use obstacle_epi::Error;

fn gram_error(domain: SphericalDomain, modes: usize, res: usize) -> (f64, f64) {
    let basis = build_basis(&domain, modes).unwrap();
    let quad = Arc::new(build_quadrature(&domain, res).unwrap());
    let traces = basis.sample(&quad);
    let mut gram = 0.0f64;
    let mut rayleigh = 0.0f64;
    for i in 0..traces.len() {
        for j in 0..traces.len() {
            let e = traces[i].inner(&traces[j]) - if i == j { 1.0 } else { 0.0 };
            gram = gram.max(e.abs());
        }
        let r = traces[i].dirichlet() / traces[i].l2_sq();
        rayleigh = rayleigh.max((r - basis.modes[i].lambda).abs() / (1.0 + basis.modes[i].lambda));
    }
    (gram, rayleigh)
}

#[test]
fn quadrature_weights_sum_to_measure() {
    let c = build_quadrature(&SphericalDomain::full(2), 16).unwrap();
    assert!((c.total_weight() - 2.0 * PI).abs() < 1e-13);
    let s = build_quadrature(&SphericalDomain::full(3), 16).unwrap();
    assert!((s.total_weight() - 4.0 * PI).abs() < 1e-12);
    let h = build_quadrature(&SphericalDomain::half(3), 16).unwrap();
    assert!((h.integrate(|x| x[2]) - PI).abs() < 1e-12);
    let cap = build_quadrature(&SphericalDomain::cap(3, 0.2), 16).unwrap();
    assert!((cap.total_weight() - 2.0 * PI * 1.2).abs() < 1e-12);
    let arc = build_quadrature(&SphericalDomain::cap(2, 0.2), 16).unwrap();
    assert!((arc.total_weight() - (PI + 2.0 * 0.2f64.asin())).abs() < 1e-12);
}

#[test]
fn low_resolution_is_rejected() {
    assert!(matches!(
        build_quadrature(&SphericalDomain::full(3), 4),
        Err(Error::InvalidInput(_))
    ));
    assert!(matches!(
        build_quadrature(&SphericalDomain::full(4), 16),
        Err(Error::UnsupportedDimension(4))
    ));
}

#[test]
fn full_sphere_spectrum_lists() {
    let b = build_basis(&SphericalDomain::full(3), 10).unwrap();
    assert_eq!(b.lambdas(), vec![0.0, 2.0, 2.0, 2.0, 6.0, 6.0, 6.0, 6.0, 6.0, 12.0]);
    let c = build_basis(&SphericalDomain::full(2), 5).unwrap();
    assert_eq!(c.lambdas(), vec![0.0, 1.0, 1.0, 4.0, 4.0]);
    let arc = build_basis(&SphericalDomain::cap(2, 0.0), 3).unwrap();
    for (l, e) in arc.lambdas().iter().zip([1.0, 4.0, 9.0]) {
        assert!((l - e).abs() < 1e-12);
    }
    let h = build_basis(&SphericalDomain::half(3), 6).unwrap();
    assert_eq!(h.lambdas(), vec![2.0, 6.0, 6.0, 12.0, 12.0, 12.0]);
}

#[test]
fn bases_are_orthonormal_with_correct_rayleigh_quotients() {
    for (dom, modes, tol_r) in [
        (SphericalDomain::full(2), 15, 1e-6),
        (SphericalDomain::full(3), 25, 1e-6),
        (SphericalDomain::half(3), 15, 1e-6),
        (SphericalDomain::cap(2, 0.0), 10, 1e-6),
        (SphericalDomain::cap(2, 0.25), 10, 1e-6),
        (SphericalDomain::cap(3, 0.1), 12, 1e-4),
        (SphericalDomain::cap(3, 0.2), 12, 1e-4),
    ] {
        let (g, r) = gram_error(dom, modes, 24);
        assert!(g < 1e-9 || (dom.kind == DomainKind::Cap && g < 1e-7), "{dom:?} gram {g}");
        assert!(r < tol_r, "{dom:?} rayleigh {r}");
    }
}

#[test]
fn cap_with_zero_width_matches_half_sphere() {
    let cap = build_basis(&SphericalDomain::cap(3, 0.0), 9).unwrap();
    let half = build_basis(&SphericalDomain::half(3), 9).unwrap();
    for (a, b) in cap.lambdas().iter().zip(half.lambdas()) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
}

#[test]
fn cap_spectrum_decreases_with_width_and_keeps_gap() {
    let mut prev = f64::INFINITY;
    for delta in [0.0, 0.1, 0.2] {
        let b = build_basis(&SphericalDomain::cap(3, delta), 4).unwrap();
        let l1 = b.modes[0].lambda;
        assert!(l1 < prev + 1e-12);
        assert!(b.modes[3].lambda >= 9.0);
        prev = l1;
    }
    assert!(prev < 2.0);
    assert!(matches!(
        build_basis(&SphericalDomain::cap(3, 0.3), 4),
        Err(Error::CapTooLarge { .. })
    ));
}

#[test]
fn project_then_evaluate_round_trips() {
    let dom = SphericalDomain::full(3);
    let basis = build_basis(&dom, 16).unwrap();
    let quad = Arc::new(build_quadrature(&dom, 20).unwrap());
    let coeffs: Vec<f64> = (0..16).map(|j| ((j * 7 % 5) as f64 - 2.0) / 3.0).collect();
    let t = evaluate(&basis, &coeffs, &quad);
    let (back, resid) = project(&t, &basis).unwrap();
    assert!(resid < 1e-10);
    for (a, b) in coeffs.iter().zip(back) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn quadrature_not_covering_basis_is_rejected() {
    let basis = build_basis(&SphericalDomain::full(3), 4).unwrap();
    let quad = Arc::new(build_quadrature(&SphericalDomain::half(3), 16).unwrap());
    let t = Trace::zeros(&quad);
    assert!(project(&t, &basis).is_err());
}

#[test]
fn adapted_rule_integrates_kinked_functions() {
    // int_{S^2} (x . n - s)_+ = pi (1 - s)^2 for a unit normal n.
    let n = [0.3, -0.4, (1.0f64 - 0.25).sqrt()];
    let s = 0.35;
    let k = PlaneSection::new(n, s);
    let dom = SphericalDomain::full(3);
    let q = build_adapted_quadrature(&dom, 16, &[k]).unwrap();
    let v = q.integrate(|x| (x[0] * n[0] + x[1] * n[1] + x[2] * n[2] - s).max(0.0));
    assert!((v - PI * (1.0 - s) * (1.0 - s)).abs() < 1e-10, "{v}");
    // Two great circles: int |x_1 x_2| = (4/3) * 2.
    let k1 = PlaneSection::new([1.0, 0.0, 0.0], 0.0);
    let k2 = PlaneSection::new([0.0, 1.0, 0.0], 0.0);
    let q = build_adapted_quadrature(&dom, 12, &[k1, k2]).unwrap();
    let v = q.integrate(|x| (x[0] * x[1]).abs());
    assert!((v - 8.0 / 3.0).abs() < 1e-12, "{v}");
    // A tilted latitude on a cap.
    let cap = SphericalDomain::cap(3, 0.1);
    let k = PlaneSection::new([0.6, 0.0, 0.8], 0.2);
    let q = build_adapted_quadrature(&cap, 16, &[k, cap.boundary_section().unwrap()]).unwrap();
    let coarse = q.integrate(|x| (0.6 * x[0] + 0.8 * x[2] - 0.2).abs());
    let fine = build_adapted_quadrature(&cap, 48, &[k]).unwrap();
    let reference = fine.integrate(|x| (0.6 * x[0] + 0.8 * x[2] - 0.2).abs());
    assert!((coarse - reference).abs() < 1e-8);
}

#[test]
fn circle_adapted_rule() {
    let k = PlaneSection::new([1.0, 1.0, 0.0], 0.2 * 2f64.sqrt());
    let q = build_adapted_quadrature(&SphericalDomain::full(2), 12, &[k]).unwrap();
    let v = q.integrate(|x| ((x[0] + x[1]) / 2f64.sqrt() - 0.2).max(0.0));
    let a = 0.2f64.acos();
    let exact = 2.0 * (a.sin() - 0.2 * a);
    assert!((v - exact).abs() < 1e-12);
}

#[test]
fn export_serializes() {
    let dom = SphericalDomain::half(3);
    let basis = build_basis(&dom, 4).unwrap();
    let q = build_quadrature(&dom, 8).unwrap();
    let json = serde_json::to_string(&basis.export(&q)).unwrap();
    assert!(json.contains("HalfSphere"));
}

#[test]
fn quadrature_examples_at_listed_resolutions() {
    let c = build_quadrature(&SphericalDomain::full(2), 64).unwrap();
    assert!((c.total_weight() - 2.0 * PI).abs() < 1e-12);
    let s = build_quadrature(&SphericalDomain::full(3), 32).unwrap();
    assert!((s.total_weight() - 4.0 * PI).abs() < 1e-12);
    assert!(s.exactness_degree >= 64);
    // int_{S^2} x^a y^b z^c = 2 G(A)G(B)G(C)/G(A+B+C) with A = (a+1)/2, here 4 pi / 35.
    let mono = s.integrate(|x| x[2].powi(4) * x[0].powi(2));
    let exact = 4.0 * PI / 35.0;
    assert!((mono - exact).abs() < 1e-12, "{mono} {exact}");
    let h = build_quadrature(&SphericalDomain::half(3), 32).unwrap();
    assert!((h.integrate(|x| x[2]) - PI).abs() < 1e-8);
}

#[test]
fn half_sphere_first_mode_is_normalized_linear_function() {
    let b = build_basis(&SphericalDomain::half(3), 4).unwrap();
    assert_eq!(b.modes[0].lambda, 2.0);
    let v = b.eval_modes(&[0.0, 0.0, 1.0])[0].0;
    // Unit L2 norm on the half-sphere: x_3 sqrt(2 / omega_3) with omega_3 = 4 pi / 3.
    assert!((v - (2.0 / (4.0 * PI / 3.0)).sqrt()).abs() < 1e-12);
}

#[test]
fn homogeneities_match_eigenvalues() {
    for dom in [SphericalDomain::full(3), SphericalDomain::half(3), SphericalDomain::cap(3, 0.1)] {
        let b = build_basis(&dom, 10).unwrap();
        for m in &b.modes {
            assert!(m.alpha >= 0.0);
            assert!((m.alpha * (m.alpha + 1.0) - m.lambda).abs() < 1e-10);
        }
        let l = b.lambdas();
        assert!(l.windows(2).all(|w| w[0] <= w[1] + 1e-12));
    }
    let b = build_basis(&SphericalDomain::full(3), 10).unwrap();
    let alphas: Vec<f64> = b.modes.iter().map(|m| m.alpha).collect();
    assert_eq!(alphas, vec![0.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0, 2.0, 3.0]);
}

#[test]
fn modes_vanish_on_the_boundary() {
    for dom in [SphericalDomain::half(3), SphericalDomain::cap(3, 0.15), SphericalDomain::cap(2, 0.2)] {
        let b = build_basis(&dom, 8).unwrap();
        let z = dom.lower_level() + 1e-12;
        for k in 0..12 {
            let t = k as f64 * 0.5;
            let rho = (1.0 - z * z).sqrt();
            let x = if dom.d == 2 {
                [if k % 2 == 0 { rho } else { -rho }, z, 0.0]
            } else {
                [rho * t.cos(), rho * t.sin(), z]
            };
            for (v, _) in b.eval_modes(&x) {
                assert!(v.abs() < 1e-8, "{dom:?} {v}");
            }
        }
    }
}

#[test]
fn projection_of_squared_height() {
    let dom = SphericalDomain::full(3);
    let b = build_basis(&dom, 9).unwrap();
    let quad = Arc::new(build_quadrature(&dom, 16).unwrap());
    let field = LinearCombination::new();
    let mut t = Trace::sample(&field, &quad);
    for (i, x) in quad.nodes.iter().enumerate() {
        t.values[i] = x[2] * x[2];
    }
    let (c, resid) = project(&t, &b).unwrap();
    assert!((c[0] - (4.0 * PI).sqrt() / 3.0).abs() < 1e-12);
    assert!((c[6] - 2.0 / 3.0 * (4.0 * PI / 5.0).sqrt()).abs() < 1e-12);
    assert!(resid < 1e-12);
    let unit = evaluate(&b, &[0.0, 0.0, 0.0, 0.0, 1.0], &quad);
    let (c5, _) = project(&unit, &b).unwrap();
    for (j, v) in c5.iter().enumerate() {
        assert!((v - if j == 4 { 1.0 } else { 0.0 }).abs() < 1e-9);
    }
    let (z, _) = project(&Trace::zeros(&quad), &b).unwrap();
    assert!(z.iter().all(|v| *v == 0.0));
}

#[test]
fn small_cap_spectral_structure() {
    for (d, delta) in [(2usize, 0.05), (2, 0.1), (3, 0.05), (3, 0.1)] {
        let b = build_basis(&SphericalDomain::cap(d, delta), d + 2).unwrap();
        let l = b.lambdas();
        let df = d as f64;
        assert!(l[0] <= df - 1.0);
        for lj in &l[1..d] {
            assert!(*lj > df - 1.0 && *lj < 2.0 * df);
        }
        for lj in &l[d..] {
            assert!(*lj >= 3.0 * df);
        }
    }
}

#[test]
fn cap_eigenvalues_are_lipschitz_in_width() {
    let base = build_basis(&SphericalDomain::cap(3, 0.0), 6).unwrap().lambdas();
    let mut worst: f64 = 0.0;
    let mut prev = base.clone();
    for delta in [0.02, 0.04, 0.06, 0.08, 0.1] {
        let l = build_basis(&SphericalDomain::cap(3, delta), 6).unwrap().lambdas();
        for j in 0..6 {
            worst = worst.max((l[j] - base[j]).abs() / delta);
            assert!(l[j] <= prev[j] + 1e-9, "monotone in delta");
        }
        prev = l;
    }
    // Fitted constant stays bounded by a moderate multiple of the eigenvalue scale.
    assert!(worst < 20.0, "C = {worst}");
}

#[test]
fn cap_modes_separate_variables() {
    let dom = SphericalDomain::cap(3, 0.1);
    let b = build_basis(&dom, 3).unwrap();
    let x = [0.48, 0.36, 0.8];
    let y = [-0.6, 0.0, 0.8];
    let (ex, ey) = (b.eval_modes(&x), b.eval_modes(&y));
    assert!((ex[0].0 - ey[0].0).abs() < 1e-12);
    // phi_2 / x_1 and phi_3 / x_2 share one profile of x_3.
    let p = ex[1].0 / x[0];
    assert!((ex[2].0 / x[1] - p).abs() < 1e-9);
    assert!((ey[1].0 / y[0] - p).abs() < 1e-9);
    let b2 = build_basis(&SphericalDomain::cap(2, 0.1), 2).unwrap();
    let u = [0.6, 0.8, 0.0];
    let w = [-0.6, 0.8, 0.0];
    let (eu, ew) = (b2.eval_modes(&u), b2.eval_modes(&w));
    assert!((eu[0].0 - ew[0].0).abs() < 1e-12);
    assert!((eu[1].0 / u[0] - ew[1].0 / w[0]).abs() < 1e-12);
}

#[test]
fn bases_are_shareable_across_threads() {
    fn assert_send_sync<T: Send + Sync>() {}
    assert_send_sync::<SpectralBasis>();
    assert_send_sync::<Quadrature>();
    assert_send_sync::<Trace>();
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn evaluate_project_round_trip(coeffs in proptest::collection::vec(-2.0f64..2.0, 10), half in any::<bool>()) {
            let dom = if half { SphericalDomain::half(3) } else { SphericalDomain::full(3) };
            let b = build_basis(&dom, 10).unwrap();
            let quad = Arc::new(build_quadrature(&dom, 12).unwrap());
            let t = evaluate(&b, &coeffs, &quad);
            let (back, resid) = project(&t, &b).unwrap();
            prop_assert!(resid < 1e-9);
            for (a, c) in coeffs.iter().zip(back) {
                prop_assert!((a - c).abs() < 1e-9);
            }
        }
    }
}
