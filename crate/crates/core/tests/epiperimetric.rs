use std::sync::Arc;

use obstacle_epi::decompose::*;
use obstacle_epi::energy::eps_alpha;
use obstacle_epi::epiperimetric::*;
use obstacle_epi::numerics::loglog_slope;
use obstacle_epi::sphere_basis::*;
use obstacle_epi::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cap_basis(d: usize) -> Arc<SpectralBasis> {
    Arc::new(build_basis(&SphericalDomain::cap(d, 0.1), if d == 2 { 12 } else { 16 }).unwrap())
}

fn random_nu(rng: &mut ChaCha8Rng, d: usize) -> HalfSquareProfile {
    let mut v = [0.0; 3];
    for c in v.iter_mut().take(d) {
        *c = rng.gen_range(-0.6..0.6);
    }
    HalfSquareProfile::new(d, &v)
}

/// Random smooth trace on the quadrature built around the kink of `nu`.
fn random_smooth(rng: &mut ChaCha8Rng, d: usize, modes: usize, nu: &HalfSquareProfile) -> Trace {
    let basis = build_basis(&SphericalDomain::full(d), modes).unwrap();
    let quad = Arc::new(build_adapted_quadrature(&SphericalDomain::full(d), 40, &nu.kinks()).unwrap());
    let coeffs: Vec<f64> = (0..modes).map(|_| rng.gen_range(-0.1..0.1)).collect();
    evaluate(&basis, &coeffs, &quad)
}

#[test]
fn constants() {
    assert_eq!(theorem_gamma(2), 0.0);
    assert!((theorem_gamma(3) - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(c4(3), 13.0);
    assert!((eps_alpha_max(2) - 1.0 / 9.0).abs() < 1e-15);
    assert!((eps_alpha_max(3) - 1.0 / 11.0).abs() < 1e-15);
    let p = CompetitorParams::flat(3);
    assert_eq!(p.alpha, 2.5);
    assert!((p.eps - 1.0 / 11.0).abs() < 1e-15);
    let p = CompetitorParams::singular(3, 0.01, 0.5).unwrap();
    assert!((p.eps_alpha - 0.01 * 6.5f64.powf(1.0 / 3.0)).abs() < 1e-15);
    assert!((eps_alpha(p.alpha, 3) - p.eps_alpha).abs() < 1e-14);
    assert!(p.alpha > 2.0 && p.alpha <= 2.5);
    assert!(matches!(CompetitorParams::singular(2, 0.5, 1.0), Err(Error::Precondition(_))));
    assert!(CompetitorParams::singular(2, -1.0, 1.0).is_err());
}

#[test]
fn improvement_exponents() {
    assert_eq!(improvement_gamma(2, 1).unwrap(), 0.0);
    assert!((improvement_gamma(4, 1).unwrap() - 3.0 / 7.0).abs() < 1e-15);
    assert_eq!(improvement_gamma(5, 0).unwrap(), 0.0);
    assert!((improvement_gamma(3, 1).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(improvement_gamma(3, 2).unwrap(), 0.0);
    assert!(improvement_gamma(3, 3).is_err());
}

#[test]
fn flat_identity_on_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..200 {
        let d = 2 + i % 2;
        let nu = random_nu(&mut rng, d);
        let phi = random_smooth(&mut rng, d, if d == 2 { 9 } else { 16 }, &nu);
        let alpha = rng.gen_range(2.05..3.0);
        let r = flat_identity_check(&nu, &phi, alpha).unwrap();
        assert!(r < 1e-8, "case {i}: {r}");
    }
}

#[test]
fn singular_identity_on_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for i in 0..200 {
        let d = 2 + i % 2;
        let nu = random_nu(&mut rng, d);
        let rows: Vec<Vec<f64>> = (0..d).map(|_| (0..d).map(|_| rng.gen_range(-0.2..0.2)).collect()).collect();
        let mut b = QuadraticForm::new(d, &rows);
        if b.trace().abs() < 1e-3 {
            b.set(0, 0, b.get(0, 0) + 0.1);
        }
        let psi = random_smooth(&mut rng, d, 5, &nu);
        let alpha = if i % 4 == 0 { 2.3 } else { rng.gen_range(2.05..2.5) };
        let r = singular_identity_check(&nu, &b, &psi, alpha).unwrap();
        assert!(r < 1e-8, "case {i}: {r}");
    }
}

#[test]
fn singular_identity_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for d in [2usize, 3] {
        let psi = random_smooth(&mut rng, d, 5, &HalfSquareProfile::zero(d));
        // nu = 0 and b = 1: the bracket is (1 - 1 - 0)^2 + 0 = 0.
        let b = QuadraticForm::diag(&vec![0.25 / d as f64; d]);
        let r = singular_identity_check(&HalfSquareProfile::zero(d), &b, &psi, 2.3).unwrap();
        assert!(r < 1e-9, "{r}");
        // b = 1 and c0 = 1.
        let nu = HalfSquareProfile::standard(d);
        let psi = random_smooth(&mut rng, d, 5, &nu);
        let r = singular_identity_check(&nu, &b, &psi, 2.3).unwrap();
        assert!(r < 1e-9, "{r}");
    }
}

#[test]
fn flat_example_single_mode() {
    let cb = cap_basis(2);
    let j = cb.lambdas().iter().position(|l| *l > 4.0).unwrap();
    let mut coeffs = vec![0.0; cb.count()];
    coeffs[j] = 1.0;
    let field = admissible_flat_field(&cb, &coeffs, 0.01).unwrap();
    let f = flat_competitor(&field, &cb, 48).unwrap();
    assert!(f.report.satisfied, "{:?}", f.report);
    assert!((f.params.eps - 1.0 / 9.0).abs() < 1e-15);
    assert!(f.report.gain >= f.report.required_gain);
    assert!(f.report.h_min >= -1e-12);
    // The low cap moments of phi vanish by the choice of nu.
    assert!(f.phi_coeffs[..2].iter().all(|c| c.abs() < 1e-7), "{:?}", &f.phi_coeffs[..2]);
    // Quadrature and spectral gaps differ only by the content of phi beyond the cap basis.
    assert!((f.gap_direct - f.gap_spectral).abs() < 1e-2 * f.gap_direct.abs());
    assert!(f.gap_spectral <= 0.0);
}

#[test]
fn flat_competitor_rejects_inadmissible_traces() {
    let cb = cap_basis(2);
    let j = cb.lambdas().iter().position(|l| *l > 4.0).unwrap();
    // Without the positivity shift the trace dips below zero below the equator for one sign.
    let rejected = [1.0, -1.0]
        .iter()
        .filter(|&&sign| {
            let mut coeffs = vec![0.0; cb.count()];
            coeffs[j] = sign;
            let raw = LinearCombination::new()
                .with(1.0, Arc::new(HalfSquareProfile::standard(2)))
                .with(0.05, Arc::new(BasisExpansion::new(cb.clone(), coeffs)));
            matches!(flat_competitor(&raw, &cb, 48), Err(Error::Precondition(_)))
        })
        .count();
    assert!(rejected >= 1);
    // Support outside the cap.
    let wide = LinearCombination::new().with(1.0, Arc::new(HalfSquareProfile::new(2, &[0.1, 0.3])));
    assert!(matches!(flat_competitor(&wide, &cb, 48), Err(Error::Precondition(_))));
}

#[test]
fn flat_suite() {
    for d in [2usize, 3] {
        let cb = cap_basis(d);
        let eps = 1.0 / (2.0 * d as f64 + 5.0);
        for s in sample_flat(&cb, 100, 100 + d as u64).unwrap() {
            let f = flat_competitor(s.field.as_ref(), &cb, 40).unwrap();
            assert!((f.params.eps - eps).abs() < 1e-15);
            assert!(f.report.satisfied, "d={d} id={} {:?}", s.id, f.report);
            assert!(f.report.h_min >= -1e-12);
        }
    }
}

#[test]
fn singular_example_psd() {
    let quad = singular_quadrature(3).unwrap();
    let basis = singular_basis(3).unwrap();
    let a = QuadraticForm::diag(&[0.07, 0.08, 0.1]);
    let j = basis.lambdas().iter().position(|l| (*l - 12.0).abs() < 1e-9).unwrap();
    let mut coeffs = vec![0.0; basis.count()];
    coeffs[j] = 0.01;
    let c = trace_of_quadratic(&a, &quad).add(&evaluate(&basis, &coeffs, &quad));
    let s = singular_competitor(&c, &basis, 0.01).unwrap();
    assert!(s.report.satisfied);
    assert!(s.report.gain > 0.0);
    assert!((s.params.gamma - 1.0 / 3.0).abs() < 1e-15);
    for i in 0..3 {
        for k in 0..3 {
            assert!((s.b.get(i, k) - a.get(i, k)).abs() < 1e-10);
        }
    }
}

#[test]
fn singular_preconditions() {
    let quad = singular_quadrature(2).unwrap();
    let basis = singular_basis(2).unwrap();
    let neg = trace_of_quadratic(&QuadraticForm::diag(&[-0.05, 0.3]), &quad);
    assert!(matches!(singular_competitor(&neg, &basis, 0.01), Err(Error::Precondition(_))));
    // W(z) - Theta < 0 for A in the cone with a smaller trace.
    let small = trace_of_quadratic(&QuadraticForm::diag(&[0.05, 0.05]), &quad);
    assert!(matches!(singular_competitor(&small, &basis, 0.01), Err(Error::Precondition(_))));
    let c = trace_of_quadratic(&QuadraticForm::diag(&[0.1, 0.15]), &quad);
    assert!(matches!(singular_competitor(&c, &basis, 0.5), Err(Error::Precondition(_))));
}

#[test]
fn singular_suites() {
    for d in [2usize, 3] {
        let basis = singular_basis(d).unwrap();
        let bound = 1.0 + 4.0 * d as f64;
        let mut infima = Vec::new();
        for fam in SingularFamily::ALL {
            let mut inf = f64::INFINITY;
            for s in sample_singular(fam, d, 34, 7).unwrap() {
                assert!(s.trace.min_value() >= -NONNEG_SLACK);
                let c = singular_competitor(&s.trace, &basis, 1e-3).unwrap();
                assert!(c.report.satisfied, "d={d} {} id={} {:?}", fam.name(), s.id, c.report);
                assert!(c.report.h_min >= -1e-12);
                let (_, final_ratio) = higher_mode_controls(&s.trace, &c.decomposition).unwrap();
                assert!(final_ratio <= bound, "{final_ratio}");
                if let Some(e) = c.report.empirical_eps {
                    assert!(e >= 1e-3);
                    inf = inf.min(e);
                }
            }
            infima.push(inf);
        }
        if d == 2 {
            // gamma = 0: every trace reaches the alpha = 5/2 ceiling, so the families tie.
            assert!(infima.iter().all(|e| (e - 1.0 / 9.0).abs() < 1e-9), "{infima:?}");
        }
    }
}

#[test]
fn negative_eigenvalue_costs_relative_gain() {
    // At the alpha = 5/2 ceiling, the gain per unit of eps_alpha and of W(z) - Theta is smallest
    // on the indefinite family.
    let d = 3;
    let basis = singular_basis(d).unwrap();
    let worst = |fam| {
        sample_singular(fam, d, 34, 7)
            .unwrap()
            .iter()
            .map(|s| {
                let st = SingularSetup::new(&s.trace, &basis).unwrap();
                let top = eps_alpha_max(d) / (c4(d) * st.grad_phi_sq).powf(theorem_gamma(d)) * (1.0 - 1e-9);
                let (p, w_h, _) = st.competitor_energy(top).unwrap();
                (st.w_z - w_h) / (st.w_z - st.theta) / p.eps_alpha
            })
            .fold(f64::INFINITY, f64::min)
    };
    let b = worst(SingularFamily::B);
    assert!(b <= worst(SingularFamily::AInterior));
    assert!(b <= worst(SingularFamily::ABoundary));
    assert!(b >= 1.0);
}

#[test]
fn sampling_is_deterministic() {
    let a = sample_singular(SingularFamily::B, 2, 5, 42).unwrap();
    let b = sample_singular(SingularFamily::B, 2, 5, 42).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.trace.values, y.trace.values);
    }
    let c = sample_singular(SingularFamily::B, 2, 5, 43).unwrap();
    assert_ne!(a[0].trace.values, c[0].trace.values);
}

#[test]
fn higher_modes_control_psd_trace() {
    let quad = singular_quadrature(3).unwrap();
    let c = trace_of_quadratic(&QuadraticForm::diag(&[0.05, 0.08, 0.12]), &quad);
    let dec = decompose_singular(&c, &singular_basis(3).unwrap()).unwrap();
    let (pre, fin) = higher_mode_controls(&c, &dec).unwrap();
    assert!(pre.abs() < 1e-12 && fin.abs() < 1e-9, "{pre} {fin}");
}

/// max(Q_A, 0) with A = diag(-a, b, ..), on a rule split along its zero set.
fn clipped_indefinite(d: usize, a: f64) -> Trace {
    let b = (0.25 + a) / (d as f64 - 1.0);
    let mut v = vec![-a];
    v.extend(std::iter::repeat(b).take(d - 1));
    let kinks = if d == 2 {
        let t = (a / b).sqrt();
        let n = (1.0 + t * t).sqrt();
        vec![PlaneSection::new([t / n, 1.0 / n, 0.0], 0.0), PlaneSection::new([-t / n, 1.0 / n, 0.0], 0.0)]
    } else {
        let s = (b / (a + b)).sqrt();
        vec![PlaneSection::new([1.0, 0.0, 0.0], s), PlaneSection::new([1.0, 0.0, 0.0], -s)]
    };
    let quad = Arc::new(build_adapted_quadrature(&SphericalDomain::full(d), 64, &kinks).unwrap());
    trace_of_quadratic(&QuadraticForm::diag(&v), &quad).positive_part()
}

#[test]
fn higher_modes_control_negative_eigenvalue() {
    for d in [2usize, 3] {
        let basis = singular_basis(d).unwrap();
        let mut neg = Vec::new();
        let mut grad = Vec::new();
        for a in [0.02, 0.01, 0.005] {
            let c = clipped_indefinite(d, a);
            let dec = decompose_singular(&c, &basis).unwrap();
            let (pre, fin) = higher_mode_controls(&c, &dec).unwrap();
            assert!(pre.is_finite() && pre < 0.1);
            assert!(fin <= 1.0 + 4.0 * d as f64);
            let (vals, _) = dec.a.eigen();
            neg.push(vals.iter().filter(|v| **v < 0.0).map(|v| v * v).sum::<f64>());
            grad.push(dec.phi_trace.as_ref().unwrap().dirichlet());
        }
        let slope = loglog_slope(&grad, &neg);
        assert!(slope >= 0.9 * 4.0 / (d as f64 + 3.0), "d={d}: {slope}");
    }
}

#[test]
fn improvement_checks() {
    // k = 0: nothing to control.
    let (phi, nu) = improvement_envelope(3, 0, &[0.1, 0.1, 0.1], 24).unwrap();
    let r = improvement_check(3, 0, &[0.1, 0.1, 0.1], &phi, &nu).unwrap();
    assert_eq!(r.constant, 0.0);
    // k = d - 1: bounded ratio with gamma = 0.
    let ratios: Vec<f64> = [0.04, 0.02, 0.01]
        .iter()
        .map(|&a| {
            let v = [a, a, 1.0];
            let (phi, nu) = improvement_envelope(3, 2, &v, 64).unwrap();
            improvement_check(3, 2, &v, &phi, &nu).unwrap().constant
        })
        .collect();
    assert!(ratios.windows(2).all(|w| w[1] <= w[0] * 1.05), "{ratios:?}");
    // k = 1 in d = 3: sum a^2 against |grad phi|, slope at least 2 (1 - gamma_1).
    let mut sa = Vec::new();
    let mut gn = Vec::new();
    for a in [0.04, 0.02, 0.01] {
        let v = [a, 1.0, 1.0];
        let (phi, nu) = improvement_envelope(3, 1, &v, 64).unwrap();
        let r = improvement_check(3, 1, &v, &phi, &nu).unwrap();
        sa.push(r.sum_a_sq);
        gn.push(r.grad_phi_sq.sqrt());
    }
    let slope = loglog_slope(&gn, &sa);
    assert!(slope >= 0.9 * 2.0 * (1.0 - 1.0 / 3.0), "{slope}");
    // In d = 2 the same envelope gives a bounded ratio (gamma = 0).
    let (phi, nu) = improvement_envelope(2, 1, &[0.05, 1.0], 64).unwrap();
    assert!(improvement_check(2, 1, &[0.05, 1.0], &phi, &nu).unwrap().constant.is_finite());
}

#[test]
fn improvement_hypotheses() {
    let v = [0.04, 1.0, 1.0];
    let (phi, nu) = improvement_envelope(3, 1, &v, 32).unwrap();
    let zero = Trace::zeros(&phi.quad);
    assert!(matches!(improvement_check(3, 1, &v, &zero, &nu), Err(Error::Precondition(_))));
    let shifted = phi.combine(1.0, &Trace::zeros(&phi.quad), 0.0);
    let mut shifted = shifted;
    shifted.values.iter_mut().for_each(|x| *x += 0.01);
    assert!(matches!(improvement_check(3, 1, &v, &shifted, &nu), Err(Error::Precondition(_))));
    assert!(improvement_check(3, 1, &[0.2, 1.0, 1.0], &phi, &nu).is_err());
    assert!(improvement_check(3, 1, &[0.04, 1.5, 1.0], &phi, &nu).is_err());
    assert!(improvement_check(3, 1, &v, &phi, &nu).is_ok());
}

#[test]
fn sharpness_example() {
    let t = sharpness_scan(3, &[0.0025, 0.00125, 0.000625, 0.0003125]).unwrap();
    assert!((t.slope_r_l2 - 1.5).abs() < 0.1, "{}", t.slope_r_l2);
    assert!((t.slope_grad_r_l2 - 1.0).abs() < 0.1);
    assert!((t.slope_measure - 1.0).abs() < 0.1);
    assert!((t.slope_dist - 1.0).abs() < 0.1);
    assert!((t.slope_grad_phi_l2 - 1.0).abs() < 0.1);
    assert!(t.max_grad_phi_over_dist < 4.0);
    for r in &t.rows {
        assert!(r.final_ratio <= 13.0);
        assert!(r.c0 <= r.r_l2 && r.c2_abs <= r.r_l2);
    }
    assert!(sharpness_row(2, 0.01).is_err());
    assert!(sharpness_row(3, 0.3).is_err());
}
