use std::f64::consts::PI;
use std::sync::Arc;

use obstacle_epi::decompose::*;
use obstacle_epi::sphere_basis::*;
use obstacle_epi::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn full(d: usize, res: usize) -> Arc<Quadrature> {
    Arc::new(build_quadrature(&SphericalDomain::full(d), res).unwrap())
}

#[test]
fn quadratic_traces() {
    let q3 = full(3, 12);
    let t = trace_of_quadratic(&QuadraticForm::diag(&[1.0 / 12.0; 3]), &q3);
    assert!(t.values.iter().all(|v| (v - 1.0 / 12.0).abs() < 1e-15));
    let q2 = full(2, 16);
    let t = trace_of_quadratic(&QuadraticForm::diag(&[0.125, 0.125]), &q2);
    assert!(t.values.iter().all(|v| (v - 0.125).abs() < 1e-15));
    let t = trace_of_quadratic(&QuadraticForm::diag(&[-0.125, 0.375]), &q2);
    for (x, v) in q2.nodes.iter().zip(&t.values) {
        let ang = x[1].atan2(x[0]);
        assert!((v - (0.125 - 0.25 * (2.0 * ang).cos())).abs() < 1e-14);
    }
}

#[test]
fn predicates_and_serialization() {
    assert!(QuadraticForm::diag(&[0.1, 0.15]).in_k(1e-12));
    assert!(!QuadraticForm::diag(&[-0.1, 0.35]).in_k(1e-12));
    assert!(HalfSquareProfile::standard(3).in_k_plus(1e-15));
    let a = QuadraticForm::new(2, &[vec![0.1, 0.02], vec![0.02, 0.15]]);
    let s = serde_json::to_string(&a).unwrap();
    let back: QuadraticForm = serde_json::from_str(&s).unwrap();
    assert_eq!(a, back);
}

fn singular_basis(d: usize) -> SpectralBasis {
    build_basis(&SphericalDomain::full(d), if d == 2 { 36 } else { 81 }).unwrap()
}

#[test]
fn decompose_pure_quadratic() {
    let q = full(3, 20);
    let a = QuadraticForm::new(3, &[vec![0.05, 0.01, 0.0], vec![0.01, 0.08, -0.02], vec![0.0, -0.02, 0.12]]);
    let dec = decompose_singular(&trace_of_quadratic(&a, &q), &singular_basis(3)).unwrap();
    assert_eq!(dec.nu.nu, [0.0; 3]);
    for i in 0..3 {
        for j in 0..3 {
            assert!((dec.a.get(i, j) - a.get(i, j)).abs() < 1e-12);
        }
    }
    assert!(dec.phi.coeffs.iter().all(|c| c.abs() < 1e-12));
    assert!(dec.residual < 1e-12);
}

#[test]
fn decompose_quadratic_plus_cubic_harmonic() {
    let dom = SphericalDomain::full(3);
    let q = full(3, 20);
    let b = singular_basis(3);
    let a = QuadraticForm::diag(&[0.05, 0.08, 0.12]);
    let mut coeffs = vec![0.0; 16];
    coeffs[12] = 0.1;
    let c = trace_of_quadratic(&a, &q).add(&evaluate(&b, &coeffs, &q));
    let dec = decompose_singular(&c, &b).unwrap();
    assert_eq!(dec.nu.nu, [0.0; 3]);
    // Y_{3,0} is odd, so it carries no linear content; it shows up at its own index in phi.
    let lam12: Vec<usize> = (0..dec.phi.lambdas.len()).filter(|&k| dec.phi.lambdas[k] == 12.0).collect();
    assert_eq!(lam12.len(), 7);
    for (k, idx) in lam12.iter().enumerate() {
        let want = if k == 3 { 0.1 } else { 0.0 };
        assert!((dec.phi.coeffs[*idx] - want).abs() < 1e-9);
    }
    assert!((dec.a.get(2, 2) - 0.12).abs() < 1e-12);
    let _ = dom;
}

#[test]
fn decompose_half_square_profile() {
    for d in [2usize, 3] {
        let qn = HalfSquareProfile::standard(d);
        let q = Arc::new(
            build_adapted_quadrature(&SphericalDomain::full(d), 24, &qn.kinks()).unwrap(),
        );
        let c = Trace::sample(&qn, &q);
        let dec = decompose_singular(&c, &singular_basis(d)).unwrap();
        for k in 0..d {
            assert!((dec.nu.nu[k] - qn.nu[k]).abs() < 1e-9, "{d}: {:?}", dec.nu.nu);
        }
        let phi = dec.phi_trace.clone().unwrap();
        let rec = Trace::sample(&dec.nu, &q).add(&trace_of_quadratic(&dec.a, &q)).add(&phi);
        assert!(rec.sub(&c).l2() < 1e-8);
        assert!(dec.a.frobenius_sq() < 1e-18);
        // The tail of q_nu beyond the band limit is reported, not hidden.
        assert!(dec.residual > 0.0 && dec.residual < 1e-2);
        let json = serde_json::to_value(&dec).unwrap();
        for key in ["nu", "A", "phi", "residual"] {
            assert!(json.get(key).is_some());
        }
    }
}

#[test]
fn nonneg_replacement_examples() {
    let a = QuadraticForm::diag(&[0.125, 0.125]);
    assert_eq!(nonneg_replacement(&a).unwrap(), a);
    let b = nonneg_replacement(&QuadraticForm::diag(&[-0.05, 0.30])).unwrap();
    assert!((b.get(0, 0)).abs() < 1e-15 && (b.get(1, 1) - 0.25).abs() < 1e-15);
    let b = nonneg_replacement(&QuadraticForm::diag(&[-0.02, 0.10, 0.17])).unwrap();
    let want = [0.0, 0.10, 0.15];
    for i in 0..3 {
        assert!((b.get(i, i) - want[i]).abs() < 1e-15);
    }
    assert!(matches!(
        nonneg_replacement(&QuadraticForm::diag(&[-0.2, 0.1])),
        Err(Error::Precondition(_))
    ));
}

fn random_symmetric(rng: &mut ChaCha8Rng, d: usize) -> QuadraticForm {
    let mut rows = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            rows[i][j] = rng.gen_range(-0.2..0.3);
        }
    }
    QuadraticForm::new(d, &rows)
}

#[test]
fn replacement_is_psd_trace_preserving_and_differs_by_harmonic() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut count = 0;
    while count < 200 {
        let d = 2 + count % 2;
        let a = random_symmetric(&mut rng, d);
        let Ok(b) = nonneg_replacement(&a) else { continue };
        count += 1;
        assert!(b.eigen().0[0] >= -1e-12);
        assert!((b.trace() - a.trace()).abs() < 1e-13);
        // tr(A - B) = 0: the difference is a harmonic quadratic, orthogonal to constants.
        let q = full(d, 12);
        let diff = trace_of_quadratic(&a.combine(1.0, &b, -1.0), &q);
        assert!(diff.integral().abs() < 1e-12);
    }
}

#[test]
fn distance_to_cone() {
    let q = full(3, 16);
    let a = QuadraticForm::diag(&[0.05, 0.08, 0.12]);
    assert!(dist_to_cone(&trace_of_quadratic(&a, &q)) < 1e-9);
    let b = singular_basis(3);
    let mut coeffs = vec![0.0; 20];
    coeffs[17] = 1.0;
    for t in [1e-3, 0.05, 0.3] {
        let c = trace_of_quadratic(&a, &q).add(&evaluate(&b, &coeffs, &q).scaled(t));
        assert!((dist_to_cone(&c) - t).abs() < 1e-9);
    }
}

#[test]
fn distance_to_cone_brute_force_oracle() {
    // K in d = 2: A = [[s, w], [w, 1/4 - s]] with s(1/4 - s) >= w^2.
    let q = full(2, 32);
    let eps = 0.01;
    let c = trace_of_quadratic(&QuadraticForm::diag(&[-eps, 0.25 + eps]), &q);
    let mut best = f64::INFINITY;
    let n = 400;
    for i in 0..=n {
        let s = 0.25 * i as f64 / n as f64;
        let wmax = (s * (0.25 - s)).max(0.0).sqrt();
        for k in 0..=40 {
            let w = -wmax + 2.0 * wmax * k as f64 / 40.0;
            let p = QuadraticForm::new(2, &[vec![s, w], vec![w, 0.25 - s]]);
            best = best.min(c.sub(&trace_of_quadratic(&p, &q)).l2());
        }
    }
    let dist = dist_to_cone(&c);
    assert!(dist <= best + 1e-12);
    assert!((dist - best).abs() < 1e-4, "{dist} {best}");
}

fn cap_basis(d: usize, delta: f64) -> SpectralBasis {
    build_basis(&SphericalDomain::cap(d, delta), if d == 2 { 12 } else { 16 }).unwrap()
}

#[test]
fn moment_map_examples() {
    let b = cap_basis(2, 0.0);
    let f = moments_F(&[0.0, 0.5], &b).unwrap();
    assert!((f[0] - (2.0 / PI).sqrt() / 3.0).abs() < 1e-12, "{f:?}");
    assert!(f[1].abs() < 1e-13);
    assert!(moments_F(&[0.0, 0.0], &b).unwrap().iter().all(|v| *v == 0.0));
    let f = moments_F(&[0.0, -0.5], &b).unwrap();
    assert!(f.iter().all(|v| v.abs() < 1e-14));
}

#[test]
fn jacobian_structure_at_standard_profile() {
    for d in [2usize, 3] {
        for delta in [0.0, 0.05, 0.1] {
            let b = cap_basis(d, delta);
            let mut nu = vec![0.0; d];
            nu[d - 1] = 0.5;
            let j = moments_jacobian(&nu, &b).unwrap();
            assert!(j[0][d - 1] > 0.0);
            for k in 0..d - 1 {
                assert!(j[0][k].abs() < 1e-9, "{d} {delta} {:?}", j);
            }
            for k in 1..d {
                assert!(j[k][k - 1].abs() > 0.1);
            }
        }
    }
}

fn cap_quad(d: usize, delta: f64, kinks: &[PlaneSection]) -> Arc<Quadrature> {
    let dom = SphericalDomain::cap(d, delta);
    let mut k = kinks.to_vec();
    k.extend(dom.boundary_section());
    Arc::new(build_adapted_quadrature(&dom, 24, &k).unwrap())
}

#[test]
fn choose_nu_examples() {
    for d in [2usize, 3] {
        let b = cap_basis(d, 0.1);
        let qn = HalfSquareProfile::standard(d);
        let q = cap_quad(d, 0.1, &qn.kinks());
        let nu = choose_nu_flat(&Trace::sample(&qn, &q), &b).unwrap();
        for k in 0..d {
            assert!((nu.nu[k] - qn.nu[k]).abs() < 1e-9);
        }
        // A high cap mode has no low moments.
        let mut coeffs = vec![0.0; b.count()];
        coeffs[d + 2] = 0.01;
        let c = Trace::sample(&qn, &q).add(&evaluate(&b, &coeffs, &q));
        let nu = choose_nu_flat(&c, &b).unwrap();
        for k in 0..d {
            assert!((nu.nu[k] - qn.nu[k]).abs() < 1e-7);
        }
    }
    let b = cap_basis(2, 0.1);
    let v = [0.02f64, 0.49];
    let s = 0.5 / (v[0] * v[0] + v[1] * v[1]).sqrt();
    let target = HalfSquareProfile::new(2, &[v[0] * s, v[1] * s]);
    let q = cap_quad(2, 0.1, &target.kinks());
    let nu = choose_nu_flat(&Trace::sample(&target, &q), &b).unwrap();
    assert!((nu.nu[0] - target.nu[0]).abs() < 1e-7 && (nu.nu[1] - target.nu[1]).abs() < 1e-7);
}

#[test]
fn choose_nu_is_locally_lipschitz() {
    let b = cap_basis(2, 0.1);
    let qn = HalfSquareProfile::standard(2);
    let q = cap_quad(2, 0.1, &qn.kinks());
    let base = Trace::sample(&qn, &q);
    let modes = b.sample(&q);
    let j = moments_jacobian(&[0.0, 0.5], &b).unwrap();
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let inv_norm = {
        let m = [[j[1][1] / det, -j[0][1] / det], [-j[1][0] / det, j[0][0] / det]];
        (m.iter().flatten().map(|v| v * v).sum::<f64>()).sqrt()
    };
    let sup = modes[..2].iter().map(|m| m.max_abs()).fold(0.0, f64::max);
    let bound = inv_norm * sup * (q.total_weight()).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let coeffs: Vec<f64> = (0..b.count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pert = evaluate(&b, &coeffs, &q);
        let eta = 1e-3;
        let p = pert.scaled(eta / pert.l2());
        let nu = choose_nu_flat(&base.add(&p), &b).unwrap();
        let moved = ((nu.nu[0] - qn.nu[0]).powi(2) + (nu.nu[1] - qn.nu[1]).powi(2)).sqrt();
        worst = worst.max(moved / eta);
    }
    assert!(worst <= bound * 1.1, "{worst} vs {bound}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn singular_reconstruction(coeffs in proptest::collection::vec(-0.05f64..0.05, 36), s in 0.0f64..0.25) {
        let q = full(2, 24);
        let b = singular_basis(2);
        let a = QuadraticForm::diag(&[s, 0.25 - s]);
        let c = trace_of_quadratic(&a, &q).add(&evaluate(&b, &coeffs, &q));
        let dec = decompose_singular(&c, &b).unwrap();
        let rec = Trace::sample(&dec.nu, &q)
            .add(&trace_of_quadratic(&dec.a, &q))
            .add(dec.phi_trace.as_ref().unwrap());
        prop_assert!(rec.sub(&c).l2() < 1e-8);
        prop_assert!(dec.phi.lambdas.iter().all(|l| *l > 4.0));
    }
}
