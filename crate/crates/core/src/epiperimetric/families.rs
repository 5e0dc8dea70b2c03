//! Sampled trace families for the inequality suites.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::NONNEG_SLACK;
use crate::decompose::{trace_of_quadratic, HalfSquareProfile, QuadraticForm};
use crate::energy::{density_constants, weiss_two_homogeneous};
use crate::numerics::{dot, norm, Point};
use crate::sphere_basis::{
    build_adapted_quadrature, build_basis, build_quadrature, evaluate, project, BasisExpansion,
    LinearCombination, Quadrature, SpectralBasis, SphereField, SphericalDomain, Trace,
};
use crate::{Error, Result};

/// Perturbation sizes t of the flat family q + t (cap modes).
pub const FLAT_AMPLITUDES: [f64; 3] = [1e-3, 1e-2, 5e-2];

/// Band limit for the singular suites: 36 Fourier modes on the circle, degree <= 8 on S^2.
pub fn singular_basis(d: usize) -> Result<SpectralBasis> {
    build_basis(&SphericalDomain::full(d), if d == 2 { 36 } else { 81 })
}

pub fn singular_quadrature(d: usize) -> Result<Arc<Quadrature>> {
    Ok(Arc::new(build_quadrature(&SphericalDomain::full(d), if d == 2 { 64 } else { 24 })?))
}

/// Orthogonal projection onto the span of `basis`, carrying exact gradients.
pub fn band_limit(t: &Trace, basis: &SpectralBasis) -> Result<Trace> {
    let (coeffs, _) = project(t, basis)?;
    Ok(evaluate(basis, &coeffs, &t.quad))
}

/// Sweeps of clip-and-project before the final constant lift.
const CLIP_SWEEPS: usize = 10;

/// A band-limited trace close to max(f, 0) and nonnegative at the nodes: alternate clipping and
/// projection, then lift by the remaining undershoot through the constant mode.
pub fn nonneg_band_limited(f: &Trace, basis: &SpectralBasis) -> Result<Trace> {
    let mut c = f.clone();
    for _ in 0..CLIP_SWEEPS {
        c = band_limit(&c.positive_part(), basis)?;
    }
    let undershoot = -c.min_value();
    if undershoot <= 0.0 {
        return Ok(c);
    }
    let (mut coeffs, _) = project(&c, basis)?;
    let k = basis.lambdas().iter().position(|l| l.abs() < 1e-12).expect("full-sphere basis has a constant mode");
    let phi0 = basis.eval_modes(&c.quad.nodes[0])[k].0;
    coeffs[k] += undershoot / phi0;
    Ok(evaluate(basis, &coeffs, &c.quad))
}

fn unit_coeffs(rng: &mut ChaCha8Rng, lambdas: &[f64]) -> Vec<f64> {
    let mut c: Vec<f64> = lambdas.iter().map(|&l| rng.gen_range(-1.0..1.0) / (1.0 + l).sqrt()).collect();
    let n = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    c.iter_mut().for_each(|v| *v /= n);
    c
}

// ---------------------------------------------------------------------------------------------
// Flat family.

#[derive(Clone)]
pub struct FlatSample {
    pub id: usize,
    pub t: f64,
    /// Cap coefficients of the perturbation (before the positivity shift).
    pub coeffs: Vec<f64>,
    pub field: Arc<LinearCombination>,
}

/// q_{e_d/2} + t (psi + kappa phi_1), with psi = sum coeffs_j phi_j on the cap and kappa the
/// smallest multiple of the first cap mode that makes psi + kappa phi_1 nonnegative (times 1.25).
pub fn admissible_flat_field(cap_basis: &Arc<SpectralBasis>, coeffs: &[f64], t: f64) -> Result<LinearCombination> {
    let dom = cap_basis.domain;
    let d = dom.d;
    let probe = build_adapted_quadrature(&dom, 48, &dom.boundary_section().into_iter().collect::<Vec<_>>())?;
    let psi = BasisExpansion::new(cap_basis.clone(), coeffs.to_vec());
    let mut first = vec![0.0; cap_basis.count()];
    first[0] = 1.0;
    let phi1 = BasisExpansion::new(cap_basis.clone(), first.clone());
    let mut pole = [0.0; 3];
    pole[d - 1] = 1.0;
    if phi1.eval(&pole).0 < 0.0 {
        first[0] = -1.0;
    }
    let phi1 = BasisExpansion::new(cap_basis.clone(), first);
    let mut kappa: f64 = 0.0;
    for x in &probe.nodes {
        let p = phi1.eval(x).0;
        if p > 1e-10 {
            kappa = kappa.max(-psi.eval(x).0 / p);
        }
    }
    Ok(LinearCombination::new()
        .with(1.0, Arc::new(HalfSquareProfile::standard(d)))
        .with(t, Arc::new(psi))
        .with(t * 1.25 * kappa, Arc::new(phi1)))
}

/// `n` admissible flat traces; perturbations use cap modes beyond the first d.
pub fn sample_flat(cap_basis: &Arc<SpectralBasis>, n: usize, seed: u64) -> Result<Vec<FlatSample>> {
    let d = cap_basis.domain.d;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lambdas = cap_basis.lambdas();
    let mut out = Vec::with_capacity(n);
    for id in 0..n {
        let t = FLAT_AMPLITUDES[id % FLAT_AMPLITUDES.len()];
        let mut coeffs = unit_coeffs(&mut rng, &lambdas);
        coeffs[..d].iter_mut().for_each(|c| *c = 0.0);
        let nrm = coeffs.iter().map(|v| v * v).sum::<f64>().sqrt();
        coeffs.iter_mut().for_each(|v| *v /= nrm);
        let field = Arc::new(admissible_flat_field(cap_basis, &coeffs, t)?);
        out.push(FlatSample { id, t, coeffs, field });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------------------------
// Singular families.

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SingularFamily {
    /// Q_A + t psi with A in the interior of K and psi a single mode above 2d.
    AInterior,
    /// Band-limited, nonnegative version of Q_A + t psi with A on the boundary of K.
    ABoundary,
    /// Band-limited, nonnegative version of max(Q_A, 0) with A indefinite, trace 1/4.
    B,
}

impl SingularFamily {
    pub const ALL: [SingularFamily; 3] = [SingularFamily::AInterior, SingularFamily::ABoundary, SingularFamily::B];

    pub fn name(&self) -> &'static str {
        match self {
            SingularFamily::AInterior => "a-int",
            SingularFamily::ABoundary => "a-bdry",
            SingularFamily::B => "b",
        }
    }

    fn salt(&self) -> u64 {
        match self {
            SingularFamily::AInterior => 0x11,
            SingularFamily::ABoundary => 0x22,
            SingularFamily::B => 0x33,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SingularSample {
    pub id: usize,
    pub family: SingularFamily,
    pub a: QuadraticForm,
    pub t: f64,
    pub trace: Trace,
}

fn random_rotation(rng: &mut ChaCha8Rng, d: usize) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::with_capacity(d);
    while out.len() < d {
        let mut v = [0.0; 3];
        for c in v.iter_mut().take(d) {
            *c = rng.gen_range(-1.0..1.0);
        }
        for e in &out {
            let p = dot(&v, e);
            for k in 0..3 {
                v[k] -= p * e[k];
            }
        }
        let n = norm(&v);
        if n > 1e-3 {
            out.push([v[0] / n, v[1] / n, v[2] / n]);
        }
    }
    out
}

fn eigenvalues_for(family: SingularFamily, rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let spread = |rng: &mut ChaCha8Rng, m: usize, total: f64, floor: f64| -> Vec<f64> {
        let w: Vec<f64> = (0..m).map(|_| rng.gen_range(floor..1.0)).collect();
        let s: f64 = w.iter().sum();
        w.iter().map(|x| total * x / s).collect()
    };
    match family {
        SingularFamily::AInterior => spread(rng, d, 0.25, 0.3),
        SingularFamily::ABoundary => {
            let zeros = if d == 3 && rng.gen_bool(0.5) { 2 } else { 1 };
            let mut v = vec![0.0; zeros];
            v.extend(spread(rng, d - zeros, 0.25, 0.3));
            v
        }
        SingularFamily::B => {
            let a = rng.gen_range(0.002..0.03);
            let mut v = vec![-a];
            v.extend(spread(rng, d - 1, 0.25 + a, 0.3));
            v
        }
    }
}

/// Traces of one singular family that meet the hypotheses of the singular inequality:
/// nonnegative up to NONNEG_SLACK and 0 <= W(z) - Theta <= 1. Candidates failing them are
/// redrawn.
pub fn sample_singular(family: SingularFamily, d: usize, n: usize, seed: u64) -> Result<Vec<SingularSample>> {
    let basis = singular_basis(d)?;
    let quad = singular_quadrature(d)?;
    let lambdas = basis.lambdas();
    let two_d = 2.0 * d as f64;
    let high: Vec<usize> = (0..lambdas.len()).filter(|&j| lambdas[j] > two_d + 1e-9).collect();
    let theta = density_constants(d).theta;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ family.salt().wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n {
        attempts += 1;
        if attempts > 50 * n + 50 {
            return Err(Error::NoConvergence {
                what: "singular trace sampler",
                iterations: attempts,
                residual: out.len() as f64,
            });
        }
        let vals = eigenvalues_for(family, &mut rng, d);
        let vecs = random_rotation(&mut rng, d);
        let a = QuadraticForm::from_eigen(d, &vals, &vecs);
        let qa = trace_of_quadratic(&a, &quad);
        let mut psi_c = vec![0.0; lambdas.len()];
        psi_c[high[rng.gen_range(0..high.len())]] = 1.0;
        let psi = evaluate(&basis, &psi_c, &quad);
        let mut t = FLAT_AMPLITUDES[out.len() % 3];
        let trace = match family {
            SingularFamily::AInterior => {
                let lmin = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                t = t.min(0.5 * lmin / psi.max_abs());
                qa.add(&psi.scaled(t))
            }
            SingularFamily::ABoundary => nonneg_band_limited(&qa.add(&psi.scaled(t)), &basis)?,
            SingularFamily::B => {
                t = 0.0;
                nonneg_band_limited(&qa, &basis)?
            }
        };
        if trace.min_value() < -NONNEG_SLACK {
            continue;
        }
        let excess = weiss_two_homogeneous(&trace).w - theta;
        if !(0.0..=1.0).contains(&excess) {
            continue;
        }
        out.push(SingularSample { id: out.len(), family, a, t, trace });
    }
    Ok(out)
}
