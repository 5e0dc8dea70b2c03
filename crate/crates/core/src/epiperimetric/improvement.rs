//! Control of the negative eigenvalues of A by the higher modes, with the improved exponents.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::numerics::{dot, tangential, Point};
use crate::sphere_basis::{build_adapted_quadrature, PlaneSection, SphericalDomain, Trace};
use crate::{Error, Result};

/// Upper bound on sum a_j^2 (j <= k) under which the estimate is claimed.
pub const IMPROVEMENT_DELTA: f64 = 0.01;

/// gamma_k = 0 for k = 0 and k = d - 1, (d - k)/(d - k + 4) otherwise.
pub fn improvement_gamma(d: usize, k: usize) -> Result<f64> {
    if k >= d {
        return Err(Error::InvalidInput(format!("k = {k} must be smaller than d = {d}")));
    }
    if k == 0 || k == d - 1 {
        return Ok(0.0);
    }
    let m = (d - k) as f64;
    Ok(m / (m + 4.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImprovementReport {
    pub gamma_k: f64,
    pub sum_a_sq: f64,
    pub grad_phi_sq: f64,
    /// Smallest C with sum a_j^2 <= C |grad phi|^{2(1 - gamma_k)} for this input.
    pub constant: f64,
}

/// -Q_A for the diagonal form with a_1..a_k entering negatively: sum_{j<=k} a_j x_j^2 - sum_{j>k} a_j x_j^2.
fn minus_qa(a: &[f64], k: usize, x: &Point) -> f64 {
    a.iter()
        .enumerate()
        .map(|(j, aj)| if j < k { aj * x[j] * x[j] } else { -aj * x[j] * x[j] })
        .sum()
}

fn check_amplitudes(d: usize, k: usize, a: &[f64]) -> Result<f64> {
    if a.len() != d {
        return Err(Error::InvalidInput(format!("expected {d} amplitudes, got {}", a.len())));
    }
    if a[..k].iter().any(|v| !(*v > 0.0)) || a[k..].iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Precondition("need a_j > 0 for j <= k and 0 <= a_j <= 1 for j > k".into()));
    }
    let s: f64 = a[..k].iter().map(|v| v * v).sum();
    if s > IMPROVEMENT_DELTA {
        return Err(Error::Precondition(format!("sum a_j^2 = {s:.3e} exceeds delta = {IMPROVEMENT_DELTA}")));
    }
    Ok(s)
}

/// Checks the hypotheses at the nodes of phi (zero mean, phi >= -Q_A where x . nu > 0, small a)
/// and reports the constant of the estimate. The form is taken diagonal in the coordinate axes.
pub fn improvement_check(d: usize, k: usize, a: &[f64], phi: &Trace, nu: &Point) -> Result<ImprovementReport> {
    let gamma_k = improvement_gamma(d, k)?;
    let sum_a_sq = check_amplitudes(d, k, a)?;
    if phi.d() != d {
        return Err(Error::InvalidInput("phi lives on a sphere of another dimension".into()));
    }
    let mean = phi.integral();
    if mean.abs() > 1e-9 * phi.l1().max(1.0) {
        return Err(Error::Precondition(format!("phi has mean {mean:.3e}")));
    }
    for (x, v) in phi.quad.nodes.iter().zip(&phi.values) {
        if dot(x, nu) > 1e-12 && *v < minus_qa(a, k, x) - 1e-10 {
            return Err(Error::Precondition(format!("phi < -Q_A at {:?}", &x[..d])));
        }
    }
    let grad_phi_sq = phi.dirichlet();
    let constant = if sum_a_sq == 0.0 {
        0.0
    } else if grad_phi_sq == 0.0 {
        f64::INFINITY
    } else {
        sum_a_sq / grad_phi_sq.powf(1.0 - gamma_k)
    };
    Ok(ImprovementReport { gamma_k, sum_a_sq, grad_phi_sq, constant })
}

/// The smallest admissible phi, up to a mean correction: (-Q_A)_+ minus a multiple of
/// (-x . nu)_+^2, which vanishes on the half-sphere where the constraint acts. Returns phi and
/// nu. The quadrature is split along the zero set of -Q_A when that set is a pair of planes
/// (d = 2, or d = 3 with equal amplitudes in the larger group), with nu along their normal.
pub fn improvement_envelope(d: usize, k: usize, a: &[f64], resolution: usize) -> Result<(Trace, Point)> {
    improvement_gamma(d, k)?;
    check_amplitudes(d, k, a)?;
    let mut kinks = Vec::new();
    let mut nu = [0.0; 3];
    nu[0] = 1.0;
    if d == 2 && k == 1 && a[1] > 0.0 {
        // a1 x^2 = a2 y^2.
        let t = (a[0] / a[1]).sqrt();
        for s in [1.0, -1.0] {
            let n = (1.0 + t * t).sqrt();
            kinks.push(PlaneSection::new([-s * t / n, 1.0 / n, 0.0], 0.0));
        }
    } else if d == 3 && k == 1 && (a[1] - a[2]).abs() < 1e-15 && a[1] > 0.0 {
        // a1 x1^2 = a2 (1 - x1^2).
        let s = (a[1] / (a[0] + a[1])).sqrt();
        kinks.push(PlaneSection::new([1.0, 0.0, 0.0], s));
        kinks.push(PlaneSection::new([1.0, 0.0, 0.0], -s));
    } else if d == 3 && k == 2 && (a[0] - a[1]).abs() < 1e-15 {
        // a1 (1 - x3^2) = a3 x3^2.
        nu = [0.0, 0.0, 1.0];
        let s = (a[0] / (a[0] + a[2])).sqrt();
        kinks.push(PlaneSection::new(nu, s));
        kinks.push(PlaneSection::new(nu, -s));
    }
    kinks.push(PlaneSection::new(nu, 0.0));
    let quad = Arc::new(build_adapted_quadrature(&SphericalDomain::full(d), resolution, &kinks)?);
    let n = quad.len();
    let mut env = Trace::zeros(&quad);
    let mut bump = Trace::zeros(&quad);
    for i in 0..n {
        let x = quad.nodes[i];
        let v = minus_qa(a, k, &x);
        if v > 0.0 {
            env.values[i] = v;
            let mut g = [0.0; 3];
            for j in 0..d {
                g[j] = if j < k { 2.0 * a[j] * x[j] } else { -2.0 * a[j] * x[j] };
            }
            env.grads[i] = tangential(&x, &g);
        }
        let s = -dot(&x, &nu);
        if s > 0.0 {
            bump.values[i] = s * s;
            bump.grads[i] = tangential(&x, &[-2.0 * s * nu[0], -2.0 * s * nu[1], -2.0 * s * nu[2]]);
        }
    }
    let m = env.integral() / bump.integral();
    Ok((env.combine(1.0, &bump, -m), nu))
}
