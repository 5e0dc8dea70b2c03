//! Weiss boundary-adjusted energies.
//!
//! For u on B_1: W0 = int_B |grad u|^2 - 2 int_{dB} u^2, W_tilde = W0 + int_B u,
//! W = W0 + int_B u_+. Homogeneous functions r^a c(theta) are integrated radially in closed
//! form; grid functions are integrated on a polar Gauss rule through a cubic interpolant.

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::numerics::{dot, gauss_legendre_on, tangential, unit_ball_volume, Point};
use crate::obstacle_solver::{Grid, GridFunction};
use crate::sphere_basis::{build_quadrature, Quadrature, SphericalDomain, Trace};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityConstants {
    /// Weiss energy of the singular blow-ups Q_A, A in K.
    pub theta: f64,
    /// Weiss energy of the half-space blow-ups q_nu, |nu| = 1/2.
    pub theta_plus: f64,
}

/// Theta = (tr A / 2) int_B x_d^2 = |B_1| / (8(d+2)), equivalently |dB_1| / (8d(d+2)).
pub fn density_constants(d: usize) -> DensityConstants {
    assert!(d >= 2, "dimension must be at least 2");
    let df = d as f64;
    let theta = unit_ball_volume(d) / (8.0 * (df + 2.0));
    DensityConstants { theta, theta_plus: 0.5 * theta }
}

/// r^alpha * trace(theta) on the unit ball.
#[derive(Clone, Debug)]
pub struct HomogeneousFunction {
    pub alpha: f64,
    pub trace: Trace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyMeta {
    pub d: usize,
    pub alpha: Option<f64>,
    pub resolution: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    #[serde(rename = "W0")]
    pub w0: f64,
    #[serde(rename = "W_tilde")]
    pub w_tilde: f64,
    #[serde(rename = "W")]
    pub w: f64,
    pub dirichlet_bulk: f64,
    pub boundary_l2: f64,
    pub positive_mass: f64,
    /// W0 from spectral coefficients, when the trace carries them.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w0_spectral: Option<f64>,
    pub meta: EnergyMeta,
}

impl EnergyReport {
    fn assemble(
        dirichlet_bulk: f64,
        boundary_l2: f64,
        mass: f64,
        positive_mass: f64,
        meta: EnergyMeta,
    ) -> Self {
        let w0 = dirichlet_bulk - 2.0 * boundary_l2;
        EnergyReport {
            w0,
            w_tilde: w0 + mass,
            w: w0 + positive_mass,
            dirichlet_bulk,
            boundary_l2,
            positive_mass,
            w0_spectral: None,
            meta,
        }
    }
}

/// epsilon_alpha = (alpha - 2) / (d + alpha).
pub fn eps_alpha(alpha: f64, d: usize) -> f64 {
    (alpha - 2.0) / (d as f64 + alpha)
}

/// lambda_alpha = alpha (alpha + d - 2).
pub fn lambda_alpha(alpha: f64, d: usize) -> f64 {
    alpha * (alpha + d as f64 - 2.0)
}

fn check_alpha(alpha: f64, d: usize) -> Result<()> {
    if d as f64 + 2.0 * alpha - 2.0 <= 0.0 {
        return Err(Error::InvalidInput(format!("homogeneity {alpha} gives d + 2a - 2 <= 0")));
    }
    Ok(())
}

/// W0 of the alpha-homogeneous extension of sum c_j phi_j.
pub fn w0_spectral(coeffs: &[f64], lambdas: &[f64], alpha: f64, d: usize) -> f64 {
    let den = d as f64 + 2.0 * alpha - 2.0;
    coeffs
        .iter()
        .zip(lambdas)
        .map(|(c, l)| c * c * ((alpha * alpha + l) / den - 2.0))
        .sum()
}

/// W0(alpha-homogeneous extension) - (1 - eps_alpha) W0(2-homogeneous extension), in the
/// closed form (eps_alpha / (d + 2 alpha - 2)) sum (lambda_alpha - lambda_j) c_j^2.
pub fn fourier_energy_gap(coeffs: &[f64], lambdas: &[f64], alpha: f64, d: usize) -> f64 {
    let den = d as f64 + 2.0 * alpha - 2.0;
    let la = lambda_alpha(alpha, d);
    let s: f64 = coeffs.iter().zip(lambdas).map(|(c, l)| (la - l) * c * c).sum();
    eps_alpha(alpha, d) / den * s
}

pub fn weiss_homogeneous(f: &HomogeneousFunction) -> Result<EnergyReport> {
    let d = f.trace.d();
    let a = f.alpha;
    check_alpha(a, d)?;
    let df = d as f64;
    let l2 = f.trace.l2_sq();
    let bulk = (a * a * l2 + f.trace.dirichlet()) / (df + 2.0 * a - 2.0);
    let mass = f.trace.integral() / (df + a);
    let pos = f.trace.positive_part().integral() / (df + a);
    let meta = EnergyMeta { d, alpha: Some(a), resolution: f.trace.quad.resolution };
    let mut r = EnergyReport::assemble(bulk, l2, mass, pos, meta);
    r.w0_spectral = f.trace.spectral.as_ref().map(|s| w0_spectral(&s.coeffs, &s.lambdas, a, d));
    Ok(r)
}

/// Energy of the 2-homogeneous extension r^2 c.
pub fn weiss_two_homogeneous(trace: &Trace) -> EnergyReport {
    weiss_homogeneous(&HomogeneousFunction { alpha: 2.0, trace: trace.clone() })
        .expect("alpha = 2 is always admissible")
}

/// sum_i r^{alpha_i} f_i(theta), all traces on one quadrature.
#[derive(Clone, Debug, Default)]
pub struct HomogeneousSum {
    pub terms: Vec<(f64, Trace)>,
}

impl HomogeneousSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, alpha: f64, trace: Trace) -> Self {
        self.terms.push((alpha, trace));
        self
    }

    /// Terms with equal homogeneity merged, ordered by homogeneity.
    fn grouped(&self) -> Vec<(f64, Trace)> {
        let mut out: Vec<(f64, Trace)> = Vec::new();
        for (a, t) in &self.terms {
            match out.iter_mut().find(|(b, _)| (a - *b).abs() < 1e-14) {
                Some((_, acc)) => *acc = acc.add(t),
                None => out.push((*a, t.clone())),
            }
        }
        out.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        out
    }

    pub fn boundary_trace(&self) -> Trace {
        let mut it = self.terms.iter();
        let first = it.next().expect("empty homogeneous sum").1.clone();
        it.fold(first, |acc, (_, t)| acc.add(t))
    }

    /// Value at radius rho of every node, r^{a_i} f_i summed.
    pub fn shell_values(&self, rho: f64) -> Vec<f64> {
        let n = self.terms[0].1.values.len();
        let mut v = vec![0.0; n];
        for (a, t) in &self.terms {
            let s = rho.powf(*a);
            for (o, x) in v.iter_mut().zip(&t.values) {
                *o += s * x;
            }
        }
        v
    }

    pub fn report(&self) -> Result<EnergyReport> {
        let groups = self.grouped();
        let d = groups[0].1.d();
        let df = d as f64;
        for (a, _) in &groups {
            check_alpha(*a, d)?;
        }
        let mut bulk = 0.0;
        for (ai, fi) in &groups {
            for (ak, fk) in &groups {
                bulk += (ai * ak * fi.inner(fk) + fi.grad_inner(fk)) / (ai + ak + df - 2.0);
            }
        }
        let boundary = self.boundary_trace().l2_sq();
        let mass: f64 = groups.iter().map(|(a, f)| f.integral() / (df + a)).sum();
        let pos = positive_mass(&groups, d)?;
        let meta = EnergyMeta { d, alpha: None, resolution: groups[0].1.quad.resolution };
        Ok(EnergyReport::assemble(bulk, boundary, mass, pos, meta))
    }
}

/// int_B (sum r^a f)_+ in closed form along each ray; at most two distinct homogeneities.
fn positive_mass(groups: &[(f64, Trace)], d: usize) -> Result<f64> {
    let df = d as f64;
    match groups {
        [(a, f)] => Ok(f.positive_part().integral() / (df + a)),
        [(a, fa), (b, fb)] => {
            let seg = |p: f64, q: f64, x: f64, y: f64| {
                x * (q.powf(df + a) - p.powf(df + a)) / (df + a)
                    + y * (q.powf(df + b) - p.powf(df + b)) / (df + b)
            };
            let w = &fa.quad.weights;
            let mut total = 0.0;
            for i in 0..w.len() {
                let (x, y) = (fa.values[i], fb.values[i]);
                // Sign of x + rho^{b-a} y is monotone in rho.
                let v = if x >= 0.0 && y >= 0.0 {
                    seg(0.0, 1.0, x, y)
                } else if x <= 0.0 && y <= 0.0 {
                    0.0
                } else {
                    let root = (-x / y).powf(1.0 / (b - a));
                    if x > 0.0 {
                        seg(0.0, root.min(1.0), x, y)
                    } else if root < 1.0 {
                        seg(root, 1.0, x, y)
                    } else {
                        0.0
                    }
                };
                total += w[i] * v;
            }
            Ok(total)
        }
        _ => Err(Error::InvalidInput(
            "positive mass needs at most two distinct homogeneities".into(),
        )),
    }
}

// ---------------------------------------------------------------------------------------------
// Grid functions at a scale.

const RADIAL_NODES: usize = 48;

/// Quadrature on the full sphere used for traces extracted from grid functions.
pub fn grid_sphere_quadrature(d: usize) -> Arc<Quadrature> {
    static Q2: OnceLock<Arc<Quadrature>> = OnceLock::new();
    static Q3: OnceLock<Arc<Quadrature>> = OnceLock::new();
    let make = |res| Arc::new(build_quadrature(&SphericalDomain::full(d), res).unwrap());
    match d {
        2 => Q2.get_or_init(|| make(64)).clone(),
        _ => Q3.get_or_init(|| make(16)).clone(),
    }
}

fn radial_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static R: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    R.get_or_init(|| gauss_legendre_on(0.0, 1.0, RADIAL_NODES))
}

fn rescaled(u: &GridFunction, x0: &Point, r: f64, x: &Point) -> (f64, Point) {
    let mut p = *x0;
    for k in 0..u.grid.d {
        p[k] += r * x[k];
    }
    let (v, g) = u.interpolate(&p);
    (v / (r * r), [g[0] / r, g[1] / r, g[2] / r])
}

/// W(u, x0, r) = W(u_{r,x0}) with u_{r,x0}(x) = u(x0 + r x) / r^2.
pub fn weiss_at_scale(u: &GridFunction, x0: &Point, r: f64) -> Result<EnergyReport> {
    u.grid.check_ball(x0, r)?;
    let d = u.grid.d;
    let sq = grid_sphere_quadrature(d);
    let (rho, wr) = radial_rule();
    let mut bulk = 0.0;
    let mut mass = 0.0;
    let mut pos = 0.0;
    for (rk, wk) in rho.iter().zip(wr) {
        let jac = wk * rk.powi(d as i32 - 1);
        for (x, w) in sq.nodes.iter().zip(&sq.weights) {
            let y = [rk * x[0], rk * x[1], rk * x[2]];
            let (v, g) = rescaled(u, x0, r, &y);
            let ww = jac * w;
            bulk += ww * dot(&g, &g);
            mass += ww * v;
            pos += ww * v.max(0.0);
        }
    }
    let boundary: f64 = sq
        .nodes
        .iter()
        .zip(&sq.weights)
        .map(|(x, w)| w * rescaled(u, x0, r, x).0.powi(2))
        .sum();
    let meta = EnergyMeta { d, alpha: None, resolution: u.grid.n };
    Ok(EnergyReport::assemble(bulk, boundary, mass, pos, meta))
}

/// Trace of u_{r,x0} on the unit sphere, with tangential gradients.
pub fn boundary_trace(u: &GridFunction, x0: &Point, r: f64) -> Result<Trace> {
    u.grid.check_ball(x0, r)?;
    let sq = grid_sphere_quadrature(u.grid.d);
    let (values, grads) = sq
        .nodes
        .iter()
        .map(|x| {
            let (v, g) = rescaled(u, x0, r, x);
            (v, tangential(x, &g))
        })
        .unzip();
    Ok(Trace { quad: sq, values, grads, spectral: None })
}

/// u_{r,x0} resampled on the reference grid [-1, 1]^d with the same number of points.
pub fn rescale(u: &GridFunction, x0: &Point, r: f64) -> Result<GridFunction> {
    u.grid.check_ball(x0, r)?;
    let reference = Grid::unit(u.grid.d, u.grid.n)?;
    Ok(GridFunction::from_fn(reference, |x| rescaled(u, x0, r, x).0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityTerms {
    /// ((d+2)/r) [W(z_r) - W(u_r)], z_r the 2-homogeneous extension of the trace of u_r.
    pub scale_term: f64,
    /// (1/r) int_{dB_1} |x . grad u_r - 2 u_r|^2.
    pub rotation_defect: f64,
}

impl MonotonicityTerms {
    pub fn derivative(&self) -> f64 {
        self.scale_term + self.rotation_defect
    }
}

pub fn monotonicity_terms(u: &GridFunction, x0: &Point, r: f64) -> Result<MonotonicityTerms> {
    let d = u.grid.d;
    let w_u = weiss_at_scale(u, x0, r)?.w;
    let w_z = weiss_two_homogeneous(&boundary_trace(u, x0, r)?).w;
    let sq = grid_sphere_quadrature(d);
    let defect: f64 = sq
        .nodes
        .iter()
        .zip(&sq.weights)
        .map(|(x, w)| {
            let (v, g) = rescaled(u, x0, r, x);
            w * (dot(x, &g) - 2.0 * v).powi(2)
        })
        .sum();
    Ok(MonotonicityTerms {
        scale_term: (d as f64 + 2.0) / r * (w_z - w_u),
        rotation_defect: defect / r,
    })
}

/// Centered difference of r -> W(u, x0, r).
pub fn weiss_derivative_fd(u: &GridFunction, x0: &Point, r: f64, dr: f64) -> Result<f64> {
    let hi = weiss_at_scale(u, x0, r + dr)?.w;
    let lo = weiss_at_scale(u, x0, r - dr)?.w;
    Ok((hi - lo) / (2.0 * dr))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    #[test]
    fn density_constants_match_closed_forms() {
        let c2 = density_constants(2);
        assert!((c2.theta - PI / 32.0).abs() < 1e-15);
        assert!((c2.theta_plus - PI / 64.0).abs() < 1e-15);
        let c3 = density_constants(3);
        assert!((c3.theta - PI / 30.0).abs() < 1e-15);
        assert!((c3.theta / c3.theta_plus - 2.0).abs() < 1e-15);
    }

    #[test]
    fn gap_for_listed_example() {
        let g = fourier_energy_gap(&[1.0], &[12.0], 2.5, 3);
        assert!((g - (-(1.0 / 11.0) * 3.25 / 6.0)).abs() < 1e-14);
        assert_eq!(fourier_energy_gap(&[1.0], &[9.0], 3.0, 2), 0.0);
    }
}
