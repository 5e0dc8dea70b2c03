//! Explicit competitors for the epiperimetric inequalities and the identities behind them.
//!
//! Flat points: h = q_nu + r^alpha (c - q_nu) with alpha = 5/2 and nu fixed by the cap moments.
//! Singular points: h = q_nu + Q_B + r^alpha psi with B the nonnegative replacement of A and
//! psi = (Q_A - Q_B) + phi.

mod families;
mod improvement;
mod sharpness;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use families::{
    admissible_flat_field, band_limit, nonneg_band_limited, sample_flat, sample_singular, singular_basis, singular_quadrature,
    FlatSample, SingularFamily, SingularSample, FLAT_AMPLITUDES,
};
pub use improvement::{improvement_check, improvement_envelope, improvement_gamma, ImprovementReport, IMPROVEMENT_DELTA};
pub use sharpness::{sharpness_row, sharpness_scan, SharpnessRow, SharpnessTable};

use crate::decompose::{
    choose_nu_flat, decompose_singular, nonneg_replacement, trace_of_quadratic, HalfSquareProfile,
    QuadraticForm, SingularDecomposition,
};
use crate::energy::{
    density_constants, eps_alpha, fourier_energy_gap, weiss_homogeneous, weiss_two_homogeneous,
    HomogeneousFunction, HomogeneousSum,
};
use crate::sphere_basis::{
    build_adapted_quadrature, merge_kinks, project, SpectralBasis, SphereField, SphericalDomain, Trace,
};
use crate::{Error, Result};

/// Slack for node values of sampled traces that are nonnegative only up to re-projection.
pub const NONNEG_SLACK: f64 = 1e-6;

/// Radii at which competitor shells are checked for nonnegativity.
const SHELL_RADII: usize = 24;

/// Homogeneity of the flat competitor.
pub const FLAT_ALPHA: f64 = 2.5;

/// Exponent gamma of the singular inequality.
pub fn theorem_gamma(d: usize) -> f64 {
    if d == 2 {
        0.0
    } else {
        (d as f64 - 1.0) / (d as f64 + 3.0)
    }
}

/// Bound on (W(z) - Theta) / |grad phi|^2.
pub fn c4(d: usize) -> f64 {
    1.0 + 4.0 * d as f64
}

/// Largest eps_alpha allowed on the singular path (alpha <= 5/2).
pub fn eps_alpha_max(d: usize) -> f64 {
    eps_alpha(FLAT_ALPHA, d)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompetitorParams {
    pub alpha: f64,
    pub eps_alpha: f64,
    pub eps: f64,
    pub gamma: f64,
    #[serde(rename = "C4")]
    pub c4: f64,
}

impl CompetitorParams {
    pub fn flat(d: usize) -> Self {
        let e = eps_alpha(FLAT_ALPHA, d);
        CompetitorParams { alpha: FLAT_ALPHA, eps_alpha: e, eps: e, gamma: 0.0, c4: c4(d) }
    }

    /// eps_alpha = eps (C4 |grad phi|^2)^gamma and alpha = (2 + d eps_alpha) / (1 - eps_alpha).
    pub fn singular(d: usize, eps: f64, grad_phi_sq: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
        }
        let gamma = theorem_gamma(d);
        let ea = eps * (c4(d) * grad_phi_sq).powf(gamma);
        let alpha = (2.0 + d as f64 * ea) / (1.0 - ea);
        if !(ea < 1.0) || alpha > FLAT_ALPHA + 1e-12 {
            return Err(Error::Precondition(format!(
                "eps = {eps} gives alpha = {alpha:.6} > 5/2; eps must be smaller"
            )));
        }
        Ok(CompetitorParams { alpha, eps_alpha: ea, eps, gamma, c4: c4(d) })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpiReport {
    #[serde(rename = "W_z")]
    pub w_z: f64,
    #[serde(rename = "W_h")]
    pub w_h: f64,
    pub theta_ref: f64,
    pub gain: f64,
    pub required_gain: f64,
    pub satisfied: bool,
    /// Largest eps for which the inequality holds on this trace; None when W(z) = theta_ref
    /// and every eps works.
    pub empirical_eps: Option<f64>,
    /// Smallest competitor value over the checked shells.
    pub h_min: f64,
}

impl EpiReport {
    fn new(w_z: f64, w_h: f64, theta_ref: f64, required_gain: f64, h_min: f64) -> Self {
        let gain = w_z - w_h;
        EpiReport {
            w_z,
            w_h,
            theta_ref,
            gain,
            required_gain,
            satisfied: gain >= required_gain - 1e-12,
            empirical_eps: None,
            h_min,
        }
    }
}

fn shell_minimum(h: &HomogeneousSum) -> f64 {
    (1..=SHELL_RADII)
        .map(|i| {
            let rho = i as f64 / SHELL_RADII as f64;
            h.shell_values(rho).into_iter().fold(f64::INFINITY, f64::min)
        })
        .fold(f64::INFINITY, f64::min)
}

fn w0(alpha: f64, t: &Trace) -> Result<f64> {
    Ok(weiss_homogeneous(&HomogeneousFunction { alpha, trace: t.clone() })?.w0)
}

/// W0(r^alpha phi) - (1 - eps_alpha) W0(r^2 phi) by quadrature.
pub fn homogeneity_gap(phi: &Trace, alpha: f64) -> Result<f64> {
    let d = phi.d();
    Ok(w0(alpha, phi)? - (1.0 - eps_alpha(alpha, d)) * w0(2.0, phi)?)
}

// ---------------------------------------------------------------------------------------------
// Flat points.

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlatCompetitor {
    pub nu: HalfSquareProfile,
    pub params: CompetitorParams,
    /// W0(r^alpha phi) - (1 - eps_alpha) W0(r^2 phi), by quadrature.
    pub gap_direct: f64,
    /// The same from the cap-mode coefficients of phi.
    pub gap_spectral: f64,
    /// Cap coefficients of phi; the first d vanish by the choice of nu.
    pub phi_coeffs: Vec<f64>,
    pub report: EpiReport,
}

/// Flat-point competitor for a nonnegative trace supported in the cap of `cap_basis`.
pub fn flat_competitor(c: &dyn SphereField, cap_basis: &SpectralBasis, resolution: usize) -> Result<FlatCompetitor> {
    let cap = cap_basis.domain;
    let d = cap.d;
    let full = SphericalDomain::full(d);
    let edge: Vec<_> = cap.boundary_section().into_iter().collect();
    let kinks = merge_kinks(&[c.kinks(), edge.clone()]);
    let quad = Arc::new(build_adapted_quadrature(&full, resolution, &kinks)?);
    let ct = Trace::sample(c, &quad);
    for (x, v) in quad.nodes.iter().zip(&ct.values) {
        if *v < -1e-12 {
            return Err(Error::Precondition(format!("trace is negative ({v:.3e}) at {:?}", &x[..d])));
        }
        if !cap.contains(x) && v.abs() > 1e-12 {
            return Err(Error::Precondition("trace does not vanish outside the cap".into()));
        }
    }
    let nu = choose_nu_flat(&ct, cap_basis)?;

    let kinks = merge_kinks(&[c.kinks(), edge, nu.kinks()]);
    let quad = Arc::new(build_adapted_quadrature(&full, resolution, &kinks)?);
    let ct = Trace::sample(c, &quad);
    let qt = Trace::sample(&nu, &quad);
    let phi = ct.sub(&qt);
    let params = CompetitorParams::flat(d);

    let gap_direct = homogeneity_gap(&phi, params.alpha)?;
    let (phi_coeffs, _) = project(&phi, cap_basis)?;
    let gap_spectral = fourier_energy_gap(&phi_coeffs, &cap_basis.lambdas(), params.alpha, d);

    let theta_plus = density_constants(d).theta_plus;
    let w_z = weiss_two_homogeneous(&ct).w;
    let h = HomogeneousSum::new().with(2.0, qt).with(params.alpha, phi);
    let w_h = h.report()?.w;
    let mut report = EpiReport::new(w_z, w_h, theta_plus, params.eps * (w_z - theta_plus), shell_minimum(&h));
    if w_z - theta_plus > 1e-15 {
        report.empirical_eps = Some(report.gain / (w_z - theta_plus));
    }
    Ok(FlatCompetitor { nu, params, gap_direct, gap_spectral, phi_coeffs, report })
}

/// Two-sided check of the flat decomposition identity. Returns
/// |[W~(q_nu + phi~) - Th+ - (1-e)(W~(q_nu + phi) - Th+)] - [W0(phi~) - (1-e)W0(phi)]
///  + e (c0 - 1)^2 Th+|, with e = eps_alpha and c0 = 4|nu|^2.
pub fn flat_identity_check(nu: &HalfSquareProfile, phi: &Trace, alpha: f64) -> Result<f64> {
    let d = phi.d();
    let tp = density_constants(d).theta_plus;
    let e = eps_alpha(alpha, d);
    let q = Trace::sample(nu, &phi.quad);
    let lhs_h = HomogeneousSum::new().with(2.0, q.clone()).with(alpha, phi.clone()).report()?.w_tilde;
    let lhs_z = weiss_two_homogeneous(&q.add(phi)).w_tilde;
    let lhs = (lhs_h - tp) - (1.0 - e) * (lhs_z - tp);
    let rhs = homogeneity_gap(phi, alpha)?;
    let c0 = nu.c0();
    Ok((lhs - rhs + e * (c0 - 1.0).powi(2) * tp).abs())
}

// ---------------------------------------------------------------------------------------------
// Singular points.

/// Everything about a singular trace that does not depend on eps.
#[derive(Clone, Debug)]
pub struct SingularSetup {
    pub d: usize,
    pub decomposition: SingularDecomposition,
    pub b: QuadraticForm,
    /// q_nu + Q_B.
    pub base: Trace,
    /// (Q_A - Q_B) + phi.
    pub psi: Trace,
    pub grad_phi_sq: f64,
    pub w_z: f64,
    pub theta: f64,
}

impl SingularSetup {
    pub fn new(c: &Trace, basis: &SpectralBasis) -> Result<Self> {
        let d = c.d();
        let min = c.min_value();
        if min < -NONNEG_SLACK {
            return Err(Error::Precondition(format!("trace is negative ({min:.3e})")));
        }
        let theta = density_constants(d).theta;
        let w_z = weiss_two_homogeneous(c).w;
        let excess = w_z - theta;
        if !(-1e-12..=1.0).contains(&excess) {
            return Err(Error::Precondition(format!("W(z) - Theta = {excess:.3e} outside [0, 1]")));
        }
        let dec = decompose_singular(c, basis)?;
        let b = nonneg_replacement(&dec.a)?;
        let phi = dec.phi_trace.clone().expect("decomposition keeps phi");
        let qa_minus_qb = trace_of_quadratic(&dec.a.combine(1.0, &b, -1.0), &c.quad);
        let psi = qa_minus_qb.add(&phi);
        let base = Trace::sample(&dec.nu, &c.quad).add(&trace_of_quadratic(&b, &c.quad));
        Ok(SingularSetup { d, grad_phi_sq: phi.dirichlet(), decomposition: dec, b, base, psi, w_z, theta })
    }

    /// W(h) and the shell minimum of h for the competitor built with `eps`.
    pub fn competitor_energy(&self, eps: f64) -> Result<(CompetitorParams, f64, f64)> {
        let params = CompetitorParams::singular(self.d, eps, self.grad_phi_sq)?;
        let h = HomogeneousSum::new().with(2.0, self.base.clone()).with(params.alpha, self.psi.clone());
        Ok((params, h.report()?.w, shell_minimum(&h)))
    }

    fn excess(&self) -> f64 {
        (self.w_z - self.theta).max(0.0)
    }

    /// eps (W(z) - Theta)^{1 + gamma}.
    pub fn required_gain(&self, eps: f64) -> f64 {
        eps * self.excess().powf(1.0 + theorem_gamma(self.d))
    }

    /// Largest eps in (0, eps_max] for which the inequality holds, by a dyadic scan from the top
    /// followed by bisection. eps_max is the value that pushes alpha to 5/2.
    pub fn empirical_eps(&self) -> Result<Option<f64>> {
        if self.excess() <= 1e-15 {
            return Ok(None);
        }
        let gamma = theorem_gamma(self.d);
        let top = eps_alpha_max(self.d) / (c4(self.d) * self.grad_phi_sq).powf(gamma) * (1.0 - 1e-12);
        if !top.is_finite() {
            return Ok(None);
        }
        let holds = |eps: f64| -> Result<bool> {
            let (_, w_h, _) = self.competitor_energy(eps)?;
            Ok(self.w_z - w_h >= self.required_gain(eps) - 1e-15)
        };
        if holds(top)? {
            return Ok(Some(top));
        }
        let mut hi = top;
        let mut lo = top;
        for _ in 0..60 {
            lo *= 0.5;
            if holds(lo)? {
                break;
            }
            hi = lo;
        }
        if !holds(lo)? {
            return Ok(Some(0.0));
        }
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            if holds(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Some(lo))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SingularCompetitor {
    pub decomposition: SingularDecomposition,
    #[serde(rename = "B")]
    pub b: QuadraticForm,
    pub params: CompetitorParams,
    pub grad_phi_sq: f64,
    pub report: EpiReport,
}

/// Singular-point competitor for trace `c` with the dimensional constant `eps`.
pub fn singular_competitor(c: &Trace, basis: &SpectralBasis, eps: f64) -> Result<SingularCompetitor> {
    let setup = SingularSetup::new(c, basis)?;
    let (params, w_h, h_min) = setup.competitor_energy(eps)?;
    let mut report = EpiReport::new(setup.w_z, w_h, setup.theta, setup.required_gain(eps), h_min);
    report.empirical_eps = setup.empirical_eps()?;
    Ok(SingularCompetitor {
        decomposition: setup.decomposition,
        b: setup.b,
        params,
        grad_phi_sq: setup.grad_phi_sq,
        report,
    })
}

/// Two-sided check of the singular decomposition identity with b = 4 tr B, c0 = 4|nu|^2:
/// W~(q_nu + Q_B + psi~) - Th - (1-e)(W~(q_nu + Q_B + psi) - Th)
///   = -(e/2)((1-b-c0)^2 + (1-b)^2) Th + W0(psi~) - (1-e) W0(psi).
pub fn singular_identity_check(nu: &HalfSquareProfile, b: &QuadraticForm, psi: &Trace, alpha: f64) -> Result<f64> {
    let d = psi.d();
    let th = density_constants(d).theta;
    let e = eps_alpha(alpha, d);
    let base = Trace::sample(nu, &psi.quad).add(&trace_of_quadratic(b, &psi.quad));
    let lhs_h = HomogeneousSum::new().with(2.0, base.clone()).with(alpha, psi.clone()).report()?.w_tilde;
    let lhs_z = weiss_two_homogeneous(&base.add(psi)).w_tilde;
    let lhs = (lhs_h - th) - (1.0 - e) * (lhs_z - th);
    let bb = 4.0 * b.trace();
    let c0 = nu.c0();
    let bracket = (1.0 - bb - c0).powi(2) + (1.0 - bb).powi(2);
    let rhs = -0.5 * e * bracket * th + homogeneity_gap(psi, alpha)?;
    Ok((lhs - rhs).abs())
}

/// (sum_{j<=k} a_j^2 / |grad phi|^{2(1-gamma)}, (W(z) - Theta) / |grad phi|^2), where a_j are
/// the magnitudes of the negative eigenvalues of A and z is the 2-homogeneous extension of c.
pub fn higher_mode_controls(c: &Trace, dec: &SingularDecomposition) -> Result<(f64, f64)> {
    let d = c.d();
    let phi = dec
        .phi_trace
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("decomposition without nodal phi".into()))?;
    let g = phi.dirichlet();
    let (vals, _) = dec.a.eigen();
    let neg: f64 = vals.iter().filter(|v| **v < 0.0).map(|v| v * v).sum();
    let excess = weiss_two_homogeneous(c).w - density_constants(d).theta;
    if g <= 1e-28 {
        if neg > 1e-24 {
            return Err(Error::Precondition(
                "phi vanishes while A has negative eigenvalues; the trace cannot be nonnegative".into(),
            ));
        }
        return Ok((0.0, 0.0));
    }
    let gamma = theorem_gamma(d);
    Ok((neg / g.powf(1.0 - gamma), excess / g))
}
