//! Quadrature and Laplace-Beltrami Dirichlet eigenbases on S^{d-1}, the half-sphere
//! {x_d > 0} and caps {x_d > -delta}, for d = 2, 3.

mod cap;
mod field;
mod harmonics;
mod quadrature;

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use cap::PolarProfile;
pub use field::{
    merge_kinks, same_section, BasisExpansion, LinearCombination, PositivePart, Spectral,
    SphereField, Trace,
};
pub use harmonics::{fourier_modes, real_harmonics};
pub use quadrature::{build_adapted_quadrature, build_quadrature, PlaneSection, Quadrature};

use crate::numerics::{sphere_area, Point};
use crate::{Error, Result};

/// Largest accepted cap half-width.
pub const CAP_DELTA_MAX: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DomainKind {
    FullSphere,
    HalfSphere,
    Cap,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphericalDomain {
    pub kind: DomainKind,
    pub d: usize,
    pub cap_delta: f64,
}

impl SphericalDomain {
    pub fn full(d: usize) -> Self {
        Self { kind: DomainKind::FullSphere, d, cap_delta: 0.0 }
    }

    pub fn half(d: usize) -> Self {
        Self { kind: DomainKind::HalfSphere, d, cap_delta: 0.0 }
    }

    pub fn cap(d: usize, delta: f64) -> Self {
        Self { kind: DomainKind::Cap, d, cap_delta: delta }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d != 2 && self.d != 3 {
            return Err(Error::UnsupportedDimension(self.d));
        }
        if self.kind == DomainKind::Cap && !(0.0..1.0).contains(&self.cap_delta) {
            return Err(Error::InvalidInput(format!("cap delta {} outside [0,1)", self.cap_delta)));
        }
        Ok(())
    }

    /// Lower bound of x_d on the domain.
    pub fn lower_level(&self) -> f64 {
        match self.kind {
            DomainKind::FullSphere => -1.0,
            DomainKind::HalfSphere => 0.0,
            DomainKind::Cap => -self.cap_delta,
        }
    }

    /// Angular range of the arc for d = 2 restricted domains (angle measured from e_1).
    pub fn arc(&self) -> Option<(f64, f64)> {
        match self.kind {
            DomainKind::FullSphere => None,
            _ => {
                let a = (-self.lower_level()).asin();
                Some((-a, PI + a))
            }
        }
    }

    pub fn contains(&self, x: &Point) -> bool {
        self.kind == DomainKind::FullSphere || x[self.d - 1] > self.lower_level()
    }

    /// The Dirichlet boundary as a plane section, if any.
    pub fn boundary_section(&self) -> Option<PlaneSection> {
        match self.kind {
            DomainKind::FullSphere => None,
            _ => Some(PlaneSection::latitude(self.d, self.lower_level())),
        }
    }

    /// Surface measure of the domain.
    pub fn measure(&self) -> f64 {
        let z = self.lower_level();
        match (self.kind, self.d) {
            (DomainKind::FullSphere, d) => sphere_area(d),
            (_, 2) => PI + 2.0 * (-z).asin(),
            (_, _) => 2.0 * PI * (1.0 - z),
        }
    }
}

/// The nonnegative root of lambda = alpha (alpha + d - 2).
pub fn homogeneity_of(lambda: f64, d: usize) -> f64 {
    let b = d as f64 - 2.0;
    0.5 * (-b + (b * b + 4.0 * lambda.max(0.0)).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ModeLabel {
    /// d = 2 full circle: k = 0 constant, otherwise cos/sin(k t).
    Fourier { k: usize, sin: bool },
    /// d = 3 real harmonic Y_{l,m}.
    Harmonic { l: usize, m: i64 },
    /// d = 2 arc mode sin(j pi (t + a) / L).
    Arc { j: usize },
    /// d = 3 cap mode with polar profile index, azimuthal order and parity.
    Polar { profile: usize, m: usize, sin: bool },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Mode {
    pub lambda: f64,
    pub alpha: f64,
    pub label: ModeLabel,
}

#[derive(Clone, Debug)]
pub struct SpectralBasis {
    pub domain: SphericalDomain,
    pub modes: Vec<Mode>,
    profiles: Vec<PolarProfile>,
    lmax: usize,
}

impl SpectralBasis {
    pub fn count(&self) -> usize {
        self.modes.len()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.lambda).collect()
    }

    /// Values and tangential gradients of every mode at `x`; zero outside the domain.
    pub fn eval_modes(&self, x: &Point) -> Vec<(f64, Point)> {
        let d = self.domain.d;
        if !self.domain.contains(x) {
            return vec![(0.0, [0.0; 3]); self.count()];
        }
        match (self.domain.kind, d) {
            (DomainKind::FullSphere, 2) => {
                let all = fourier_modes(self.lmax, x);
                all.into_iter().take(self.count()).collect()
            }
            (DomainKind::FullSphere, _) => {
                let all = real_harmonics(self.lmax, x);
                all.into_iter().take(self.count()).collect()
            }
            (_, 2) => {
                let (lo, hi) = self.domain.arc().unwrap();
                let len = hi - lo;
                let mut t = x[1].atan2(x[0]);
                if t < lo {
                    t += 2.0 * PI;
                }
                let tangent = [-t.sin(), t.cos(), 0.0];
                let a = (2.0 / len).sqrt();
                self.modes
                    .iter()
                    .map(|md| {
                        let ModeLabel::Arc { j } = md.label else { unreachable!() };
                        let k = j as f64 * PI / len;
                        let (s, c) = (k * (t - lo)).sin_cos();
                        (a * s, [a * k * c * tangent[0], a * k * c * tangent[1], 0.0])
                    })
                    .collect()
            }
            (DomainKind::HalfSphere, _) => {
                let all = real_harmonics(self.lmax, x);
                let s2 = 2f64.sqrt();
                self.modes
                    .iter()
                    .map(|md| {
                        let ModeLabel::Harmonic { l, m } = md.label else { unreachable!() };
                        let (v, g) = all[l * l + (m + l as i64) as usize];
                        (s2 * v, [s2 * g[0], s2 * g[1], s2 * g[2]])
                    })
                    .collect()
            }
            (_, _) => {
                let rho = (x[0] * x[0] + x[1] * x[1]).sqrt();
                let (xx, rho) = if rho < 1e-9 {
                    let r: f64 = 1e-9;
                    ([r, 0.0, x[2].signum() * (1.0 - r * r).sqrt()], r)
                } else {
                    (*x, rho)
                };
                let theta = rho.atan2(xx[2]);
                let (cp, sp) = (xx[0] / rho, xx[1] / rho);
                let e_theta = [xx[2] * cp, xx[2] * sp, -rho];
                let e_phi = [-sp, cp, 0.0];
                let phi = sp.atan2(cp);
                self.modes
                    .iter()
                    .map(|md| {
                        let ModeLabel::Polar { profile, m, sin } = md.label else { unreachable!() };
                        let (f, fp, fs) = self.profiles[profile].eval(theta);
                        let mf = m as f64;
                        let (a, ap) = if m == 0 {
                            (1.0, 0.0)
                        } else if sin {
                            ((mf * phi).sin(), mf * (mf * phi).cos())
                        } else {
                            ((mf * phi).cos(), -mf * (mf * phi).sin())
                        };
                        let g = [
                            fp * a * e_theta[0] + fs * ap * e_phi[0],
                            fp * a * e_theta[1] + fs * ap * e_phi[1],
                            fp * a * e_theta[2] + fs * ap * e_phi[2],
                        ];
                        (f * a, g)
                    })
                    .collect()
            }
        }
    }

    /// Samples every mode on `quad`.
    pub fn sample(&self, quad: &Arc<Quadrature>) -> Vec<Trace> {
        let n = self.count();
        let mut values = vec![Vec::with_capacity(quad.len()); n];
        let mut grads = vec![Vec::with_capacity(quad.len()); n];
        for x in &quad.nodes {
            for (j, (v, g)) in self.eval_modes(x).into_iter().enumerate() {
                values[j].push(v);
                grads[j].push(g);
            }
        }
        values
            .into_iter()
            .zip(grads)
            .map(|(values, grads)| Trace { quad: quad.clone(), values, grads, spectral: None })
            .collect()
    }

    fn check_quadrature(&self, quad: &Quadrature) -> Result<()> {
        if quad.d() != self.domain.d {
            return Err(Error::InvalidInput("quadrature dimension differs from basis".into()));
        }
        let covers = quad.domain.lower_level() <= self.domain.lower_level() + 1e-15;
        if !covers {
            return Err(Error::InvalidInput(
                "quadrature domain does not cover the basis domain".into(),
            ));
        }
        Ok(())
    }

    /// Serializable summary together with a quadrature.
    pub fn export(&self, quad: &Quadrature) -> BasisExport {
        BasisExport {
            domain: self.domain,
            nodes: quad.nodes.iter().map(|x| x[..self.domain.d].to_vec()).collect(),
            weights: quad.weights.clone(),
            modes: self
                .modes
                .iter()
                .map(|m| ModeExport { lambda: m.lambda, alpha: m.alpha })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModeExport {
    pub lambda: f64,
    pub alpha: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BasisExport {
    pub domain: SphericalDomain,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub modes: Vec<ModeExport>,
}

fn mode(lambda: f64, d: usize, label: ModeLabel) -> Mode {
    Mode { lambda, alpha: homogeneity_of(lambda, d), label }
}

/// The first `max_modes` Dirichlet eigenpairs of the domain, in nondecreasing eigenvalue order.
pub fn build_basis(domain: &SphericalDomain, max_modes: usize) -> Result<SpectralBasis> {
    domain.validate()?;
    if max_modes == 0 {
        return Err(Error::InvalidInput("max_modes must be positive".into()));
    }
    let d = domain.d;
    match (domain.kind, d) {
        (DomainKind::FullSphere, 2) => {
            let kmax = max_modes / 2;
            let mut modes = vec![mode(0.0, 2, ModeLabel::Fourier { k: 0, sin: false })];
            for k in 1..=kmax {
                let l = (k * k) as f64;
                modes.push(mode(l, 2, ModeLabel::Fourier { k, sin: false }));
                modes.push(mode(l, 2, ModeLabel::Fourier { k, sin: true }));
            }
            modes.truncate(max_modes);
            Ok(SpectralBasis { domain: *domain, modes, profiles: vec![], lmax: kmax })
        }
        (DomainKind::FullSphere, _) => {
            let mut modes = Vec::new();
            let mut l = 0;
            while modes.len() < max_modes {
                for m in -(l as i64)..=(l as i64) {
                    modes.push(mode((l * (l + 1)) as f64, 3, ModeLabel::Harmonic { l, m }));
                }
                l += 1;
            }
            modes.truncate(max_modes);
            Ok(SpectralBasis { domain: *domain, modes, profiles: vec![], lmax: l - 1 })
        }
        (_, 2) => {
            if domain.kind == DomainKind::Cap && domain.cap_delta > CAP_DELTA_MAX {
                return Err(Error::CapTooLarge {
                    delta: domain.cap_delta,
                    reason: format!("accepted range is [0, {CAP_DELTA_MAX}]"),
                });
            }
            let (lo, hi) = domain.arc().unwrap();
            let len = hi - lo;
            let lam = |j: usize| (j as f64 * PI / len).powi(2);
            if domain.kind == DomainKind::Cap && lam(3) < 6.0 {
                return Err(Error::CapTooLarge {
                    delta: domain.cap_delta,
                    reason: format!("third eigenvalue {} below 3d", lam(3)),
                });
            }
            let modes = (1..=max_modes).map(|j| mode(lam(j), 2, ModeLabel::Arc { j })).collect();
            Ok(SpectralBasis { domain: *domain, modes, profiles: vec![], lmax: 0 })
        }
        (DomainKind::HalfSphere, _) => {
            let mut modes = Vec::new();
            let mut l = 1;
            while modes.len() < max_modes {
                let mut cluster: Vec<i64> =
                    (-(l as i64)..=(l as i64)).filter(|m| (l as i64 + m) % 2 != 0).collect();
                cluster.sort_by_key(|m| (m.unsigned_abs(), *m < 0));
                for m in cluster {
                    modes.push(mode((l * (l + 1)) as f64, 3, ModeLabel::Harmonic { l, m }));
                }
                l += 1;
            }
            modes.truncate(max_modes);
            Ok(SpectralBasis { domain: *domain, modes, profiles: vec![], lmax: l - 1 })
        }
        (_, _) => build_cap3(domain, max_modes),
    }
}

fn build_cap3(domain: &SphericalDomain, max_modes: usize) -> Result<SpectralBasis> {
    let delta = domain.cap_delta;
    if delta > CAP_DELTA_MAX {
        return Err(Error::CapTooLarge {
            delta,
            reason: format!("accepted range is [0, {CAP_DELTA_MAX}]"),
        });
    }
    let theta_max = 0.5 * PI + delta.asin();
    // Count the hemisphere modes up to degree L to decide how many (m, k) pairs are needed.
    let want = max_modes.max(4);
    let mut lcap = 1;
    while lcap * (lcap + 1) / 2 < want + 4 {
        lcap += 1;
    }
    let lcap = lcap + 2;
    let mut profiles = Vec::new();
    let mut entries: Vec<(f64, usize, usize, usize)> = Vec::new();
    for m in 0..=lcap {
        let count = (lcap + 1 - m).div_ceil(2);
        if count == 0 {
            continue;
        }
        for est in cap::fd_eigenvalues(m, theta_max, count) {
            let p = PolarProfile::solve(m, est, theta_max);
            entries.push((p.lambda, m, profiles.len(), 0));
            profiles.push(p);
        }
    }
    entries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    // Clusters of numerically equal eigenvalues are ordered by azimuthal order.
    let mut i = 0;
    while i < entries.len() {
        let mut j = i + 1;
        while j < entries.len() && (entries[j].0 - entries[i].0).abs() < 1e-8 * (1.0 + entries[i].0) {
            j += 1;
        }
        entries[i..j].sort_by_key(|e| (e.1, e.2));
        i = j;
    }
    let mut modes = Vec::new();
    for (lambda, m, pidx, _) in &entries {
        modes.push(mode(*lambda, 3, ModeLabel::Polar { profile: *pidx, m: *m, sin: false }));
        if *m > 0 {
            modes.push(mode(*lambda, 3, ModeLabel::Polar { profile: *pidx, m: *m, sin: true }));
        }
    }
    if modes.len() < 4 || modes[3].lambda < 9.0 {
        return Err(Error::CapTooLarge {
            delta,
            reason: format!("fourth eigenvalue {} below 3d", modes.get(3).map_or(0.0, |m| m.lambda)),
        });
    }
    modes.truncate(max_modes);
    Ok(SpectralBasis { domain: *domain, modes, profiles, lmax: 0 })
}

/// Coefficients c_j = int trace phi_j and the L2 norm of the reconstruction residual.
pub fn project(trace: &Trace, basis: &SpectralBasis) -> Result<(Vec<f64>, f64)> {
    basis.check_quadrature(&trace.quad)?;
    let modes = basis.sample(&trace.quad);
    let coeffs: Vec<f64> = modes.iter().map(|m| trace.inner(m)).collect();
    let mut rec = trace.clone();
    for (c, m) in coeffs.iter().zip(&modes) {
        rec = rec.combine(1.0, m, -c);
    }
    Ok((coeffs, rec.l2()))
}

/// Nodal values of sum c_j phi_j on `quad`, carrying the exact spectral content.
pub fn evaluate(basis: &SpectralBasis, coefficients: &[f64], quad: &Arc<Quadrature>) -> Trace {
    assert!(coefficients.len() <= basis.count());
    let mut values = vec![0.0; quad.len()];
    let mut grads = vec![[0.0; 3]; quad.len()];
    for (i, x) in quad.nodes.iter().enumerate() {
        for (c, (v, g)) in coefficients.iter().zip(basis.eval_modes(x)) {
            values[i] += c * v;
            for k in 0..3 {
                grads[i][k] += c * g[k];
            }
        }
    }
    let lambdas = basis.modes[..coefficients.len()].iter().map(|m| m.lambda).collect();
    Trace {
        quad: quad.clone(),
        values,
        grads,
        spectral: Some(Spectral { coeffs: coefficients.to_vec(), lambdas }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn homogeneity_examples() {
        assert!((homogeneity_of(6.0, 3) - 2.0).abs() < 1e-14);
        assert_eq!(homogeneity_of(0.0, 3), 0.0);
        assert!((homogeneity_of(8.75, 3) - 2.5).abs() < 1e-14);
        assert!((homogeneity_of(9.0, 2) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn measures() {
        assert!((SphericalDomain::half(3).measure() - 2.0 * PI).abs() < 1e-14);
        assert!((SphericalDomain::cap(2, 0.0).measure() - PI).abs() < 1e-14);
    }
}
