//! Free-boundary points of solved (or exact) grid functions: density, blow-up classification,
//! and the decay of the Weiss gap e(r) = W(u, x0, r) - Theta_u(x0) toward the blow-up.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decompose::{
    linear_part, nu_for_linear_content, project_to_k, quadratic_part, trace_of_quadratic, HalfSquareProfile,
    QuadraticForm,
};
use crate::energy::{boundary_trace, density_constants, eps_alpha, monotonicity_terms, weiss_at_scale};
use crate::epiperimetric::FLAT_ALPHA;
use crate::numerics::{linear_fit, loglog_slope, norm, sphere_area, Point};
use crate::obstacle_solver::GridFunction;
use crate::sphere_basis::Trace;
use crate::{Error, Result};

/// Largest scale considered around a point.
pub const MAX_SCALE: f64 = 0.5;
/// Smallest reliable scale in units of the grid spacing.
pub const MIN_SCALE_IN_H: f64 = 8.0;
/// Eigenvalues of a fitted A below this count toward the stratum.
pub const KERNEL_THRESHOLD: f64 = 1e-3;
/// Fits with ||u_r - blow-up||_{L2} above this fraction of ||u_r||_{L2} are not classified.
pub const FIT_TOLERANCE: f64 = 0.2;
/// c_fit below this does not count as decay.
pub const DECAY_FLOOR: f64 = 1e-3;

// ---------------------------------------------------------------------------------------------
// Scales.

/// r = MAX_SCALE 2^{-k} down to 8h, keeping those whose ball stays in the grid.
pub fn dyadic_scales(u: &GridFunction, x0: &Point) -> Vec<f64> {
    let r_min = MIN_SCALE_IN_H * u.grid.h();
    let mut out = Vec::new();
    let mut r = MAX_SCALE;
    while r >= r_min * (1.0 - 1e-12) {
        if u.grid.check_ball(x0, r).is_ok() {
            out.push(r);
        }
        r *= 0.5;
    }
    out
}

/// `count` scales from r_max down to r_min, equally spaced in log r.
pub fn geometric_scales(r_max: f64, r_min: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![r_max];
    }
    let q = (r_min / r_max).ln() / (count - 1) as f64;
    (0..count).map(|k| r_max * (q * k as f64).exp()).collect()
}

/// r = 2^{-2^k}, k = 0..=kmax.
pub fn exponential_dyadic_scales(kmax: u32) -> Vec<f64> {
    (0..=kmax).map(|k| 2f64.powf(-(2f64.powi(k as i32)))).collect()
}

fn reliable_range(u: &GridFunction, x0: &Point) -> Result<(f64, f64)> {
    let s = dyadic_scales(u, x0);
    if s.len() < 2 {
        return Err(Error::InsufficientScales(format!(
            "{} dyadic scale(s) in [{:.3e}, {MAX_SCALE}] fit around {:?}",
            s.len(),
            MIN_SCALE_IN_H * u.grid.h(),
            &x0[..u.grid.d]
        )));
    }
    Ok((s[0], s[s.len() - 1]))
}

// ---------------------------------------------------------------------------------------------
// Density and classification.

/// Theta_u(x0): Richardson extrapolation 2 W(r) - W(2r) on the two smallest dyadic scales.
pub fn weiss_density(u: &GridFunction, x0: &Point) -> Result<f64> {
    let (_, r) = reliable_range(u, x0)?;
    let w1 = weiss_at_scale(u, x0, r)?.w;
    let w2 = weiss_at_scale(u, x0, 2.0 * r)?.w;
    Ok(2.0 * w1 - w2)
}

/// Largest amount by which W(u, x0, r) exceeds W(u, x0, 2r) over the dyadic scales; 0 when
/// W is nondecreasing in r.
pub fn weiss_monotonicity_defect(u: &GridFunction, x0: &Point) -> Result<f64> {
    let scales = dyadic_scales(u, x0);
    let w = scales.iter().map(|&r| Ok(weiss_at_scale(u, x0, r)?.w)).collect::<Result<Vec<_>>>()?;
    Ok(w.windows(2).map(|p| p[1] - p[0]).fold(0.0, f64::max))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointKind {
    Regular,
    Singular,
    Unclassified,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Blowup {
    HalfSpace { profile: HalfSquareProfile },
    Quadratic { a: QuadraticForm },
}

impl Blowup {
    pub fn trace(&self, like: &Trace) -> Trace {
        match self {
            Blowup::HalfSpace { profile } => Trace::sample(profile, &like.quad),
            Blowup::Quadratic { a } => trace_of_quadratic(a, &like.quad),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointClassification {
    pub x0: Vec<f64>,
    pub density: f64,
    pub kind: PointKind,
    pub blowup: Option<Blowup>,
    /// dim ker A, singular points only.
    pub stratum: Option<usize>,
    /// ||u_{r,x0} - blow-up||_{L2(dB_1)} at the fitting scale.
    pub fit_residual: f64,
    /// ||u_{r,x0}||_{L2(dB_1)} at the fitting scale.
    pub trace_norm: f64,
    pub scale: f64,
}

/// Half-space blow-up with |nu| = 1/2 from the linear content of the trace.
pub fn fit_half_space(c: &Trace) -> HalfSquareProfile {
    let d = c.d();
    let nu = nu_for_linear_content(&linear_part(c), d);
    let n = norm(&nu);
    if n == 0.0 {
        return HalfSquareProfile::zero(d);
    }
    HalfSquareProfile::new(d, &[0.5 * nu[0] / n, 0.5 * nu[1] / n, 0.5 * nu[2] / n])
}

/// Singular blow-up: least-squares quadratic part, projected onto K.
pub fn fit_quadratic(c: &Trace) -> QuadraticForm {
    project_to_k(&quadratic_part(c))
}

pub fn classify_point(u: &GridFunction, x0: &Point) -> Result<PointClassification> {
    let d = u.grid.d;
    let k = density_constants(d);
    let density = weiss_density(u, x0)?;
    let (_, r) = reliable_range(u, x0)?;
    let c = boundary_trace(u, x0, r)?;
    let band = 0.25 * (k.theta - k.theta_plus);
    let regular = (density - k.theta_plus).abs() < (density - k.theta).abs();
    let blowup = if regular {
        Blowup::HalfSpace { profile: fit_half_space(&c) }
    } else {
        Blowup::Quadratic { a: fit_quadratic(&c) }
    };
    let fit_residual = c.sub(&blowup.trace(&c)).l2();
    let trace_norm = c.l2();
    let nearest = if regular { k.theta_plus } else { k.theta };
    let kind = if (density - nearest).abs() > band || fit_residual > FIT_TOLERANCE * trace_norm {
        PointKind::Unclassified
    } else if regular {
        PointKind::Regular
    } else {
        PointKind::Singular
    };
    let stratum = match (&blowup, kind) {
        (Blowup::Quadratic { a }, PointKind::Singular) => Some(a.kernel_dim(KERNEL_THRESHOLD)),
        _ => None,
    };
    Ok(PointClassification {
        x0: x0[..d].to_vec(),
        density,
        kind,
        blowup: Some(blowup),
        stratum,
        fit_residual,
        trace_norm,
        scale: r,
    })
}

/// Classifies every point independently; points without a usable scale range are dropped.
pub fn classify_points(u: &GridFunction, points: &[Point]) -> Vec<PointClassification> {
    points.par_iter().filter_map(|p| classify_point(u, p).ok()).collect()
}

// ---------------------------------------------------------------------------------------------
// Decay of the Weiss gap.

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecaySeries {
    /// Decreasing.
    pub scales: Vec<f64>,
    /// e(r) = W(u, x0, r) - Theta_u(x0).
    pub gap: Vec<f64>,
    /// f(r) = (1/r) int_{dB_1} |x . grad u_r - 2 u_r|^2.
    pub defect: Vec<f64>,
    /// Allowed increase of e as r decreases.
    pub slack: f64,
}

impl DecaySeries {
    /// A series from closed-form e, with f = 0 and no slack.
    pub fn from_fn<F: Fn(f64) -> f64>(scales: &[f64], e: F) -> Result<DecaySeries> {
        let s = DecaySeries {
            scales: scales.to_vec(),
            gap: scales.iter().map(|&r| e(r)).collect(),
            defect: vec![0.0; scales.len()],
            slack: 0.0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.gap.len() != self.scales.len() || self.defect.len() != self.scales.len() {
            return Err(Error::InvalidInput("series columns differ in length".into()));
        }
        if self.scales.iter().any(|r| !(*r > 0.0)) || self.scales.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidInput("scales must be positive and strictly decreasing".into()));
        }
        Ok(())
    }

    /// Largest increase of e from one scale to the next smaller one.
    pub fn monotonicity_violation(&self) -> f64 {
        self.gap.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

/// e and f of u around x0 at the given decreasing scales, with slack 10h.
pub fn decay_series(u: &GridFunction, x0: &Point, density: f64, scales: &[f64]) -> Result<DecaySeries> {
    let rows = scales
        .iter()
        .map(|&r| {
            let w = weiss_at_scale(u, x0, r)?.w;
            let f = monotonicity_terms(u, x0, r)?.rotation_defect;
            Ok((w - density, f))
        })
        .collect::<Result<Vec<_>>>()?;
    let s = DecaySeries {
        scales: scales.to_vec(),
        gap: rows.iter().map(|r| r.0).collect(),
        defect: rows.iter().map(|r| r.1).collect(),
        slack: 10.0 * u.grid.h(),
    };
    s.validate()?;
    Ok(s)
}

/// Solution of e' = (c/r) e^{1+gamma}, e(r0) = e0, at r <= r0:
/// (e0^{-gamma} + c gamma log(r0/r))^{-1/gamma}, or e0 (r/r0)^c for gamma = 0.
/// e0 = +inf gives the profile (c gamma log(r0/r))^{-1/gamma}.
pub fn ode_decay_oracle(gamma: f64, c: f64, e0: f64, r0: f64, r: f64) -> f64 {
    if gamma == 0.0 {
        return e0 * (r / r0).powf(c);
    }
    (e0.powf(-gamma) + c * gamma * (r0 / r).ln()).powf(-1.0 / gamma)
}

/// The same ODE integrated by classical RK4 in s = log(r0/r), where it reads de/ds = -c e^{1+gamma}.
pub fn integrate_decay_ode(gamma: f64, c: f64, e0: f64, r0: f64, r: f64, steps: usize) -> f64 {
    let s_end = (r0 / r).ln();
    let ds = s_end / steps as f64;
    let rhs = |e: f64| -c * e.max(0.0).powf(1.0 + gamma);
    let mut e = e0;
    for _ in 0..steps {
        let k1 = rhs(e);
        let k2 = rhs(e + 0.5 * ds * k1);
        let k3 = rhs(e + 0.5 * ds * k2);
        let k4 = rhs(e + ds * k3);
        e += ds / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    e
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Largest c for which the ODE profile from (r_max, e(r_max)) dominates the series;
    /// +inf when no sampled gap is positive.
    pub c_fit: f64,
    pub bound_satisfied: bool,
}

pub fn decay_fit(series: &DecaySeries, gamma: f64) -> Result<DecayFit> {
    series.validate()?;
    if series.len() < 6 {
        return Err(Error::InsufficientScales(format!("decay fit needs 6 scales, got {}", series.len())));
    }
    if !(gamma >= 0.0) {
        return Err(Error::InvalidInput(format!("gamma = {gamma} must be nonnegative")));
    }
    let v = series.monotonicity_violation();
    if v > series.slack {
        return Err(Error::Precondition(format!(
            "gap increases by {v:.3e} toward smaller scales (slack {:.3e})",
            series.slack
        )));
    }
    let r0 = series.scales[0];
    let e0 = series.gap[0];
    let mut c_fit = f64::INFINITY;
    for (&r, &e) in series.scales.iter().zip(&series.gap).skip(1) {
        if e <= 0.0 {
            continue;
        }
        let l = (r0 / r).ln();
        let c = if e0 <= 0.0 {
            // Starting from a nonpositive gap nothing positive is admissible.
            0.0
        } else if gamma == 0.0 {
            (e0 / e).ln() / l
        } else {
            (e.powf(-gamma) - e0.powf(-gamma)) / (gamma * l)
        };
        c_fit = c_fit.min(c);
    }
    Ok(DecayFit { c_fit, bound_satisfied: c_fit >= DECAY_FLOOR })
}

/// e~(r) = e(r) + 2 c1 r^alpha / alpha.
pub fn almost_min_correction(series: &DecaySeries, alpha: f64, c1: f64) -> Result<DecaySeries> {
    if !(alpha > 0.0 && alpha <= 1.0) || !(c1 >= 0.0) {
        return Err(Error::InvalidInput(format!("need alpha in (0, 1] and c1 >= 0, got {alpha}, {c1}")));
    }
    let mut out = series.clone();
    for (g, r) in out.gap.iter_mut().zip(&series.scales) {
        *g += 2.0 * c1 * r.powf(alpha) / alpha;
    }
    Ok(out)
}

/// a^{1+gamma} + b^{1+gamma} >= 2^{-gamma} (a + b)^{1+gamma} for a, b >= 0, as used to merge the
/// correction into the decay inequality. Returns the two sides.
pub fn power_sum_sides(a: f64, b: f64, gamma: f64) -> (f64, f64) {
    (a.powf(1.0 + gamma) + b.powf(1.0 + gamma), 2f64.powf(-gamma) * (a + b).powf(1.0 + gamma))
}

// ---------------------------------------------------------------------------------------------
// Drift of the rescalings.

/// ||u_{x0,t} - u_{x0,s}||_{L1(dB_1)}.
pub fn l1_drift(u: &GridFunction, x0: &Point, s: f64, t: f64) -> Result<f64> {
    if !(s > 0.0 && s <= t) {
        return Err(Error::InvalidInput(format!("need 0 < s <= t, got s = {s}, t = {t}")));
    }
    let cs = boundary_trace(u, x0, s)?;
    if s == t {
        return Ok(0.0);
    }
    Ok(boundary_trace(u, x0, t)?.sub(&cs).l1())
}

/// sqrt(|dB_1| / 2) sqrt(log(t/s)) sqrt(e(t) - e(s)), the bound on the L1 drift between scales
/// s < t obtained from e' >= 2f and Cauchy-Schwarz in r. Negative gap increments count as 0.
pub fn chain_bound(d: usize, s: f64, t: f64, gap_s: f64, gap_t: f64) -> f64 {
    (0.5 * sphere_area(d)).sqrt() * (t / s).ln().sqrt() * (gap_t - gap_s).max(0.0).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainCheck {
    pub s: f64,
    pub t: f64,
    pub drift: f64,
    pub bound: f64,
}

/// Drift and its Cauchy-Schwarz bound between scales[0] and each smaller scale (`scales`
/// decreasing). Anchoring at the largest scale keeps the energy increment above the resolution
/// of W on the grid.
pub fn chain_checks(u: &GridFunction, x0: &Point, scales: &[f64]) -> Result<Vec<ChainCheck>> {
    pair_checks(u, x0, scales, |_| 0)
}

/// As `chain_checks`, between consecutive scales.
pub fn consecutive_chain_checks(u: &GridFunction, x0: &Point, scales: &[f64]) -> Result<Vec<ChainCheck>> {
    pair_checks(u, x0, scales, |i| i - 1)
}

fn pair_checks<F: Fn(usize) -> usize>(u: &GridFunction, x0: &Point, scales: &[f64], upper: F) -> Result<Vec<ChainCheck>> {
    let w = scales.iter().map(|&r| Ok(weiss_at_scale(u, x0, r)?.w)).collect::<Result<Vec<_>>>()?;
    (1..scales.len())
        .map(|i| {
            let j = upper(i);
            let (t, s) = (scales[j], scales[i]);
            Ok(ChainCheck { s, t, drift: l1_drift(u, x0, s, t)?, bound: chain_bound(u.grid.d, s, t, w[i], w[j]) })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicBound {
    /// Indices k with r = 2^{-2^k} present in the series, consecutive.
    pub ks: Vec<u32>,
    /// 2^{k/2} e(2^{-2^k})^{1/2}, negative gaps counted as 0.
    pub summands: Vec<f64>,
    pub sum: f64,
    /// summand_{k+1} / summand_k.
    pub ratios: Vec<f64>,
    /// Smallest C with summand_k <= C 2^{(1 - 1/gamma) k / 2}; None for gamma = 0.
    pub constant: Option<f64>,
    /// C sum_{k >= j} 2^{(1 - 1/gamma) k / 2}.
    pub tail_bound: Option<f64>,
}

impl DyadicBound {
    pub fn dominated(&self) -> bool {
        self.tail_bound.map_or(true, |b| self.sum <= b * (1.0 + 1e-12))
    }
}

fn find_scale(scales: &[f64], r: f64) -> Option<usize> {
    scales.iter().position(|s| (s - r).abs() <= 1e-9 * r)
}

/// Sum over the exponentially dyadic scales r = 2^{-2^k} of the series, from the first one
/// present through the last consecutive one.
pub fn dyadic_drift_bound(series: &DecaySeries, gamma: f64) -> Result<DyadicBound> {
    series.validate()?;
    if !(gamma >= 0.0 && gamma < 1.0) {
        return Err(Error::InvalidInput(format!("gamma = {gamma} outside [0, 1)")));
    }
    let first = (0..31u32).find(|&k| find_scale(&series.scales, 2f64.powf(-(2f64.powi(k as i32)))).is_some());
    let Some(j) = first else {
        return Err(Error::InsufficientScales("no scale of the form 2^{-2^k}".into()));
    };
    let mut ks = Vec::new();
    let mut summands = Vec::new();
    for k in j..31 {
        let Some(i) = find_scale(&series.scales, 2f64.powf(-(2f64.powi(k as i32)))) else { break };
        ks.push(k);
        summands.push(2f64.powf(0.5 * k as f64) * series.gap[i].max(0.0).sqrt());
    }
    let sum = summands.iter().sum();
    let ratios = summands.windows(2).map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 }).collect();
    let (constant, tail_bound) = if gamma > 0.0 {
        let q = 2f64.powf(0.5 * (1.0 - 1.0 / gamma));
        let c = ks.iter().zip(&summands).map(|(&k, s)| s / q.powi(k as i32)).fold(0.0, f64::max);
        (Some(c), Some(c * q.powi(j as i32) / (1.0 - q)))
    } else {
        (None, None)
    };
    Ok(DyadicBound { ks, summands, sum, ratios, constant, tail_bound })
}

// ---------------------------------------------------------------------------------------------
// Moduli of continuity of the blow-ups.

/// Rate (d+2) eps / (2 (1 - eps)), eps = 1/(2d+5), of the L1 convergence at regular points.
pub fn regular_rate_exponent(d: usize) -> f64 {
    let eps = eps_alpha(FLAT_ALPHA, d);
    (d as f64 + 2.0) * eps / (2.0 * (1.0 - eps))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusReport {
    pub scales: Vec<f64>,
    /// ||u_{x0,r} - blow-up||_{L1(dB_1)}.
    pub drifts: Vec<f64>,
    /// Decay exponent of the envelope: (1 - gamma)/(2 gamma) in -log r for singular points with
    /// gamma > 0, the power of r otherwise.
    pub predicted_exponent: f64,
    pub logarithmic: bool,
    /// Smallest C with drift <= C envelope(r) at the sampled scales.
    pub c_fit: f64,
    /// Slope of log drift against log r.
    pub beta: Option<f64>,
    /// Minus the slope of log drift against log(-log r).
    pub log_decay_exponent: Option<f64>,
    /// Whether r_min <= r_max 2^{-4}, i.e. three exponentially dyadic levels are sampled.
    pub range_sufficient: bool,
    /// Measured decay at least the predicted exponent minus 0.2; None when the range is
    /// insufficient.
    pub exponent_ok: Option<bool>,
}

/// Fits ||u_{x0,r} - blow-up|| over the dyadic scales against the envelope
/// (-log r)^{-(1-gamma)/(2gamma)} (singular, gamma > 0) or r^beta (regular, or gamma = 0).
pub fn blowup_modulus_check(u: &GridFunction, x0: &Point, blowup: &Blowup, gamma: f64) -> Result<ModulusReport> {
    let d = u.grid.d;
    let scales = dyadic_scales(u, x0);
    if scales.len() < 2 {
        return Err(Error::InsufficientScales(format!("{} dyadic scale(s) around {:?}", scales.len(), &x0[..d])));
    }
    let drifts = scales
        .iter()
        .map(|&r| {
            let c = boundary_trace(u, x0, r)?;
            Ok(c.sub(&blowup.trace(&c)).l1())
        })
        .collect::<Result<Vec<f64>>>()?;
    let logarithmic = matches!(blowup, Blowup::Quadratic { .. }) && gamma > 0.0;
    let predicted_exponent = match blowup {
        Blowup::Quadratic { .. } if logarithmic => (1.0 - gamma) / (2.0 * gamma),
        Blowup::Quadratic { .. } => 0.0,
        Blowup::HalfSpace { .. } => regular_rate_exponent(d),
    };
    let envelope = |r: f64| {
        if logarithmic {
            (-r.ln()).powf(-predicted_exponent)
        } else {
            r.powf(predicted_exponent)
        }
    };
    let c_fit = scales.iter().zip(&drifts).map(|(&r, m)| m / envelope(r)).fold(0.0, f64::max);
    let positive = drifts.iter().all(|m| *m > 1e-12);
    let beta = positive.then(|| loglog_slope(&scales, &drifts));
    let log_decay_exponent = positive.then(|| {
        let x: Vec<f64> = scales.iter().map(|r| (-r.ln()).ln()).collect();
        let y: Vec<f64> = drifts.iter().map(|m| m.ln()).collect();
        -linear_fit(&x, &y).0
    });
    let range_sufficient = *scales.last().unwrap() <= scales[0] / 16.0 * (1.0 + 1e-12);
    let exponent_ok = range_sufficient.then(|| {
        if !positive {
            return drifts.iter().all(|m| *m <= 1e-12);
        }
        if logarithmic {
            log_decay_exponent.unwrap() >= predicted_exponent - 0.2
        } else {
            beta.unwrap() >= predicted_exponent - 0.2
        }
    });
    Ok(ModulusReport {
        scales,
        drifts,
        predicted_exponent,
        logarithmic,
        c_fit,
        beta,
        log_decay_exponent,
        range_sufficient,
        exponent_ok,
    })
}
