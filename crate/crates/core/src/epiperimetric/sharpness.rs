//! The axially symmetric trace c = ((1/8)(x_1^2 + x_2^2) - eps x_3^2)_+ on S^2, for which the
//! distance of the quadratic part to K is of order |grad phi| and not smaller.
//!
//! Everything depends on z = x_3 only, so all integrals are one-dimensional in the polar angle,
//! split where c changes sign.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::decompose::{project_to_k, quadratic_l2_sq, QuadraticForm};
use crate::energy::density_constants;
use crate::numerics::{gauss_legendre_on, loglog_slope};
use crate::{Error, Result};

const NODES_PER_PANEL: usize = 48;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharpnessRow {
    pub eps: f64,
    pub r_l2: f64,
    pub grad_r_l2: f64,
    /// Area of {R > 0}.
    pub measure: f64,
    pub c0: f64,
    pub c2_abs: f64,
    pub grad_phi_l2: f64,
    pub dist_to_cone: f64,
    /// (W(z) - Theta) / |grad phi|^2.
    pub final_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharpnessTable {
    pub d: usize,
    pub rows: Vec<SharpnessRow>,
    pub slope_r_l2: f64,
    pub slope_grad_r_l2: f64,
    pub slope_measure: f64,
    pub slope_grad_phi_l2: f64,
    pub slope_dist: f64,
    /// max over rows of |grad phi|^{4/(d+1)} / dist(Q, K).
    pub max_grad_phi_over_dist: f64,
}

/// Integrates f(z, sin t) dA over S^2 with z = cos t, split at |z| = z0.
fn axial_integral<F: Fn(f64) -> f64>(z0: f64, f: F) -> f64 {
    let t0 = z0.acos();
    let mut s = 0.0;
    for (a, b) in [(0.0, t0), (t0, PI - t0), (PI - t0, PI)] {
        let (ts, ws) = gauss_legendre_on(a, b, NODES_PER_PANEL);
        for (t, w) in ts.iter().zip(&ws) {
            s += w * 2.0 * PI * t.sin() * f(t.cos());
        }
    }
    s
}

pub fn sharpness_row(d: usize, eps: f64) -> Result<SharpnessRow> {
    if d != 3 {
        return Err(Error::UnsupportedDimension(d));
    }
    if !(eps > 0.0 && eps <= 0.2) {
        return Err(Error::InvalidInput(format!("eps = {eps} outside (0, 0.2]")));
    }
    let k = 1.0 / (4.0 * (d as f64 - 1.0));
    // P(z) = k (1 - z^2) - eps z^2 changes sign at z0.
    let z0 = (k / (k + eps)).sqrt();
    let p = |z: f64| k * (1.0 - z * z) - eps * z * z;
    let dp = |z: f64| -2.0 * (k + eps) * z;
    let r = |z: f64| (-p(z)).max(0.0);
    let grad_sq = |z: f64, v: f64, dv: f64| if v > 0.0 { (1.0 - z * z) * dv * dv } else { 0.0 };

    let r_l2 = axial_integral(z0, |z| r(z).powi(2)).sqrt();
    let grad_r_sq = axial_integral(z0, |z| grad_sq(z, r(z), -dp(z)));
    let measure = 2.0 * 2.0 * PI * (1.0 - z0);

    let y0 = 1.0 / (4.0 * PI).sqrt();
    let y2n = (5.0 / (4.0 * PI)).sqrt() / 2.0;
    let c0 = axial_integral(z0, |z| r(z) * y0);
    let c2 = axial_integral(z0, |z| r(z) * y2n * (3.0 * z * z - 1.0));
    // phi = -(R minus its modes of degree <= 2); only degree 2 carries gradient.
    let grad_phi_sq = grad_r_sq - 2.0 * d as f64 * c2 * c2;

    // Q = P - c0 Y0 - c2 Y2 as a form: |x|^2 = 1 on the sphere, 3z^2 - 1 = 2z^2 - x1^2 - x2^2.
    let q = QuadraticForm::diag(&[
        k - c0 * y0 + c2 * y2n,
        k - c0 * y0 + c2 * y2n,
        -eps - c0 * y0 - 2.0 * c2 * y2n,
    ]);
    let dist_to_cone = quadratic_l2_sq(&q.combine(1.0, &project_to_k(&q), -1.0)).sqrt();

    let c = |z: f64| p(z).max(0.0);
    let c_sq = axial_integral(z0, |z| c(z).powi(2));
    let grad_c_sq = axial_integral(z0, |z| grad_sq(z, c(z), dp(z)));
    let mass = axial_integral(z0, c);
    let df = d as f64;
    let w = (4.0 * c_sq + grad_c_sq) / (df + 2.0) - 2.0 * c_sq + mass / (df + 2.0);
    let final_ratio = (w - density_constants(d).theta) / grad_phi_sq;

    Ok(SharpnessRow {
        eps,
        r_l2,
        grad_r_l2: grad_r_sq.sqrt(),
        measure,
        c0,
        c2_abs: c2.abs(),
        grad_phi_l2: grad_phi_sq.sqrt(),
        dist_to_cone,
        final_ratio,
    })
}

pub fn sharpness_scan(d: usize, eps_list: &[f64]) -> Result<SharpnessTable> {
    if eps_list.len() < 2 {
        return Err(Error::InvalidInput("need at least two eps values to fit slopes".into()));
    }
    let rows = eps_list.iter().map(|&e| sharpness_row(d, e)).collect::<Result<Vec<_>>>()?;
    let eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let slope = |f: fn(&SharpnessRow) -> f64| loglog_slope(&eps, &rows.iter().map(f).collect::<Vec<_>>());
    let power = 4.0 / (d as f64 + 1.0);
    Ok(SharpnessTable {
        d,
        slope_r_l2: slope(|r| r.r_l2),
        slope_grad_r_l2: slope(|r| r.grad_r_l2),
        slope_measure: slope(|r| r.measure),
        slope_grad_phi_l2: slope(|r| r.grad_phi_l2),
        slope_dist: slope(|r| r.dist_to_cone),
        max_grad_phi_over_dist: rows
            .iter()
            .map(|r| r.grad_phi_l2.powf(power) / r.dist_to_cone)
            .fold(0.0, f64::max),
        rows,
    })
}
