//! Real spherical harmonics on S^2 and trigonometric modes on S^1, with tangential gradients.

use std::f64::consts::PI;

use crate::numerics::Point;

/// Fully normalized associated Legendre values p[l][m] (no Condon-Shortley phase) and their
/// polar derivatives, for z = cos(theta), s = sin(theta) > 0.
fn legendre_table(lmax: usize, z: f64, s: f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut p = vec![vec![0.0; lmax + 1]; lmax + 1];
    p[0][0] = (1.0 / (4.0 * PI)).sqrt();
    for m in 1..=lmax {
        p[m][m] = ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * s * p[m - 1][m - 1];
    }
    for m in 0..lmax {
        p[m + 1][m] = ((2 * m + 3) as f64).sqrt() * z * p[m][m];
    }
    for m in 0..=lmax {
        for l in (m + 2)..=lmax {
            let lf = l as f64;
            let mf = m as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            p[l][m] = a * (z * p[l - 1][m] - b * p[l - 2][m]);
        }
    }
    let mut dp = vec![vec![0.0; lmax + 1]; lmax + 1];
    for l in 0..=lmax {
        for m in 0..=l {
            let lf = l as f64;
            let mf = m as f64;
            let prev = if l >= 1 && m < l { p[l - 1][m] } else { 0.0 };
            let c = ((2.0 * lf + 1.0) * (lf * lf - mf * mf) / (2.0 * lf - 1.0).max(1.0)).sqrt();
            dp[l][m] = (lf * z * p[l][m] - c * prev) / s;
        }
    }
    (p, dp)
}

/// Values and tangential gradients of the real harmonics Y_{l,m}, l <= lmax, ordered by l and
/// then m from -l to l. Negative m carries sin(|m| phi), positive m carries cos(m phi).
pub fn real_harmonics(lmax: usize, x: &Point) -> Vec<(f64, Point)> {
    let mut rho = (x[0] * x[0] + x[1] * x[1]).sqrt();
    let mut z = x[2];
    let (mut cp, mut sp) = if rho > 0.0 { (x[0] / rho, x[1] / rho) } else { (1.0, 0.0) };
    let exact_values = if rho < 1e-9 {
        // Nudge off the pole for the gradient; values are recomputed exactly below.
        Some(pole_values(lmax, z))
    } else {
        None
    };
    if rho < 1e-9 {
        rho = 1e-9;
        z = z.signum() * (1.0 - rho * rho).sqrt();
        cp = 1.0;
        sp = 0.0;
    }
    let (p, dp) = legendre_table(lmax, z, rho);
    let e_theta = [z * cp, z * sp, -rho];
    let e_phi = [-sp, cp, 0.0];
    let mut cosm = vec![1.0; lmax + 1];
    let mut sinm = vec![0.0; lmax + 1];
    for m in 1..=lmax {
        cosm[m] = cosm[m - 1] * cp - sinm[m - 1] * sp;
        sinm[m] = sinm[m - 1] * cp + cosm[m - 1] * sp;
    }
    let sq2 = 2f64.sqrt();
    let mut out = Vec::with_capacity((lmax + 1) * (lmax + 1));
    for l in 0..=lmax {
        for mi in -(l as i64)..=(l as i64) {
            let m = mi.unsigned_abs() as usize;
            let (val, dth, dph) = if mi == 0 {
                (p[l][0], dp[l][0], 0.0)
            } else if mi > 0 {
                (
                    sq2 * p[l][m] * cosm[m],
                    sq2 * dp[l][m] * cosm[m],
                    -sq2 * m as f64 * p[l][m] / rho * sinm[m],
                )
            } else {
                (
                    sq2 * p[l][m] * sinm[m],
                    sq2 * dp[l][m] * sinm[m],
                    sq2 * m as f64 * p[l][m] / rho * cosm[m],
                )
            };
            let g = [
                dth * e_theta[0] + dph * e_phi[0],
                dth * e_theta[1] + dph * e_phi[1],
                dth * e_theta[2] + dph * e_phi[2],
            ];
            out.push((val, g));
        }
    }
    if let Some(vals) = exact_values {
        for (o, v) in out.iter_mut().zip(vals) {
            o.0 = v;
        }
    }
    out
}

fn pole_values(lmax: usize, z: f64) -> Vec<f64> {
    let (p, _) = legendre_table(lmax, z.signum(), 1.0);
    let mut out = Vec::new();
    for l in 0..=lmax {
        for mi in -(l as i64)..=(l as i64) {
            out.push(if mi == 0 { p[l][0] } else { 0.0 });
        }
    }
    // p[l][0] at s = 1 used z = +-1 directly; the m = 0 recursion does not involve s.
    out
}

/// Trigonometric modes on S^1: constant, then cos(kt), sin(kt) for k = 1..kmax.
pub fn fourier_modes(kmax: usize, x: &Point) -> Vec<(f64, Point)> {
    let t = x[1].atan2(x[0]);
    let tangent = [-t.sin(), t.cos(), 0.0];
    let a0 = 1.0 / (2.0 * PI).sqrt();
    let a = 1.0 / PI.sqrt();
    let mut out = Vec::with_capacity(2 * kmax + 1);
    out.push((a0, [0.0; 3]));
    for k in 1..=kmax {
        let kf = k as f64;
        let (s, c) = (kf * t).sin_cos();
        out.push((a * c, [-a * kf * s * tangent[0], -a * kf * s * tangent[1], 0.0]));
        out.push((a * s, [a * kf * c * tangent[0], a * kf * c * tangent[1], 0.0]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_degree_harmonics_match_closed_forms() {
        let x = [0.36, -0.48, 0.8];
        let y = real_harmonics(2, &x);
        let c1 = (3.0 / (4.0 * PI)).sqrt();
        assert!((y[1].0 - c1 * x[1]).abs() < 1e-14);
        assert!((y[2].0 - c1 * x[2]).abs() < 1e-14);
        assert!((y[3].0 - c1 * x[0]).abs() < 1e-14);
        let c20 = (5.0 / (16.0 * PI)).sqrt();
        assert!((y[6].0 - c20 * (3.0 * x[2] * x[2] - 1.0)).abs() < 1e-14);
        // gradient of Y_10 = c1 z is c1 (e3 - z x)
        let g = y[2].1;
        assert!((g[2] - c1 * (1.0 - x[2] * x[2])).abs() < 1e-13);
        assert!((g[0] + c1 * x[2] * x[0]).abs() < 1e-13);
    }

    #[test]
    fn pole_values_are_exact() {
        let y = real_harmonics(3, &[0.0, 0.0, 1.0]);
        let c1 = (3.0 / (4.0 * PI)).sqrt();
        assert!((y[2].0 - c1).abs() < 1e-14);
        assert!(y[3].0.abs() < 1e-14);
    }
}
