//! Polar Sturm-Liouville problem for Dirichlet modes on the cap {x_3 > -delta} of S^2.
//!
//! A mode is N f(theta) A(phi) with f = sin^m(theta) g(theta), where g solves
//! g'' + (2m+1) cot(theta) g' + (lambda - m(m+1)) g = 0, g(0) = 1, g'(0) = 0, g(theta_max) = 0.

use std::f64::consts::PI;

use crate::numerics::{bracketed_root, tridiagonal_eigenvalue};

const FD_POINTS: usize = 2000;
const RK_STEPS: usize = 4000;

#[derive(Clone, Debug)]
pub struct PolarProfile {
    pub m: usize,
    pub lambda: f64,
    theta_max: f64,
    theta0: f64,
    h: f64,
    g: Vec<f64>,
    gp: Vec<f64>,
    /// L2 normalization including the azimuthal factor.
    pub norm: f64,
}

fn series(m: usize, mu: f64, t: f64) -> (f64, f64) {
    let mf = m as f64;
    let a = -mu / (4.0 * (mf + 1.0));
    let b = a * (2.0 * (2.0 * mf + 1.0) / 3.0 - mu) / (8.0 * mf + 16.0);
    (1.0 + a * t * t + b * t.powi(4), 2.0 * a * t + 4.0 * b * t.powi(3))
}

fn rhs(m: usize, mu: f64, t: f64, g: f64, gp: f64) -> (f64, f64) {
    (gp, -(2.0 * m as f64 + 1.0) * t.cos() / t.sin() * gp - mu * g)
}

fn start(theta_max: f64) -> f64 {
    (1e-3f64).min(theta_max / 100.0)
}

/// Integrates from near the pole to theta_max; optionally records the trajectory.
fn shoot(m: usize, lambda: f64, theta_max: f64, record: bool) -> (f64, Vec<f64>, Vec<f64>) {
    let mu = lambda - (m * (m + 1)) as f64;
    let t0 = start(theta_max);
    let h = (theta_max - t0) / RK_STEPS as f64;
    let (mut g, mut gp) = series(m, mu, t0);
    let mut gs = Vec::new();
    let mut gps = Vec::new();
    if record {
        gs.reserve(RK_STEPS + 1);
        gps.reserve(RK_STEPS + 1);
        gs.push(g);
        gps.push(gp);
    }
    for i in 0..RK_STEPS {
        let t = t0 + i as f64 * h;
        let (k1a, k1b) = rhs(m, mu, t, g, gp);
        let (k2a, k2b) = rhs(m, mu, t + 0.5 * h, g + 0.5 * h * k1a, gp + 0.5 * h * k1b);
        let (k3a, k3b) = rhs(m, mu, t + 0.5 * h, g + 0.5 * h * k2a, gp + 0.5 * h * k2b);
        let (k4a, k4b) = rhs(m, mu, t + h, g + h * k3a, gp + h * k3b);
        g += h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
        gp += h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);
        if record {
            gs.push(g);
            gps.push(gp);
        }
    }
    (g, gs, gps)
}

/// Finite-difference estimates of the first `count` eigenvalues for azimuthal order m.
pub fn fd_eigenvalues(m: usize, theta_max: f64, count: usize) -> Vec<f64> {
    let n = FD_POINTS;
    let h = theta_max / n as f64;
    let th = |i: usize| (i as f64 - 0.5) * h;
    let w = |t: f64| t.sin();
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n - 1];
    let m2 = (m * m) as f64;
    for i in 1..=n {
        let t = th(i);
        let wl = w(t - 0.5 * h);
        let wr = w(t + 0.5 * h);
        let wr_eff = if i == n { 2.0 * wr } else { wr };
        diag[i - 1] = (wl + wr_eff) / (h * h * w(t)) + m2 / (t.sin() * t.sin());
        if i < n {
            off[i - 1] = -wr / (h * h * (w(t) * w(th(i + 1))).sqrt());
        }
    }
    (0..count)
        .map(|k| tridiagonal_eigenvalue(&diag, &off, k))
        .collect()
}

impl PolarProfile {
    /// Refines a finite-difference estimate by shooting and stores the normalized profile.
    pub fn solve(m: usize, estimate: f64, theta_max: f64) -> PolarProfile {
        let f = |lam: f64| shoot(m, lam, theta_max, false).0;
        let mut delta = 1e-4 * (1.0 + estimate);
        let (mut a, mut b) = (estimate - delta, estimate + delta);
        let (mut fa, mut fb) = (f(a), f(b));
        while fa.signum() == fb.signum() {
            delta *= 2.0;
            a = estimate - delta;
            b = estimate + delta;
            fa = f(a);
            fb = f(b);
        }
        let lambda = bracketed_root(f, a, b, 1e-14 * (1.0 + estimate));
        let (_, g, gp) = shoot(m, lambda, theta_max, true);
        let t0 = start(theta_max);
        let h = (theta_max - t0) / RK_STEPS as f64;
        let mut p = PolarProfile {
            m,
            lambda,
            theta_max,
            theta0: t0,
            h,
            g,
            gp,
            norm: 1.0,
        };
        // Simpson on the stored grid plus a short Simpson on [0, theta0] from the series.
        let fsq = |t: f64, gv: f64| {
            let s = t.sin();
            s.powi(2 * m as i32) * gv * gv * s
        };
        let mut integral = 0.0;
        let mut simpson = 0.0;
        for i in 0..=RK_STEPS {
            let c = if i == 0 || i == RK_STEPS { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            simpson += c * fsq(t0 + i as f64 * h, p.g[i]);
        }
        integral += simpson * h / 3.0;
        let k = 16;
        let hs = t0 / k as f64;
        let mu = lambda - (m * (m + 1)) as f64;
        let mut head = 0.0;
        for i in 0..=k {
            let t = i as f64 * hs;
            let c = if i == 0 || i == k { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            head += c * fsq(t, series(m, mu, t).0);
        }
        integral += head * hs / 3.0;
        let azimuth = if m == 0 { 2.0 * PI } else { PI };
        p.norm = 1.0 / (integral * azimuth).sqrt();
        p
    }

    fn g_at(&self, t: f64) -> (f64, f64) {
        if t < self.theta0 {
            return series(self.m, self.lambda - (self.m * (self.m + 1)) as f64, t);
        }
        let u = (t - self.theta0) / self.h;
        let i = (u.floor() as usize).min(RK_STEPS - 1);
        let s = u - i as f64;
        let (g0, g1) = (self.g[i], self.g[i + 1]);
        let (d0, d1) = (self.gp[i] * self.h, self.gp[i + 1] * self.h);
        let s2 = s * s;
        let s3 = s2 * s;
        let val = (2.0 * s3 - 3.0 * s2 + 1.0) * g0
            + (s3 - 2.0 * s2 + s) * d0
            + (-2.0 * s3 + 3.0 * s2) * g1
            + (s3 - s2) * d1;
        let der = (6.0 * s2 - 6.0 * s) * g0
            + (3.0 * s2 - 4.0 * s + 1.0) * d0
            + (-6.0 * s2 + 6.0 * s) * g1
            + (3.0 * s2 - 2.0 * s) * d1;
        (val, der / self.h)
    }

    /// Returns (N f, N f', N f / sin) at polar angle t; zero outside the cap.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        if t >= self.theta_max {
            return (0.0, 0.0, 0.0);
        }
        let (g, gp) = self.g_at(t);
        let (s, c) = t.sin_cos();
        let m = self.m as i32;
        let sm = s.powi(m);
        let f = sm * g;
        let fp = if m == 0 { gp } else { m as f64 * s.powi(m - 1) * c * g + sm * gp };
        let f_over_s = if m == 0 { 0.0 } else { s.powi(m - 1) * g };
        (self.norm * f, self.norm * fp, self.norm * f_over_s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hemisphere_spectrum_is_recovered() {
        // theta_max = pi/2: odd-in-z harmonics, lambda = l(l+1) with l + m odd.
        let tm = 0.5 * PI;
        let fd = fd_eigenvalues(0, tm, 2);
        let p1 = PolarProfile::solve(0, fd[0], tm);
        let p2 = PolarProfile::solve(0, fd[1], tm);
        assert!((p1.lambda - 2.0).abs() < 1e-9, "{}", p1.lambda);
        assert!((p2.lambda - 12.0).abs() < 1e-9, "{}", p2.lambda);
        let fd1 = fd_eigenvalues(1, tm, 1);
        let q = PolarProfile::solve(1, fd1[0], tm);
        assert!((q.lambda - 6.0).abs() < 1e-9);
    }
}
