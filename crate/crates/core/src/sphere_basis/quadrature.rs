use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{DomainKind, SphericalDomain};
use crate::numerics::{cosine_mapped_rule, cross, dot, gauss_legendre_on, norm, scale, Point};
use crate::{Error, Result};

/// The set {x : x . normal = offset} on the sphere, across which a trace may have a kink.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneSection {
    pub normal: Point,
    pub offset: f64,
}

impl PlaneSection {
    pub fn new(normal: Point, offset: f64) -> Self {
        let n = norm(&normal);
        Self {
            normal: scale(1.0 / n, &normal),
            offset: offset / n,
        }
    }

    /// The equator {x_d = 0} in dimension d.
    pub fn equator(d: usize) -> Self {
        Self::latitude(d, 0.0)
    }

    /// The section {x_d = level}.
    pub fn latitude(d: usize, level: f64) -> Self {
        let mut n = [0.0; 3];
        n[d - 1] = 1.0;
        Self::new(n, level)
    }
}

#[derive(Clone, Debug)]
pub struct Quadrature {
    pub domain: SphericalDomain,
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
    /// Degree of spherical polynomials integrated exactly; 0 for kink-adapted rules.
    pub exactness_degree: usize,
    pub resolution: usize,
}

impl Quadrature {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn d(&self) -> usize {
        self.domain.d
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate<F: Fn(&Point) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(x))
            .sum()
    }
}

/// Standard rule: trapezoid in angle (d=2 full), Gauss-Legendre in the polar cosine times a
/// uniform azimuth (d=3), Gauss-Legendre along the arc or polar range for half-spheres and caps.
pub fn build_quadrature(domain: &SphericalDomain, resolution: usize) -> Result<Quadrature> {
    build_adapted_quadrature(domain, resolution, &[])
}

/// Rule whose panels are split along the given sections, so that traces smooth on each side of
/// them are integrated with spectral accuracy.
pub fn build_adapted_quadrature(
    domain: &SphericalDomain,
    resolution: usize,
    kinks: &[PlaneSection],
) -> Result<Quadrature> {
    domain.validate()?;
    if resolution < 8 {
        return Err(Error::InvalidInput(format!(
            "quadrature resolution {resolution} < 8"
        )));
    }
    let (nodes, weights, exact) = match domain.d {
        2 => circle_rule(domain, resolution, kinks),
        3 => sphere_rule(domain, resolution, kinks),
        d => return Err(Error::UnsupportedDimension(d)),
    };
    Ok(Quadrature {
        domain: *domain,
        nodes,
        weights,
        exactness_degree: exact,
        resolution,
    })
}

fn panel_nodes(len: f64, per_pi: usize) -> usize {
    ((per_pi as f64 * len / PI).ceil() as usize).max(8) + 4
}

fn sorted_unique(mut v: Vec<f64>, tol: f64) -> Vec<f64> {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup_by(|a, b| (*a - *b).abs() < tol);
    v
}

fn circle_rule(
    domain: &SphericalDomain,
    res: usize,
    kinks: &[PlaneSection],
) -> (Vec<Point>, Vec<f64>, usize) {
    let mut angles = Vec::new();
    for k in kinks {
        let tn = k.normal[1].atan2(k.normal[0]);
        if k.offset.abs() < 1.0 {
            let a = k.offset.acos();
            angles.push(tn + a);
            angles.push(tn - a);
        }
    }
    let push = |t: f64, w: f64, nodes: &mut Vec<Point>, weights: &mut Vec<f64>| {
        nodes.push([t.cos(), t.sin(), 0.0]);
        weights.push(w);
    };
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    match domain.arc() {
        None => {
            let bps = sorted_unique(
                angles.iter().map(|t| t.rem_euclid(2.0 * PI)).collect(),
                1e-14,
            );
            if bps.is_empty() {
                let n = 2 * res + 1;
                let w = 2.0 * PI / n as f64;
                for i in 0..n {
                    push(2.0 * PI * i as f64 / n as f64, w, &mut nodes, &mut weights);
                }
                return (nodes, weights, 2 * res);
            }
            for i in 0..bps.len() {
                let a = bps[i];
                let b = if i + 1 < bps.len() { bps[i + 1] } else { bps[0] + 2.0 * PI };
                let (ts, ws) = gauss_legendre_on(a, b, panel_nodes(b - a, res + 1));
                for (t, w) in ts.iter().zip(&ws) {
                    push(*t, *w, &mut nodes, &mut weights);
                }
            }
            (nodes, weights, 0)
        }
        Some((lo, hi)) => {
            let mut bps = vec![lo, hi];
            for t in &angles {
                for shift in [-2.0 * PI, 0.0, 2.0 * PI] {
                    let s = t + shift;
                    if s > lo + 1e-14 && s < hi - 1e-14 {
                        bps.push(s);
                    }
                }
            }
            let bps = sorted_unique(bps, 1e-14);
            let exact = if bps.len() == 2 { 2 * res } else { 0 };
            for win in bps.windows(2) {
                let n = if bps.len() == 2 {
                    2 * res + 2
                } else {
                    panel_nodes(win[1] - win[0], 2 * res + 2)
                };
                let (ts, ws) = gauss_legendre_on(win[0], win[1], n);
                for (t, w) in ts.iter().zip(&ws) {
                    push(*t, *w, &mut nodes, &mut weights);
                }
            }
            (nodes, weights, exact)
        }
    }
}

struct Frame {
    pole: Point,
    e1: Point,
    e2: Point,
}

impl Frame {
    fn standard() -> Self {
        Frame {
            pole: [0.0, 0.0, 1.0],
            e1: [1.0, 0.0, 0.0],
            e2: [0.0, 1.0, 0.0],
        }
    }

    fn with_pole(p: Point) -> Self {
        if (p[2] - 1.0).abs() < 1e-15 {
            return Self::standard();
        }
        let trial = if p[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        let mut e1 = cross(&p, &trial);
        e1 = scale(1.0 / norm(&e1), &e1);
        let e2 = cross(&p, &e1);
        Frame { pole: p, e1, e2 }
    }

    fn point(&self, z: f64, phi: f64) -> Point {
        let rho = (1.0 - z * z).max(0.0).sqrt();
        let (s, c) = phi.sin_cos();
        let mut x = [0.0; 3];
        for i in 0..3 {
            x[i] = z * self.pole[i] + rho * (c * self.e1[i] + s * self.e2[i]);
        }
        x
    }
}

fn choose_frame(domain: &SphericalDomain, kinks: &[PlaneSection]) -> Frame {
    if domain.kind != DomainKind::FullSphere || kinks.is_empty() {
        return Frame::standard();
    }
    let n0 = kinks[0].normal;
    if kinks.iter().all(|k| norm(&cross(&k.normal, &n0)) < 1e-13) {
        let p = if n0[2] < 0.0 { scale(-1.0, &n0) } else { n0 };
        return Frame::with_pole(p);
    }
    if kinks.iter().all(|k| k.offset.abs() < 1e-15) {
        for k in kinks {
            let c = cross(&k.normal, &n0);
            let cn = norm(&c);
            if cn > 1e-8 {
                let p = scale(1.0 / cn, &c);
                if kinks.iter().all(|q| dot(&q.normal, &p).abs() < 1e-12) {
                    return Frame::with_pole(p);
                }
            }
        }
    }
    Frame::standard()
}

fn sphere_rule(
    domain: &SphericalDomain,
    res: usize,
    kinks: &[PlaneSection],
) -> (Vec<Point>, Vec<f64>, usize) {
    let frame = choose_frame(domain, kinks);
    let z_lo = domain.lower_level();
    let mut zbreaks = vec![(z_lo, false), (1.0, false)];
    let mut meridians = Vec::new();
    let mut general = Vec::new();
    for k in kinks {
        let nz = dot(&k.normal, &frame.pole);
        let h1 = dot(&k.normal, &frame.e1);
        let h2 = dot(&k.normal, &frame.e2);
        let nh = (h1 * h1 + h2 * h2).sqrt();
        let s = k.offset;
        if nh < 1e-13 {
            zbreaks.push((s / nz, false));
        } else if nz.abs() < 1e-13 && s.abs() < 1e-15 {
            let phin = h2.atan2(h1);
            meridians.push(phin + 0.5 * PI);
            meridians.push(phin - 0.5 * PI);
        } else {
            if s.abs() < 1.0 {
                let r = nh * (1.0 - s * s).sqrt();
                zbreaks.push((s * nz + r, true));
                zbreaks.push((s * nz - r, true));
            }
            general.push((nz, nh, h2.atan2(h1), s));
        }
    }
    zbreaks.retain(|(z, _)| *z >= z_lo - 1e-15 && *z <= 1.0 + 1e-15);
    zbreaks.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut merged: Vec<(f64, bool)> = Vec::new();
    for (z, t) in zbreaks {
        match merged.last_mut() {
            Some(last) if (z - last.0).abs() < 1e-14 => last.1 |= t,
            _ => merged.push((z.clamp(z_lo, 1.0), t)),
        }
    }
    let plain = kinks.is_empty();
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for win in merged.windows(2) {
        let (a, ta) = win[0];
        let (b, tb) = win[1];
        if b - a < 1e-15 {
            continue;
        }
        let n = if plain { res + 1 } else { panel_nodes(0.5 * PI * (b - a), res + 1) };
        let (zs, wz) = if ta || tb {
            cosine_mapped_rule(a, b, n)
        } else {
            gauss_legendre_on(a, b, n)
        };
        for (z, wzi) in zs.iter().zip(&wz) {
            let rho = (1.0 - z * z).max(0.0).sqrt();
            let mut bps: Vec<f64> = meridians.iter().map(|p| p.rem_euclid(2.0 * PI)).collect();
            for (nz, nh, phin, s) in &general {
                let v = (s - nz * z) / (rho * nh);
                if v.abs() < 1.0 {
                    let a = v.acos();
                    bps.push((phin + a).rem_euclid(2.0 * PI));
                    bps.push((phin - a).rem_euclid(2.0 * PI));
                }
            }
            let bps = sorted_unique(bps, 1e-14);
            if bps.is_empty() {
                let m = 2 * res + 1;
                let w = 2.0 * PI / m as f64;
                for i in 0..m {
                    nodes.push(frame.point(*z, 2.0 * PI * i as f64 / m as f64));
                    weights.push(wzi * w);
                }
            } else {
                for i in 0..bps.len() {
                    let p0 = bps[i];
                    let p1 = if i + 1 < bps.len() { bps[i + 1] } else { bps[0] + 2.0 * PI };
                    let (ps, wp) = gauss_legendre_on(p0, p1, panel_nodes(p1 - p0, res + 1));
                    for (p, w) in ps.iter().zip(&wp) {
                        nodes.push(frame.point(*z, *p));
                        weights.push(wzi * w);
                    }
                }
            }
        }
    }
    (nodes, weights, if plain { 2 * res } else { 0 })
}
