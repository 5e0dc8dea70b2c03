//! Splitting of boundary traces near the blow-up cones.
//!
//! Singular points: c = q_nu + Q_A + phi with q_nu carrying all linear content, Q_A the
//! remaining constant and quadratic-harmonic content, phi the rest. Flat points: nu chosen so
//! that c - q_nu has no component along the first d cap modes.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::numerics::{dot, norm, project_to_simplex, sphere_area, tangential, Point};
use crate::sphere_basis::{
    build_adapted_quadrature, project, PlaneSection, SpectralBasis, SphereField, Trace,
};
use crate::{Error, Result};

/// Q_A(x) = x . A x for symmetric A of size d.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadraticForm {
    pub d: usize,
    upper: [f64; 6],
}

fn upper_slot(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    match (i, j) {
        (0, 0) => 0,
        (0, 1) => 1,
        (0, 2) => 2,
        (1, 1) => 3,
        (1, 2) => 4,
        _ => 5,
    }
}

impl QuadraticForm {
    /// Symmetric part of the given rows.
    pub fn new(d: usize, rows: &[Vec<f64>]) -> Self {
        let mut q = QuadraticForm { d, upper: [0.0; 6] };
        for i in 0..d {
            for j in i..d {
                q.upper[upper_slot(i, j)] = 0.5 * (rows[i][j] + rows[j][i]);
            }
        }
        q
    }

    pub fn zero(d: usize) -> Self {
        QuadraticForm { d, upper: [0.0; 6] }
    }

    pub fn diag(entries: &[f64]) -> Self {
        let mut q = Self::zero(entries.len());
        for (i, e) in entries.iter().enumerate() {
            q.upper[upper_slot(i, i)] = *e;
        }
        q
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.upper[upper_slot(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.upper[upper_slot(i, j)] = v;
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.d).map(|i| (0..self.d).map(|j| self.get(i, j)).collect()).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.d).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_sq(&self) -> f64 {
        (0..self.d).flat_map(|i| (0..self.d).map(move |j| (i, j))).map(|(i, j)| self.get(i, j).powi(2)).sum()
    }

    pub fn combine(&self, a: f64, other: &QuadraticForm, b: f64) -> QuadraticForm {
        let mut q = *self;
        for k in 0..6 {
            q.upper[k] = a * self.upper[k] + b * other.upper[k];
        }
        q
    }

    pub fn apply(&self, x: &Point) -> Point {
        let mut y = [0.0; 3];
        for i in 0..self.d {
            for j in 0..self.d {
                y[i] += self.get(i, j) * x[j];
            }
        }
        y
    }

    pub fn value(&self, x: &Point) -> f64 {
        dot(x, &self.apply(x))
    }

    fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.d, self.d, |i, j| self.get(i, j))
    }

    /// Eigenvalues ascending with matching unit eigenvectors.
    pub fn eigen(&self) -> (Vec<f64>, Vec<Point>) {
        let eig = SymmetricEigen::new(self.matrix());
        let mut pairs: Vec<(f64, Point)> = (0..self.d)
            .map(|k| {
                let v = eig.eigenvectors.column(k);
                let mut p = [0.0; 3];
                for i in 0..self.d {
                    p[i] = v[i];
                }
                (eig.eigenvalues[k], p)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        (pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1).collect())
    }

    pub fn from_eigen(d: usize, values: &[f64], vectors: &[Point]) -> QuadraticForm {
        let mut q = Self::zero(d);
        for (l, v) in values.iter().zip(vectors) {
            for i in 0..d {
                for j in i..d {
                    let s = q.get(i, j) + l * v[i] * v[j];
                    q.set(i, j, s);
                }
            }
        }
        q
    }

    /// A positive semidefinite with trace 1/4.
    pub fn in_k(&self, tol: f64) -> bool {
        (self.trace() - 0.25).abs() <= tol && self.eigen().0[0] >= -tol
    }

    /// Number of eigenvalues below `threshold`.
    pub fn kernel_dim(&self, threshold: f64) -> usize {
        self.eigen().0.iter().filter(|l| **l < threshold).count()
    }
}

impl SphereField for QuadraticForm {
    fn eval(&self, x: &Point) -> (f64, Point) {
        let ax = self.apply(x);
        (dot(x, &ax), tangential(x, &[2.0 * ax[0], 2.0 * ax[1], 2.0 * ax[2]]))
    }
}

impl Serialize for QuadraticForm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for QuadraticForm {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(de)?;
        Ok(QuadraticForm::new(rows.len(), &rows))
    }
}

/// q_nu(x) = ((x . nu)_+)^2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HalfSquareProfile {
    pub d: usize,
    pub nu: Point,
}

impl HalfSquareProfile {
    pub fn new(d: usize, nu: &[f64]) -> Self {
        let mut v = [0.0; 3];
        v[..d].copy_from_slice(&nu[..d]);
        HalfSquareProfile { d, nu: v }
    }

    /// nu = e_d / 2.
    pub fn standard(d: usize) -> Self {
        let mut v = [0.0; 3];
        v[d - 1] = 0.5;
        HalfSquareProfile { d, nu: v }
    }

    pub fn zero(d: usize) -> Self {
        HalfSquareProfile { d, nu: [0.0; 3] }
    }

    pub fn in_k_plus(&self, tol: f64) -> bool {
        (norm(&self.nu) - 0.5).abs() <= tol
    }

    /// c0 = 4 |nu|^2, the multiple of the unit profile q_{nu/(2|nu|)}.
    pub fn c0(&self) -> f64 {
        4.0 * dot(&self.nu, &self.nu)
    }

    pub fn value(&self, x: &Point) -> f64 {
        dot(x, &self.nu).max(0.0).powi(2)
    }

    pub fn section(&self) -> Option<PlaneSection> {
        (norm(&self.nu) > 0.0).then(|| PlaneSection::new(self.nu, 0.0))
    }
}

impl SphereField for HalfSquareProfile {
    fn eval(&self, x: &Point) -> (f64, Point) {
        let s = dot(x, &self.nu);
        if s <= 0.0 {
            return (0.0, [0.0; 3]);
        }
        (s * s, tangential(x, &[2.0 * s * self.nu[0], 2.0 * s * self.nu[1], 2.0 * s * self.nu[2]]))
    }

    fn kinks(&self) -> Vec<PlaneSection> {
        self.section().into_iter().collect()
    }
}

impl Serialize for HalfSquareProfile {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.nu[..self.d].serialize(s)
    }
}

impl<'de> Deserialize<'de> for HalfSquareProfile {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(de)?;
        Ok(HalfSquareProfile::new(v.len(), &v))
    }
}

/// Nodal values of x . A x.
pub fn trace_of_quadratic(a: &QuadraticForm, quad: &Arc<crate::sphere_basis::Quadrature>) -> Trace {
    Trace::sample(a, quad)
}

/// Least-squares quadratic fit: the constant and harmonic-quadratic content of `c`.
pub fn quadratic_part(c: &Trace) -> QuadraticForm {
    let d = c.d();
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect();
    let m = pairs.len();
    let mut gram = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    for ((x, w), v) in c.quad.nodes.iter().zip(&c.quad.weights).zip(&c.values) {
        let basis: Vec<f64> = pairs
            .iter()
            .map(|&(i, j)| if i == j { x[i] * x[i] } else { 2.0 * x[i] * x[j] })
            .collect();
        for p in 0..m {
            rhs[p] += w * v * basis[p];
            for q in 0..m {
                gram[(p, q)] += w * basis[p] * basis[q];
            }
        }
    }
    // x_i^2 sum to 1 on the sphere, so constants are representable; the system is regular.
    let sol = gram.lu().solve(&rhs).expect("quadratic Gram matrix is regular");
    let mut a = QuadraticForm::zero(d);
    for (p, &(i, j)) in pairs.iter().enumerate() {
        a.set(i, j, sol[p]);
    }
    a
}

/// The linear content l of `c`: its L2 projection on span{x_k} is l . x.
pub fn linear_part(c: &Trace) -> Point {
    let d = c.d();
    let s = sphere_area(d) / d as f64;
    let mut l = [0.0; 3];
    for ((x, w), v) in c.quad.nodes.iter().zip(&c.quad.weights).zip(&c.values) {
        for k in 0..d {
            l[k] += w * v * x[k] / s;
        }
    }
    l
}

/// ||Q_M||^2 in L2 of the unit sphere.
pub fn quadratic_l2_sq(m: &QuadraticForm) -> f64 {
    let d = m.d as f64;
    sphere_area(m.d) / (d * (d + 2.0)) * (m.trace().powi(2) + 2.0 * m.frobenius_sq())
}

/// kappa with linear content of q_nu equal to kappa |nu| nu.
fn half_square_linear_constant(d: usize) -> f64 {
    // int_S (x_d)_+^3: 4/3 on the circle, pi/2 on S^2.
    let m3 = if d == 2 { 4.0 / 3.0 } else { std::f64::consts::PI / 2.0 };
    d as f64 * m3 / sphere_area(d)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PhiContent {
    pub lambdas: Vec<f64>,
    pub coeffs: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SingularDecomposition {
    pub nu: HalfSquareProfile,
    #[serde(rename = "A")]
    pub a: QuadraticForm,
    pub phi: PhiContent,
    /// L2 norm of the part of phi outside the span of the basis.
    pub residual: f64,
    /// Nodal values of phi = c - q_nu - Q_A.
    #[serde(skip)]
    pub phi_trace: Option<Trace>,
}

/// Linear-content magnitude below which nu is set to zero.
pub const LINEAR_CONTENT_FLOOR: f64 = 1e-10;

/// nu with the linear content of q_nu equal to `l`.
pub fn nu_for_linear_content(l: &Point, d: usize) -> Point {
    let ln = norm(l);
    if ln < LINEAR_CONTENT_FLOOR {
        return [0.0; 3];
    }
    let kappa = half_square_linear_constant(d);
    let s = 1.0 / (kappa * ln).sqrt();
    [l[0] * s, l[1] * s, l[2] * s]
}

pub fn decompose_singular(c: &Trace, basis: &SpectralBasis) -> Result<SingularDecomposition> {
    let d = c.d();
    let l = linear_part(c);
    let nu = HalfSquareProfile { d, nu: nu_for_linear_content(&l, d) };
    let rest = c.sub(&Trace::sample(&nu, &c.quad));
    let a = quadratic_part(&rest);
    let phi = rest.sub(&trace_of_quadratic(&a, &c.quad));
    let (coeffs, residual) = project(&phi, basis)?;
    let two_d = 2.0 * d as f64;
    let (lambdas, coeffs): (Vec<f64>, Vec<f64>) = basis
        .modes
        .iter()
        .zip(coeffs)
        .filter(|(m, _)| m.lambda > two_d + 1e-9)
        .map(|(m, c)| (m.lambda, c))
        .unzip();
    Ok(SingularDecomposition {
        nu,
        a,
        phi: PhiContent { lambdas, coeffs },
        residual,
        phi_trace: Some(phi),
    })
}

/// The nonnegative replacement B of A: negative eigenvalues are set to zero and their sum is
/// removed from the largest eigenvalue, keeping the trace.
pub fn nonneg_replacement(a: &QuadraticForm) -> Result<QuadraticForm> {
    let (vals, vecs) = a.eigen();
    if vals[0] >= -1e-14 {
        return Ok(*a);
    }
    let neg: f64 = vals.iter().filter(|l| **l < 0.0).map(|l| -l).sum();
    let top = vals[vals.len() - 1];
    if top <= neg {
        return Err(Error::Precondition(format!(
            "largest eigenvalue {top:.6} does not exceed the negative mass {neg:.6}"
        )));
    }
    // Ties: the last of the maximal eigendirections in ascending order.
    let last = vals.len() - 1;
    let mut out = vals.clone();
    for v in out.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out[last] -= neg;
    Ok(QuadraticForm::from_eigen(a.d, &out, &vecs))
}

/// Nearest point of K = {A >= 0, tr A = 1/4} in the L2 norm of the traces.
pub fn project_to_k(a: &QuadraticForm) -> QuadraticForm {
    let (vals, vecs) = a.eigen();
    let p = project_to_simplex(&vals, 0.25);
    QuadraticForm::from_eigen(a.d, &p, &vecs)
}

/// L2 distance of `c` to the traces of K.
pub fn dist_to_cone(c: &Trace) -> f64 {
    let a = quadratic_part(c);
    let off = c.sub(&trace_of_quadratic(&a, &c.quad)).l2_sq();
    let p = project_to_k(&a);
    (off + quadratic_l2_sq(&a.combine(1.0, &p, -1.0))).sqrt()
}

/// Quadrature resolution used for the cap moments.
pub const MOMENT_RESOLUTION: usize = 24;

/// (int_{S_delta} q_nu phi_j)_{j = 1..d} over the cap of `cap_basis`.
#[allow(non_snake_case)]
pub fn moments_F(nu: &[f64], cap_basis: &SpectralBasis) -> Result<Vec<f64>> {
    let dom = cap_basis.domain;
    let d = dom.d;
    let q = HalfSquareProfile::new(d, nu);
    let mut kinks: Vec<PlaneSection> = dom.boundary_section().into_iter().collect();
    kinks.extend(q.section());
    let quad = build_adapted_quadrature(&dom, MOMENT_RESOLUTION, &kinks)?;
    let mut out = vec![0.0; d];
    for (x, w) in quad.nodes.iter().zip(&quad.weights) {
        let v = q.value(x);
        if v == 0.0 {
            continue;
        }
        for (o, (m, _)) in out.iter_mut().zip(cap_basis.eval_modes(x)) {
            *o += w * v * m;
        }
    }
    Ok(out)
}

/// Solves moments_F(nu) = (int c phi_j)_{j<=d} by Newton iteration from e_d / 2 with a
/// finite-difference Jacobian.
pub fn choose_nu_flat(c: &Trace, cap_basis: &SpectralBasis) -> Result<HalfSquareProfile> {
    let d = cap_basis.domain.d;
    if cap_basis.count() < d {
        return Err(Error::InvalidInput("cap basis needs at least d modes".into()));
    }
    let modes = cap_basis.sample(&c.quad);
    let target: Vec<f64> = modes[..d].iter().map(|m| c.inner(m)).collect();
    let mut nu = HalfSquareProfile::standard(d).nu[..d].to_vec();
    let resid = |nu: &[f64]| -> Result<Vec<f64>> {
        Ok(moments_F(nu, cap_basis)?.iter().zip(&target).map(|(f, t)| f - t).collect())
    };
    let mut r = resid(&nu)?;
    let max_iter = 40;
    for _ in 0..max_iter {
        let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rn < 1e-13 {
            return Ok(HalfSquareProfile::new(d, &nu));
        }
        let j = moments_jacobian(&nu, cap_basis)?;
        let jac = DMatrix::from_fn(d, d, |i, k| j[i][k]);
        let delta = jac
            .lu()
            .solve(&DVector::from_vec(r.clone()))
            .ok_or_else(|| Error::NoConvergence { what: "moment-map Newton", iterations: 0, residual: rn })?;
        // Damped update keeps the iterate away from the degenerate nu = 0.
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = nu.iter().zip(delta.iter()).map(|(a, b)| a - t * b).collect();
            let rt = resid(&trial)?;
            let rtn = rt.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rtn < rn || t < 1e-3 {
                nu = trial;
                r = rt;
                break;
            }
            t *= 0.5;
        }
    }
    let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    if rn < 1e-10 {
        Ok(HalfSquareProfile::new(d, &nu))
    } else {
        Err(Error::NoConvergence { what: "moment-map Newton", iterations: max_iter, residual: rn })
    }
}

/// Finite-difference Jacobian of moments_F at `nu`.
pub fn moments_jacobian(nu: &[f64], cap_basis: &SpectralBasis) -> Result<Vec<Vec<f64>>> {
    let d = nu.len();
    let step = 1e-6;
    let mut jac = vec![vec![0.0; d]; d];
    for k in 0..d {
        let mut p = nu.to_vec();
        let mut m = nu.to_vec();
        p[k] += step;
        m[k] -= step;
        let (fp, fm) = (moments_F(&p, cap_basis)?, moments_F(&m, cap_basis)?);
        for i in 0..d {
            jac[i][k] = (fp[i] - fm[i]) / (2.0 * step);
        }
    }
    Ok(jac)
}
