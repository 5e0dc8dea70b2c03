//! Evaluable functions on the sphere and their nodal samples.

use std::sync::Arc;

use super::{PlaneSection, Quadrature, SpectralBasis};
use crate::numerics::{dot, Point};

/// A function on the unit sphere with an analytic tangential gradient.
pub trait SphereField: Send + Sync {
    /// Value and tangential gradient at the unit vector `x`.
    fn eval(&self, x: &Point) -> (f64, Point);

    /// Sections across which the field is only piecewise smooth.
    fn kinks(&self) -> Vec<PlaneSection> {
        Vec::new()
    }
}

/// Spectral content attached to a trace when it is known exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectral {
    pub coeffs: Vec<f64>,
    pub lambdas: Vec<f64>,
}

/// Nodal values and tangential gradients of a function on a quadrature.
#[derive(Clone, Debug)]
pub struct Trace {
    pub quad: Arc<Quadrature>,
    pub values: Vec<f64>,
    pub grads: Vec<Point>,
    pub spectral: Option<Spectral>,
}

impl Trace {
    pub fn sample(field: &dyn SphereField, quad: &Arc<Quadrature>) -> Trace {
        let (values, grads) = quad.nodes.iter().map(|x| field.eval(x)).unzip();
        Trace {
            quad: quad.clone(),
            values,
            grads,
            spectral: None,
        }
    }

    pub fn zeros(quad: &Arc<Quadrature>) -> Trace {
        Trace {
            quad: quad.clone(),
            values: vec![0.0; quad.len()],
            grads: vec![[0.0; 3]; quad.len()],
            spectral: None,
        }
    }

    pub fn d(&self) -> usize {
        self.quad.d()
    }

    pub fn with_spectral(mut self, spectral: Spectral) -> Trace {
        self.spectral = Some(spectral);
        self
    }

    /// a * self + b * other.
    pub fn combine(&self, a: f64, other: &Trace, b: f64) -> Trace {
        assert!(Arc::ptr_eq(&self.quad, &other.quad), "traces on different quadratures");
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        let grads = self
            .grads
            .iter()
            .zip(&other.grads)
            .map(|(x, y)| [a * x[0] + b * y[0], a * x[1] + b * y[1], a * x[2] + b * y[2]])
            .collect();
        let spectral = match (&self.spectral, &other.spectral) {
            (Some(s), Some(o)) if s.lambdas == o.lambdas => Some(Spectral {
                coeffs: s.coeffs.iter().zip(&o.coeffs).map(|(x, y)| a * x + b * y).collect(),
                lambdas: s.lambdas.clone(),
            }),
            _ => None,
        };
        Trace {
            quad: self.quad.clone(),
            values,
            grads,
            spectral,
        }
    }

    pub fn add(&self, other: &Trace) -> Trace {
        self.combine(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Trace) -> Trace {
        self.combine(1.0, other, -1.0)
    }

    pub fn scaled(&self, a: f64) -> Trace {
        let mut t = self.clone();
        t.values.iter_mut().for_each(|v| *v *= a);
        t.grads.iter_mut().for_each(|g| g.iter_mut().for_each(|c| *c *= a));
        if let Some(s) = t.spectral.as_mut() {
            s.coeffs.iter_mut().for_each(|c| *c *= a);
        }
        t
    }

    pub fn positive_part(&self) -> Trace {
        let mut t = self.clone();
        for (v, g) in t.values.iter_mut().zip(t.grads.iter_mut()) {
            if *v <= 0.0 {
                *v = 0.0;
                *g = [0.0; 3];
            }
        }
        t.spectral = None;
        t
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().zip(&self.quad.weights).map(|(v, w)| v * w).sum()
    }

    pub fn inner(&self, other: &Trace) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .zip(&self.quad.weights)
            .map(|((a, b), w)| a * b * w)
            .sum()
    }

    pub fn grad_inner(&self, other: &Trace) -> f64 {
        self.grads
            .iter()
            .zip(&other.grads)
            .zip(&self.quad.weights)
            .map(|((a, b), w)| dot(a, b) * w)
            .sum()
    }

    pub fn l2_sq(&self) -> f64 {
        self.inner(self)
    }

    pub fn l2(&self) -> f64 {
        self.l2_sq().sqrt()
    }

    pub fn l1(&self) -> f64 {
        self.values.iter().zip(&self.quad.weights).map(|(v, w)| v.abs() * w).sum()
    }

    /// Integral of the squared tangential gradient.
    pub fn dirichlet(&self) -> f64 {
        self.grad_inner(self)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Finite expansion in a spectral basis.
#[derive(Clone)]
pub struct BasisExpansion {
    pub basis: Arc<SpectralBasis>,
    pub coeffs: Vec<f64>,
}

impl BasisExpansion {
    pub fn new(basis: Arc<SpectralBasis>, coeffs: Vec<f64>) -> Self {
        assert!(coeffs.len() <= basis.count());
        Self { basis, coeffs }
    }
}

impl SphereField for BasisExpansion {
    fn eval(&self, x: &Point) -> (f64, Point) {
        let modes = self.basis.eval_modes(x);
        let mut v = 0.0;
        let mut g = [0.0; 3];
        for (c, (mv, mg)) in self.coeffs.iter().zip(&modes) {
            v += c * mv;
            for i in 0..3 {
                g[i] += c * mg[i];
            }
        }
        (v, g)
    }

    fn kinks(&self) -> Vec<PlaneSection> {
        self.basis.domain.boundary_section().into_iter().collect()
    }
}

/// Sum of scaled fields.
#[derive(Clone, Default)]
pub struct LinearCombination {
    pub terms: Vec<(f64, Arc<dyn SphereField>)>,
}

impl LinearCombination {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, a: f64, f: Arc<dyn SphereField>) -> Self {
        self.terms.push((a, f));
        self
    }
}

impl SphereField for LinearCombination {
    fn eval(&self, x: &Point) -> (f64, Point) {
        let mut v = 0.0;
        let mut g = [0.0; 3];
        for (a, f) in &self.terms {
            let (fv, fg) = f.eval(x);
            v += a * fv;
            for i in 0..3 {
                g[i] += a * fg[i];
            }
        }
        (v, g)
    }

    fn kinks(&self) -> Vec<PlaneSection> {
        let mut out: Vec<PlaneSection> = Vec::new();
        for (_, f) in &self.terms {
            for k in f.kinks() {
                if !out.iter().any(|q| same_section(q, &k)) {
                    out.push(k);
                }
            }
        }
        out
    }
}

pub fn same_section(a: &PlaneSection, b: &PlaneSection) -> bool {
    let d: f64 = (0..3).map(|i| (a.normal[i] - b.normal[i]).abs()).sum();
    let e: f64 = (0..3).map(|i| (a.normal[i] + b.normal[i]).abs()).sum();
    (d < 1e-13 && (a.offset - b.offset).abs() < 1e-13)
        || (e < 1e-13 && (a.offset + b.offset).abs() < 1e-13)
}

/// Union of kink sets without duplicates.
pub fn merge_kinks(lists: &[Vec<PlaneSection>]) -> Vec<PlaneSection> {
    let mut out: Vec<PlaneSection> = Vec::new();
    for l in lists {
        for k in l {
            if !out.iter().any(|q| same_section(q, k)) {
                out.push(*k);
            }
        }
    }
    out
}

/// Pointwise positive part; `extra_kinks` lists the known zero sections of the inner field.
#[derive(Clone)]
pub struct PositivePart {
    pub inner: Arc<dyn SphereField>,
    pub extra_kinks: Vec<PlaneSection>,
}

impl SphereField for PositivePart {
    fn eval(&self, x: &Point) -> (f64, Point) {
        let (v, g) = self.inner.eval(x);
        if v > 0.0 {
            (v, g)
        } else {
            (0.0, [0.0; 3])
        }
    }

    fn kinks(&self) -> Vec<PlaneSection> {
        merge_kinks(&[self.inner.kinks(), self.extra_kinks.clone()])
    }
}
