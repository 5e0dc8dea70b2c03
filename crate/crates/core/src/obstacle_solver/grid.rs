use serde::{Deserialize, Serialize};

use crate::numerics::Point;
use crate::{Error, Result};

/// Uniform box grid on [-L, L]^d with n points per side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub d: usize,
    pub half_width: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(d: usize, half_width: f64, n: usize) -> Result<Grid> {
        if d != 2 && d != 3 {
            return Err(Error::UnsupportedDimension(d));
        }
        if n < 33 {
            return Err(Error::InvalidInput(format!("grid needs n >= 33, got {n}")));
        }
        if !(half_width > 0.0) {
            return Err(Error::InvalidInput("grid half-width must be positive".into()));
        }
        Ok(Grid { d, half_width, n })
    }

    /// The unit box [-1, 1]^d.
    pub fn unit(d: usize, n: usize) -> Result<Grid> {
        Grid::new(d, 1.0, n)
    }

    pub fn h(&self) -> f64 {
        2.0 * self.half_width / (self.n - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.h()
    }

    /// Row-major multi-index (first axis slowest).
    pub fn index(&self, ijk: &[usize]) -> usize {
        ijk.iter().fold(0, |acc, &i| acc * self.n + i)
    }

    pub fn multi_index(&self, mut idx: usize) -> [usize; 3] {
        let mut out = [0; 3];
        for k in (0..self.d).rev() {
            out[k] = idx % self.n;
            idx /= self.n;
        }
        out
    }

    pub fn point(&self, idx: usize) -> Point {
        let m = self.multi_index(idx);
        let mut p = [0.0; 3];
        for k in 0..self.d {
            p[k] = self.coord(m[k]);
        }
        p
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let m = self.multi_index(idx);
        (0..self.d).any(|k| m[k] == 0 || m[k] == self.n - 1)
    }

    /// Stride of axis k in the flat layout.
    pub fn stride(&self, k: usize) -> usize {
        self.n.pow((self.d - 1 - k) as u32)
    }

    /// Errors unless the closed ball B_r(x0) lies in the box.
    pub fn check_ball(&self, x0: &Point, r: f64) -> Result<()> {
        let inside = r > 0.0 && (0..self.d).all(|k| x0[k].abs() + r <= self.half_width + 1e-12);
        if inside {
            Ok(())
        } else {
            Err(Error::BallOutsideDomain { x0: x0[..self.d].to_vec(), r })
        }
    }
}

/// Nodal values on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    pub grid: Grid,
    pub values: Vec<f64>,
}

fn cubic_weights(s: f64) -> ([f64; 4], [f64; 4]) {
    let w = [
        -s * (s - 1.0) * (s - 2.0) / 6.0,
        (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0,
        -(s + 1.0) * s * (s - 2.0) / 2.0,
        (s + 1.0) * s * (s - 1.0) / 6.0,
    ];
    let dw = [
        -(3.0 * s * s - 6.0 * s + 2.0) / 6.0,
        (3.0 * s * s - 4.0 * s - 1.0) / 2.0,
        -(3.0 * s * s - 2.0 * s - 2.0) / 2.0,
        (3.0 * s * s - 1.0) / 6.0,
    ];
    (w, dw)
}

impl GridFunction {
    pub fn zeros(grid: Grid) -> Self {
        GridFunction { grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_fn<F: Fn(&Point) -> f64>(grid: Grid, f: F) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        GridFunction { grid, values }
    }

    /// Tensor cubic Lagrange interpolant and its gradient. Points outside the box are
    /// extrapolated from the nearest stencil.
    pub fn interpolate(&self, p: &Point) -> (f64, Point) {
        let g = &self.grid;
        let h = g.h();
        let d = g.d;
        let mut base = [0usize; 3];
        let mut w = [[0.0; 4]; 3];
        let mut dw = [[0.0; 4]; 3];
        for k in 0..d {
            let t = (p[k] + g.half_width) / h;
            let i = (t.floor() as i64).clamp(1, g.n as i64 - 3) as usize;
            let (a, b) = cubic_weights(t - i as f64);
            base[k] = i - 1;
            w[k] = a;
            dw[k] = b;
        }
        let mut val = 0.0;
        let mut grad = [0.0; 3];
        if d == 2 {
            for a in 0..4 {
                for b in 0..4 {
                    let v = self.values[(base[0] + a) * g.n + base[1] + b];
                    val += w[0][a] * w[1][b] * v;
                    grad[0] += dw[0][a] * w[1][b] * v;
                    grad[1] += w[0][a] * dw[1][b] * v;
                }
            }
        } else {
            for a in 0..4 {
                for b in 0..4 {
                    let row = ((base[0] + a) * g.n + base[1] + b) * g.n + base[2];
                    for c in 0..4 {
                        let v = self.values[row + c];
                        let wab = w[0][a] * w[1][b];
                        val += wab * w[2][c] * v;
                        grad[0] += dw[0][a] * w[1][b] * w[2][c] * v;
                        grad[1] += w[0][a] * dw[1][b] * w[2][c] * v;
                        grad[2] += wab * dw[2][c] * v;
                    }
                }
            }
        }
        for c in grad.iter_mut().take(d) {
            *c /= h;
        }
        (val, grad)
    }

    /// Multilinear interpolant.
    pub fn interpolate_linear(&self, p: &Point) -> f64 {
        let g = &self.grid;
        let h = g.h();
        let mut base = [0usize; 3];
        let mut s = [0.0; 3];
        for k in 0..g.d {
            let t = ((p[k] + g.half_width) / h).clamp(0.0, (g.n - 1) as f64);
            let i = (t.floor() as usize).min(g.n - 2);
            base[k] = i;
            s[k] = t - i as f64;
        }
        let mut val = 0.0;
        for corner in 0..(1usize << g.d) {
            let mut wgt = 1.0;
            let mut idx = 0;
            for k in 0..g.d {
                let bit = (corner >> (g.d - 1 - k)) & 1;
                wgt *= if bit == 1 { s[k] } else { 1.0 - s[k] };
                idx = idx * g.n + base[k] + bit;
            }
            val += wgt * self.values[idx];
        }
        val
    }

    pub fn max_abs_diff(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}
