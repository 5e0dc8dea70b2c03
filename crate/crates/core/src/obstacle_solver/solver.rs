use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{Grid, GridFunction};
use crate::numerics::Point;
use crate::{Error, Result};

/// Right-hand weight q(x) >= c_q > 0 in the functional int |grad u|^2 + int q u.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Weight {
    Constant { value: f64 },
    /// base + amplitude * |x - center|^alpha, Hoelder continuous of order alpha.
    Holder { base: f64, amplitude: f64, alpha: f64, center: Point },
}

impl Default for Weight {
    fn default() -> Self {
        Weight::Constant { value: 1.0 }
    }
}

impl Weight {
    pub fn eval(&self, x: &Point) -> f64 {
        match self {
            Weight::Constant { value } => *value,
            Weight::Holder { base, amplitude, alpha, center } => {
                let r2: f64 = (0..3).map(|k| (x[k] - center[k]).powi(2)).sum();
                base + amplitude * r2.sqrt().powf(*alpha)
            }
        }
    }

    fn lower_bound(&self) -> f64 {
        match self {
            Weight::Constant { value } => *value,
            Weight::Holder { base, amplitude, .. } => base.min(base + amplitude),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub max_sweeps: usize,
    pub relaxation: f64,
    pub weight: Weight,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tolerance: 1e-10, max_sweeps: 200_000, relaxation: 1.8, weight: Weight::default() }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidInput("solver tolerance must be positive".into()));
        }
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return Err(Error::InvalidInput(format!("relaxation {} outside (0, 2)", self.relaxation)));
        }
        if !(self.weight.lower_bound() > 0.0) {
            return Err(Error::InvalidInput("weight must be bounded below by a positive constant".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub init_sweeps: usize,
    pub sweeps: usize,
    pub final_change: f64,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub u: GridFunction,
    pub stats: SolveStats,
}

struct Stencil {
    grid: Grid,
    strides: [usize; 3],
}

impl Stencil {
    fn new(grid: Grid) -> Self {
        let mut strides = [0; 3];
        for (k, s) in strides.iter_mut().enumerate().take(grid.d) {
            *s = grid.stride(k);
        }
        Stencil { grid, strides }
    }

    fn neighbor_sum(&self, v: &[f64], idx: usize) -> f64 {
        let mut s = 0.0;
        for k in 0..self.grid.d {
            s += v[idx - self.strides[k]] + v[idx + self.strides[k]];
        }
        s
    }

    /// One red-black half sweep: nodes of `color` in `next` are relaxed using `cur`,
    /// everything else is copied. Returns the largest change.
    fn half_sweep(
        &self,
        cur: &[f64],
        next: &mut [f64],
        rhs: &[f64],
        color: usize,
        omega: f64,
        project: bool,
    ) -> f64 {
        let g = self.grid;
        let n = g.n;
        let row = n.pow(g.d as u32 - 1);
        let two_d = 2.0 * g.d as f64;
        next.par_chunks_mut(row)
            .enumerate()
            .map(|(i, out)| {
                let base = i * row;
                out.copy_from_slice(&cur[base..base + row]);
                if i == 0 || i == n - 1 {
                    return 0.0;
                }
                let mut change: f64 = 0.0;
                for (off, slot) in out.iter_mut().enumerate() {
                    let (j, k) = if g.d == 2 { (off, 0) } else { (off / n, off % n) };
                    if (i + j + k) % 2 != color || j == 0 || j == n - 1 {
                        continue;
                    }
                    if g.d == 3 && (k == 0 || k == n - 1) {
                        continue;
                    }
                    let idx = base + off;
                    let gs = (self.neighbor_sum(cur, idx) - rhs[idx]) / two_d;
                    let mut v = cur[idx] + omega * (gs - cur[idx]);
                    if project {
                        v = v.max(0.0);
                    }
                    change = change.max((v - cur[idx]).abs());
                    *slot = v;
                }
                change
            })
            .reduce(|| 0.0, f64::max)
    }

    fn iterate(
        &self,
        values: &mut Vec<f64>,
        rhs: &[f64],
        omega: f64,
        project: bool,
        tol: f64,
        max_sweeps: usize,
        what: &'static str,
    ) -> Result<(usize, f64)> {
        let mut scratch = values.clone();
        let mut change = f64::INFINITY;
        for sweep in 1..=max_sweeps {
            let a = self.half_sweep(values, &mut scratch, rhs, 0, omega, project);
            let b = self.half_sweep(&scratch, values, rhs, 1, omega, project);
            change = a.max(b);
            if change < tol {
                return Ok((sweep, change));
            }
        }
        Err(Error::NoConvergence { what, iterations: max_sweeps, residual: change })
    }
}

/// Discrete minimizer of int |grad u|^2 + int q u over u >= 0 with u = g on the box boundary,
/// by projected red-black SOR from the positive part of the discrete harmonic extension.
pub fn solve<F>(boundary: F, config: &SolverConfig, grid: Grid) -> Result<Solution>
where
    F: Fn(&Point) -> f64,
{
    config.validate()?;
    let mut values = vec![0.0; grid.len()];
    for (i, v) in values.iter_mut().enumerate() {
        if grid.is_boundary(i) {
            let x = grid.point(i);
            let g = boundary(&x);
            if !(g >= 0.0) {
                return Err(Error::InvalidInput(format!("negative boundary data {g} at {:?}", &x[..grid.d])));
            }
            *v = g;
        }
    }
    let st = Stencil::new(grid);
    let h = grid.h();

    let zero = vec![0.0; grid.len()];
    let omega_opt = 2.0 / (1.0 + (std::f64::consts::PI / (grid.n - 1) as f64).sin());
    let (init_sweeps, _) =
        st.iterate(&mut values, &zero, omega_opt, false, config.tolerance, config.max_sweeps, "harmonic extension")?;
    for v in values.iter_mut() {
        *v = v.max(0.0);
    }

    let rhs: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| 0.5 * h * h * config.weight.eval(&grid.point(i)))
        .collect();
    let (sweeps, final_change) = st.iterate(
        &mut values,
        &rhs,
        config.relaxation,
        true,
        config.tolerance,
        config.max_sweeps,
        "projected SOR",
    )?;
    Ok(Solution { u: GridFunction { grid, values }, stats: SolveStats { init_sweeps, sweeps, final_change } })
}

/// Discrete Laplacian at interior nodes (zero on the boundary).
pub fn discrete_laplacian(u: &GridFunction) -> Vec<f64> {
    let g = u.grid;
    let st = Stencil::new(g);
    let h2 = g.h() * g.h();
    let two_d = 2.0 * g.d as f64;
    (0..g.len())
        .into_par_iter()
        .map(|i| {
            if g.is_boundary(i) {
                0.0
            } else {
                (st.neighbor_sum(&u.values, i) - two_d * u.values[i]) / h2
            }
        })
        .collect()
}

/// E_h(u) = h^{d-2} sum over edges (u_i - u_j)^2 + h^d sum over interior nodes q u.
pub fn discrete_energy(u: &GridFunction, weight: &Weight) -> f64 {
    let g = u.grid;
    let h = g.h();
    let st = Stencil::new(g);
    let n = g.n;
    let (grad, mass) = (0..g.len())
        .into_par_iter()
        .map(|i| {
            let m = g.multi_index(i);
            let mut e = 0.0;
            for k in 0..g.d {
                if m[k] + 1 < n {
                    let diff = u.values[i + st.strides[k]] - u.values[i];
                    e += diff * diff;
                }
            }
            let q = if g.is_boundary(i) { 0.0 } else { weight.eval(&g.point(i)) * u.values[i] };
            (e, q)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    h.powi(g.d as i32 - 2) * grad + h.powi(g.d as i32) * mass
}

/// Worst violation of the discrete complementarity system, scaled by h^2:
/// max over interior nodes of max(-u, u (q/2 - lap u), -(q/2 - lap u)) * h^2.
pub fn complementarity_residual(u: &GridFunction, weight: &Weight) -> f64 {
    let g = u.grid;
    let h2 = g.h() * g.h();
    let lap = discrete_laplacian(u);
    (0..g.len())
        .filter(|&i| !g.is_boundary(i))
        .map(|i| {
            let slack = 0.5 * weight.eval(&g.point(i)) - lap[i];
            let v = u.values[i];
            (-v).max(v * slack).max(-slack) * h2
        })
        .fold(0.0, f64::max)
}

/// Free-boundary points: interior nodes with u <= 10 h^2 next to a node above that level.
/// Each flagged node is moved to where sqrt(u), extended linearly along the edge to its
/// positive neighbor, vanishes; this undoes the quadratic growth across the band.
pub fn free_boundary_nodes(u: &GridFunction) -> Vec<Point> {
    let g = u.grid;
    let h = g.h();
    let thr = 10.0 * h * h;
    let st = Stencil::new(g);
    (0..g.len())
        .into_par_iter()
        .filter_map(|i| {
            if g.is_boundary(i) || u.values[i] > thr {
                return None;
            }
            let p = g.point(i);
            let sp = u.values[i].max(0.0).sqrt();
            let mut best: Option<(f64, Point)> = None;
            for k in 0..g.d {
                for (j, sign) in [(i + st.strides[k], 1.0), (i - st.strides[k], -1.0)] {
                    if u.values[j] <= thr {
                        continue;
                    }
                    let sn = u.values[j].sqrt();
                    // Steps of size h from p away from j.
                    let t = (sp / (sn - sp)).min(10.0);
                    let mut x = p;
                    x[k] -= sign * t * h;
                    x[k] = x[k].clamp(-g.half_width, g.half_width);
                    if best.as_ref().map_or(true, |(bt, _)| t < *bt) {
                        best = Some((t, x));
                    }
                }
            }
            best.map(|(_, x)| x)
        })
        .collect()
}
