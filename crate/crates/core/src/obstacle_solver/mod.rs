//! Discrete obstacle problem on the box [-L, L]^d.

mod grid;
mod io;
mod solver;

pub use grid::{Grid, GridFunction};
pub use io::{encode_binary, read_binary, read_sidecar, write_binary, write_free_boundary_csv, write_sidecar, Sidecar};
pub use solver::{
    complementarity_residual, discrete_energy, discrete_laplacian, free_boundary_nodes, solve, Solution,
    SolveStats, SolverConfig, Weight,
};

use crate::energy::{weiss_at_scale, EnergyReport};
use crate::numerics::Point;
use crate::Result;

/// W(u, x0, r) = W(u_{x0,r}).
pub fn energy_at_scale(u: &GridFunction, x0: &Point, r: f64) -> Result<EnergyReport> {
    weiss_at_scale(u, x0, r)
}
