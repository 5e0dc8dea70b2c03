//! Numerical laboratory for the obstacle problem and its free-boundary regularity.
//!
//! Modules, bottom-up:
//! - [`sphere_basis`]: quadrature and Dirichlet eigenbases on spheres, half-spheres and caps.
//! - [`energy`]: Weiss boundary-adjusted energies and the homogeneous-extension comparison.
//! - [`decompose`]: trace splittings near the blow-up cones.
//! - [`epiperimetric`]: explicit competitors and inequality checks.
//! - [`obstacle_solver`]: projected red-black SOR on box grids.
//! - [`fb_analysis`]: density, classification and decay of the Weiss gap.

pub mod decompose;
pub mod energy;
pub mod epiperimetric;
pub mod error;
pub mod fb_analysis;
pub mod numerics;
pub mod obstacle_solver;
pub mod sphere_basis;

pub use error::{Error, Result};
