use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::grid::{Grid, GridFunction};
use super::solver::{SolveStats, SolverConfig};
use crate::numerics::Point;
use crate::{Error, Result};

/// JSON sidecar stored next to a binary grid function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub grid: Grid,
    pub config: SolverConfig,
    pub stats: SolveStats,
    pub converged: bool,
}

/// Layout: d, n as little-endian u64, L as f64, then the node values in row-major order.
pub fn encode_binary(u: &GridFunction) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * u.values.len());
    out.extend_from_slice(&(u.grid.d as u64).to_le_bytes());
    out.extend_from_slice(&(u.grid.n as u64).to_le_bytes());
    out.extend_from_slice(&u.grid.half_width.to_le_bytes());
    for v in &u.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_binary(u: &GridFunction, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&encode_binary(u))?;
    w.flush()?;
    Ok(())
}

pub fn read_binary(path: &Path) -> Result<GridFunction> {
    let mut r = BufReader::new(File::open(path)?);
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    let d = u64::from_le_bytes(buf) as usize;
    r.read_exact(&mut buf)?;
    let n = u64::from_le_bytes(buf) as usize;
    r.read_exact(&mut buf)?;
    let half_width = f64::from_le_bytes(buf);
    let grid = Grid::new(d, half_width, n)?;
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        r.read_exact(&mut buf)?;
        values.push(f64::from_le_bytes(buf));
    }
    if r.read(&mut buf)? != 0 {
        return Err(Error::InvalidInput("trailing bytes after grid values".into()));
    }
    Ok(GridFunction { grid, values })
}

pub fn write_sidecar(sidecar: &Sidecar, path: &Path) -> Result<()> {
    let s = serde_json::to_string_pretty(sidecar).map_err(|e| Error::InvalidInput(e.to_string()))?;
    std::fs::write(path, s)?;
    Ok(())
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let s = std::fs::read_to_string(path)?;
    serde_json::from_str(&s).map_err(|e| Error::InvalidInput(e.to_string()))
}

pub fn write_free_boundary_csv(points: &[Point], d: usize, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let names = ["x", "y", "z"];
    writeln!(w, "{}", names[..d].join(","))?;
    for p in points {
        let row: Vec<String> = p[..d].iter().map(|v| format!("{v:.12e}")).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}
