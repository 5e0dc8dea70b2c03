//! Run configuration: `key = value` files overlaid by command-line flags.
//!
//! Keys (all optional):
//!
//! | key                | meaning                                                     |
//! |--------------------|-------------------------------------------------------------|
//! | `dim`              | dimension, 2 or 3                                           |
//! | `resolution`       | quadrature resolution (verify-epi) or grid points (solve)   |
//! | `modes`            | cap modes of the flat family                                |
//! | `eps`              | comma-separated eps list (verify-epi, sharpness)            |
//! | `seed`             | seed of the sampled trace families                          |
//! | `out`              | output directory                                            |
//! | `flat_samples`     | flat traces per run                                         |
//! | `singular_samples` | singular traces per eps, split over the three families      |
//! | `data`             | solve data: half-space, singular, kernel, cubic, tilted     |
//! | `weight_amplitude` | weight q = 1 + amplitude r^weight_alpha in the solve        |
//! | `weight_alpha`     | Hoelder exponent of the weight                              |
//! | `input`            | grid function for classify and decay                        |
//! | `points`           | `x,y[,z]; ...` points for classify and decay                |
//! | `spacing`          | minimal distance between free-boundary points in classify   |
//! | `scales`           | number of scales in the decay series                        |
//! | `gamma`            | exponent of the decay fit                                   |
//! | `correction_alpha` | almost-minimizer correction exponent in decay               |
//! | `correction_c1`    | almost-minimizer correction constant in decay               |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const KEYS: [&str; 18] = [
    "dim",
    "resolution",
    "modes",
    "eps",
    "seed",
    "out",
    "flat_samples",
    "singular_samples",
    "data",
    "weight_amplitude",
    "weight_alpha",
    "input",
    "points",
    "spacing",
    "scales",
    "gamma",
    "correction_alpha",
    "correction_c1",
];

/// Invalid or unreadable configuration; maps to exit status 1.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(ConfigError(msg.into()))
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| config_err(format!("line {}: expected `key = value`, got `{raw}`", no + 1)))?;
        let k = k.trim();
        if !KEYS.contains(&k) {
            return Err(config_err(format!("line {}: unknown key `{k}`", no + 1)));
        }
        if out.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(config_err(format!("line {}: duplicate key `{k}`", no + 1)));
        }
    }
    Ok(out)
}

pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    parse_config_text(&text)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataKind {
    /// q_{e_d/2}.
    HalfSpace,
    /// Q_A with A = I / (4d).
    Singular,
    /// Q_A with A = diag(0, ..., 0, 1/4).
    Kernel,
    /// |x|^2/8 + 0.05 Re (x1 + i x2)^3, d = 2.
    Cubic,
    /// (1/4) (0.6 x1 + 0.8 x2 + 0.1 x1^2)_+^2, d = 2.
    Tilted,
}

impl DataKind {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "half-space" => DataKind::HalfSpace,
            "singular" => DataKind::Singular,
            "kernel" => DataKind::Kernel,
            "cubic" => DataKind::Cubic,
            "tilted" => DataKind::Tilted,
            _ => return Err(config_err(format!("unknown data `{s}`"))),
        })
    }
}

/// Resolved configuration. `out` is not part of the hash.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub dim: usize,
    pub resolution: Option<usize>,
    pub modes: Option<usize>,
    pub eps: Vec<f64>,
    pub seed: u64,
    #[serde(skip)]
    pub out: PathBuf,
    pub flat_samples: usize,
    pub singular_samples: usize,
    pub data: DataKind,
    pub weight_amplitude: f64,
    pub weight_alpha: f64,
    #[serde(skip)]
    pub input: Option<PathBuf>,
    /// SHA-256 of the input file, hashed instead of its path.
    pub input_digest: Option<String>,
    pub points: Vec<Vec<f64>>,
    pub spacing: f64,
    pub scales: usize,
    pub gamma: Option<f64>,
    pub correction_alpha: f64,
    pub correction_c1: f64,
}

fn num<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str, default: T) -> Result<T> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|_| config_err(format!("`{key}`: cannot parse `{v}`"))),
    }
}

fn opt<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    map.get(key)
        .map(|v| v.parse().map_err(|_| config_err(format!("`{key}`: cannot parse `{v}`"))))
        .transpose()
}

fn float_list(s: &str, key: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| config_err(format!("`{key}`: cannot parse `{t}`"))))
        .collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunConfig {
    pub fn resolve(command: &str, map: &BTreeMap<String, String>) -> Result<RunConfig> {
        let dim: usize = num(map, "dim", 2)?;
        if dim != 2 && dim != 3 {
            return Err(config_err(format!("dim must be 2 or 3, got {dim}")));
        }
        let eps = match map.get("eps") {
            Some(v) => float_list(v, "eps")?,
            None => Vec::new(),
        };
        if eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(config_err("eps values must be positive"));
        }
        let points = match map.get("points") {
            Some(v) => v
                .split(';')
                .filter(|p| !p.trim().is_empty())
                .map(|p| {
                    let x = float_list(p, "points")?;
                    if x.len() != dim {
                        return Err(config_err(format!("point `{p}` does not have {dim} coordinates")));
                    }
                    Ok(x)
                })
                .collect::<Result<Vec<_>>>()?,
            None => Vec::new(),
        };
        let input: Option<PathBuf> = map.get("input").map(PathBuf::from);
        let input_digest = match &input {
            Some(p) => Some(sha256_hex(
                &std::fs::read(p).map_err(|e| config_err(format!("cannot read input {}: {e}", p.display())))?,
            )),
            None => None,
        };
        let cfg = RunConfig {
            command: command.to_string(),
            dim,
            resolution: opt(map, "resolution")?,
            modes: opt(map, "modes")?,
            eps,
            seed: num(map, "seed", 1)?,
            out: PathBuf::from(map.get("out").map(String::as_str).unwrap_or("out")),
            flat_samples: num(map, "flat_samples", 100)?,
            singular_samples: num(map, "singular_samples", 100)?,
            data: DataKind::parse(map.get("data").map(String::as_str).unwrap_or("half-space"))?,
            weight_amplitude: num(map, "weight_amplitude", 0.0)?,
            weight_alpha: num(map, "weight_alpha", 0.5)?,
            input,
            input_digest,
            points,
            spacing: num(map, "spacing", 0.25)?,
            scales: num(map, "scales", 8)?,
            gamma: opt(map, "gamma")?,
            correction_alpha: num(map, "correction_alpha", 0.5)?,
            correction_c1: num(map, "correction_c1", 0.0)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if let Some(n) = self.resolution {
            if n < 8 {
                bail!(ConfigError(format!("resolution {n} is too small")));
            }
        }
        if self.modes == Some(0) {
            bail!(ConfigError("modes must be positive".into()));
        }
        if !(self.weight_amplitude >= 0.0) || !(self.weight_alpha > 0.0 && self.weight_alpha <= 1.0) {
            bail!(ConfigError("need weight_amplitude >= 0 and weight_alpha in (0, 1]".into()));
        }
        if !(self.spacing >= 0.0) {
            bail!(ConfigError("spacing must be nonnegative".into()));
        }
        if self.scales < 2 {
            bail!(ConfigError("scales must be at least 2".into()));
        }
        if let Some(g) = self.gamma {
            if !(0.0..1.0).contains(&g) {
                bail!(ConfigError(format!("gamma = {g} outside [0, 1)")));
            }
        }
        if !(self.correction_alpha > 0.0 && self.correction_alpha <= 1.0) || !(self.correction_c1 >= 0.0) {
            bail!(ConfigError("need correction_alpha in (0, 1] and correction_c1 >= 0".into()));
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        sha256_hex(json.as_bytes())[..16].to_string()
    }

    pub fn input_path(&self) -> Result<&Path> {
        self.input.as_deref().context("`input` is required for this command").map_err(|e| config_err(e.to_string()))
    }
}
