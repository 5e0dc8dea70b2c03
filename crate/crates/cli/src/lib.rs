//! Batch front-end: verify-epi, solve, classify, decay and sharpness, each reading a
//! `key = value` config overlaid by flags and writing CSV/JSON reports into `--out`.
//!
//! Exit status: 0 on success, 1 on configuration or runtime errors, 2 when verify-epi finds a
//! violated inequality.

pub mod commands;
pub mod config;
pub mod output;


use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use commands::Status;
use config::{read_config_file, ConfigError, RunConfig, KEYS};
use output::Outputs;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;

/// Caps the worker pool when set.
pub const THREADS_ENV: &str = "OBSTACLE_EPI_THREADS";

#[derive(Parser)]
#[command(name = "obstacle-epi", version, about = "Epiperimetric and free-boundary verification suites")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Flat and singular epiperimetric inequality suites.
    VerifyEpi(Flags),
    /// Obstacle problem on [-1, 1]^d with the chosen boundary data.
    Solve(Flags),
    /// Density and blow-up of free-boundary points of a solved grid function.
    Classify(Flags),
    /// Decay of the Weiss gap at given points of a solved grid function.
    Decay(Flags),
    /// Scaling of the axially symmetric d = 3 example.
    Sharpness(Flags),
}

#[derive(Args, Default)]
struct Flags {
    /// `key = value` config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    modes: Option<usize>,
    /// Comma-separated list.
    #[arg(long, allow_hyphen_values = true)]
    eps: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    data: Option<String>,
    /// `x,y[,z]; ...`
    #[arg(long, allow_hyphen_values = true)]
    points: Option<String>,
    /// Any other config key.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Flags {
    fn overlay(&self) -> Result<BTreeMap<String, String>> {
        let mut map = match &self.config {
            Some(p) => read_config_file(p)?,
            None => BTreeMap::new(),
        };
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                map.insert(k.to_string(), v);
            }
        };
        put("dim", self.dim.map(|v| v.to_string()));
        put("resolution", self.resolution.map(|v| v.to_string()));
        put("modes", self.modes.map(|v| v.to_string()));
        put("eps", self.eps.clone());
        put("seed", self.seed.map(|v| v.to_string()));
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        put("input", self.input.as_ref().map(|p| p.display().to_string()));
        put("data", self.data.clone());
        put("points", self.points.clone());
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            let k = k.trim();
            if !KEYS.contains(&k) {
                return Err(ConfigError(format!("unknown key `{k}`")).into());
            }
            map.insert(k.to_string(), v.trim().to_string());
        }
        Ok(map)
    }
}

/// Parses a value of the thread-count variable; `None` leaves the pool at its default size.
pub fn thread_count(value: Option<&str>) -> Result<Option<usize>> {
    let Some(v) = value else { return Ok(None) };
    v.trim()
        .parse::<usize>()
        .ok()
        .filter(|n| *n > 0)
        .map(Some)
        .ok_or_else(|| ConfigError(format!("{THREADS_ENV} must be a positive integer, got `{v}`")).into())
}

fn configure_threads() -> Result<()> {
    if let Some(n) = thread_count(std::env::var(THREADS_ENV).ok().as_deref())? {
        // A pool built earlier in this process (e.g. by an in-process caller) is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Runs one command and writes its reports; returns the exit status.
pub fn run_command(name: &str, map: &BTreeMap<String, String>) -> Result<Status> {
    let cfg = RunConfig::resolve(name, map)?;
    let mut out = Outputs::default();
    let status = match name {
        "verify-epi" => commands::verify_epi(&cfg, &mut out)?,
        "solve" => commands::solve_cmd(&cfg, &mut out)?,
        "classify" => commands::classify_cmd(&cfg, &mut out)?,
        "decay" => commands::decay_cmd(&cfg, &mut out)?,
        "sharpness" => commands::sharpness_cmd(&cfg, &mut out)?,
        _ => return Err(ConfigError(format!("unknown command `{name}`")).into()),
    };
    for p in out.write_all(&cfg.out)? {
        eprintln!("wrote {}", p.display());
    }
    Ok(status)
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (name, flags) = match &cli.command {
        Cmd::VerifyEpi(f) => ("verify-epi", f),
        Cmd::Solve(f) => ("solve", f),
        Cmd::Classify(f) => ("classify", f),
        Cmd::Decay(f) => ("decay", f),
        Cmd::Sharpness(f) => ("sharpness", f),
    };
    let result = configure_threads().and_then(|_| flags.overlay()).and_then(|m| run_command(name, &m));
    match result {
        Ok(Status::Ok) => EXIT_OK,
        Ok(Status::Violations(n)) => {
            eprintln!("{name}: {n} violated inequalit{}", if n == 1 { "y" } else { "ies" });
            EXIT_VIOLATION
        }
        Err(e) => {
            eprintln!("{name}: {e:#}");
            EXIT_ERROR
        }
    }
}
