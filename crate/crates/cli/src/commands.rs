use std::sync::Arc;

use anyhow::{bail, Result};
use rayon::prelude::*;
use serde::Serialize;

use obstacle_epi::decompose::{HalfSquareProfile, QuadraticForm};
use obstacle_epi::energy::density_constants;
use obstacle_epi::epiperimetric::{
    c4, flat_competitor, higher_mode_controls, sample_flat, sample_singular, sharpness_scan, singular_basis,
    theorem_gamma, SingularFamily, SingularSetup,
};
use obstacle_epi::fb_analysis::{
    almost_min_correction, blowup_modulus_check, chain_checks, classify_point, decay_fit, decay_series,
    dyadic_scales, geometric_scales, ode_decay_oracle, weiss_monotonicity_defect, Blowup, ChainCheck, DecayFit,
    DecaySeries, ModulusReport, PointClassification, PointKind, MIN_SCALE_IN_H,
};
use obstacle_epi::numerics::{norm, sub, Point};
use obstacle_epi::obstacle_solver::{
    complementarity_residual, encode_binary, free_boundary_nodes, read_binary, solve, Grid, GridFunction, Sidecar,
    SolverConfig, Weight,
};
use obstacle_epi::sphere_basis::{build_basis, SphericalDomain};
use obstacle_epi::Error;

use crate::config::{ConfigError, DataKind, RunConfig};
use crate::output::{fmt, fmt_log, fmt_opt, join, CsvTable, Outputs};

/// Cap half-width of the flat family.
pub const FLAT_CAP_DELTA: f64 = 0.1;
pub const DEFAULT_SINGULAR_EPS: f64 = 1e-3;
pub const DEFAULT_SHARPNESS_EPS: [f64; 5] = [0.16, 0.08, 0.04, 0.02, 0.01];
/// Classification looks for free-boundary points in the box |x|_inf <= this.
pub const CLASSIFY_WINDOW: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    Violations(usize),
}

fn point_of(x: &[f64]) -> Point {
    let mut p = [0.0; 3];
    p[..x.len()].copy_from_slice(x);
    p
}

// ---------------------------------------------------------------------------------------------
// verify-epi

#[derive(Serialize)]
struct EpiRow {
    family: &'static str,
    trace_id: usize,
    eps: f64,
    w_z: f64,
    w_h: Option<f64>,
    gain: Option<f64>,
    required_gain: f64,
    empirical_eps: Option<f64>,
    final_ratio: Option<f64>,
    satisfied: bool,
}

#[derive(Serialize)]
struct FamilySummary {
    family: &'static str,
    eps: f64,
    count: usize,
    violations: usize,
    empirical_eps_infimum: Option<f64>,
    max_final_ratio: Option<f64>,
}

#[derive(Serialize)]
struct EpiSummary {
    command: &'static str,
    config_hash: String,
    d: usize,
    flat_eps: f64,
    c4_bound: f64,
    families: Vec<FamilySummary>,
    violations: usize,
    all_satisfied: bool,
}

fn summarize(family: &'static str, eps: f64, rows: &[EpiRow]) -> FamilySummary {
    let fmin = |v: Vec<f64>| v.into_iter().reduce(f64::min);
    let fmax = |v: Vec<f64>| v.into_iter().reduce(f64::max);
    FamilySummary {
        family,
        eps,
        count: rows.len(),
        violations: rows.iter().filter(|r| !r.satisfied).count(),
        empirical_eps_infimum: fmin(rows.iter().filter_map(|r| r.empirical_eps).collect()),
        max_final_ratio: fmax(rows.iter().filter_map(|r| r.final_ratio).collect()),
    }
}

fn family_sizes(total: usize) -> [usize; 3] {
    let mut s = [total / 3; 3];
    for v in s.iter_mut().take(total % 3) {
        *v += 1;
    }
    s
}

pub fn verify_epi(cfg: &RunConfig, out: &mut Outputs) -> Result<Status> {
    let d = cfg.dim;
    let hash = cfg.hash();
    let modes = cfg.modes.unwrap_or(if d == 2 { 12 } else { 16 });
    let resolution = cfg.resolution.unwrap_or(40);
    let eps_list = if cfg.eps.is_empty() { vec![DEFAULT_SINGULAR_EPS] } else { cfg.eps.clone() };

    let cap = Arc::new(build_basis(&SphericalDomain::cap(d, FLAT_CAP_DELTA), modes)?);
    let flat = sample_flat(&cap, cfg.flat_samples, cfg.seed)?;
    let flat_rows = flat
        .par_iter()
        .map(|s| {
            let f = flat_competitor(s.field.as_ref(), &cap, resolution)?;
            let r = f.report;
            Ok(EpiRow {
                family: "flat",
                trace_id: s.id,
                eps: f.params.eps,
                w_z: r.w_z,
                w_h: Some(r.w_h),
                gain: Some(r.gain),
                required_gain: r.required_gain,
                empirical_eps: r.empirical_eps,
                final_ratio: None,
                satisfied: r.satisfied,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let flat_eps = flat_rows.first().map_or(0.0, |r| r.eps);
    let mut families = vec![summarize("flat", flat_eps, &flat_rows)];
    let mut rows = flat_rows;

    let basis = singular_basis(d)?;
    for (fam, n) in SingularFamily::ALL.into_iter().zip(family_sizes(cfg.singular_samples)) {
        let samples = sample_singular(fam, d, n, cfg.seed)?;
        // eps-independent part of every trace.
        let setups = samples
            .par_iter()
            .map(|s| {
                let st = SingularSetup::new(&s.trace, &basis)?;
                let (_, ratio) = higher_mode_controls(&s.trace, &st.decomposition)?;
                let emp = st.empirical_eps()?;
                Ok((st, ratio, emp))
            })
            .collect::<Result<Vec<_>>>()?;
        for &eps in &eps_list {
            let fam_rows = samples
                .par_iter()
                .zip(&setups)
                .map(|(s, (st, ratio, emp))| {
                    let required_gain = st.required_gain(eps);
                    let (w_h, satisfied) = match st.competitor_energy(eps) {
                        Ok((_, w_h, _)) => (Some(w_h), st.w_z - w_h >= required_gain - 1e-12),
                        // alpha would exceed 5/2: no competitor, the inequality is not certified.
                        Err(Error::Precondition(_)) => (None, false),
                        Err(e) => return Err(e.into()),
                    };
                    Ok(EpiRow {
                        family: fam.name(),
                        trace_id: s.id,
                        eps,
                        w_z: st.w_z,
                        w_h,
                        gain: w_h.map(|w| st.w_z - w),
                        required_gain,
                        empirical_eps: *emp,
                        final_ratio: Some(*ratio),
                        satisfied,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            families.push(summarize(fam.name(), eps, &fam_rows));
            rows.extend(fam_rows);
        }
    }

    let mut csv = CsvTable::new(
        &[
            "family",
            "d",
            "trace_id",
            "eps",
            "W_z",
            "W_h",
            "gain",
            "required_gain",
            "empirical_eps",
            "final_ratio",
            "satisfied",
        ],
        &hash,
    )?;
    for r in &rows {
        csv.row(&[
            r.family.to_string(),
            d.to_string(),
            r.trace_id.to_string(),
            fmt(r.eps),
            fmt(r.w_z),
            fmt_opt(r.w_h),
            fmt_opt(r.gain),
            fmt(r.required_gain),
            fmt_opt(r.empirical_eps),
            fmt_opt(r.final_ratio),
            r.satisfied.to_string(),
        ])?;
    }
    let violations = rows.iter().filter(|r| !r.satisfied).count();
    let summary = EpiSummary {
        command: "verify-epi",
        config_hash: hash,
        d,
        flat_eps,
        c4_bound: c4(d),
        families,
        violations,
        all_satisfied: violations == 0,
    };
    out.add_csv("epi.csv", csv)?;
    out.add_json("epi_summary.json", &summary)?;
    Ok(if violations == 0 { Status::Ok } else { Status::Violations(violations) })
}

// ---------------------------------------------------------------------------------------------
// solve

fn data_field(kind: DataKind, d: usize) -> Result<Box<dyn Fn(&Point) -> f64 + Sync>> {
    Ok(match kind {
        DataKind::HalfSpace => {
            let q = HalfSquareProfile::standard(d);
            Box::new(move |x| q.value(x))
        }
        DataKind::Singular => {
            let a = QuadraticForm::diag(&vec![0.25 / d as f64; d]);
            Box::new(move |x| a.value(x))
        }
        DataKind::Kernel => {
            let mut e = vec![0.0; d];
            e[d - 1] = 0.25;
            let a = QuadraticForm::diag(&e);
            Box::new(move |x| a.value(x))
        }
        DataKind::Cubic if d == 2 => {
            Box::new(|x| (x[0] * x[0] + x[1] * x[1]) / 8.0 + 0.05 * (x[0].powi(3) - 3.0 * x[0] * x[1] * x[1]))
        }
        DataKind::Tilted if d == 2 => {
            Box::new(|x| 0.25 * (0.6 * x[0] + 0.8 * x[1] + 0.1 * x[0] * x[0]).max(0.0).powi(2))
        }
        _ => bail!(ConfigError(format!("data {kind:?} is defined for d = 2 only"))),
    })
}

#[derive(Serialize)]
struct SolveSummary {
    command: &'static str,
    config_hash: String,
    d: usize,
    n: usize,
    h: f64,
    data: DataKind,
    weight: Weight,
    init_sweeps: usize,
    sweeps: usize,
    final_change: f64,
    /// Against the data itself, which solves the problem when the weight is 1.
    sup_error: Option<f64>,
    complementarity_residual: f64,
    free_boundary_points: usize,
}

pub fn solve_cmd(cfg: &RunConfig, out: &mut Outputs) -> Result<Status> {
    let d = cfg.dim;
    let hash = cfg.hash();
    let n = cfg.resolution.unwrap_or(if d == 2 { 129 } else { 49 });
    let grid = Grid::unit(d, n)?;
    let data = data_field(cfg.data, d)?;
    let weight = if cfg.weight_amplitude > 0.0 {
        Weight::Holder { base: 1.0, amplitude: cfg.weight_amplitude, alpha: cfg.weight_alpha, center: [0.0; 3] }
    } else {
        Weight::default()
    };
    let config = SolverConfig { weight: weight.clone(), ..SolverConfig::default() };
    let sol = solve(|x| data(x), &config, grid)?;
    let exact_known = cfg.weight_amplitude == 0.0 && cfg.data != DataKind::Tilted;
    let sup_error = exact_known.then(|| sol.u.max_abs_diff(&GridFunction::from_fn(grid, |x| data(x))));
    let fb = free_boundary_nodes(&sol.u);

    let mut csv = CsvTable::new(&["x"], &hash)?;
    for p in &fb {
        csv.row(&[join(&p[..d])])?;
    }
    let summary = SolveSummary {
        command: "solve",
        config_hash: hash,
        d,
        n,
        h: grid.h(),
        data: cfg.data,
        weight,
        init_sweeps: sol.stats.init_sweeps,
        sweeps: sol.stats.sweeps,
        final_change: sol.stats.final_change,
        sup_error,
        complementarity_residual: complementarity_residual(&sol.u, &config.weight),
        free_boundary_points: fb.len(),
    };
    out.add("u.bin", encode_binary(&sol.u));
    out.add_json("u.json", &Sidecar { grid, config, stats: sol.stats, converged: true })?;
    out.add_csv("free_boundary.csv", csv)?;
    out.add_json("solve.json", &summary)?;
    Ok(Status::Ok)
}

// ---------------------------------------------------------------------------------------------
// classify

fn load_input(cfg: &RunConfig) -> Result<GridFunction> {
    let u = read_binary(cfg.input_path()?)?;
    if u.grid.d != cfg.dim {
        bail!(ConfigError(format!("input has d = {}, config has dim = {}", u.grid.d, cfg.dim)));
    }
    Ok(u)
}

/// Contact nodes with a positive neighbor, plus the band points of `free_boundary_nodes`,
/// restricted to the classification window and greedily thinned to `spacing`, smallest |u| first.
pub fn thinned_free_boundary(u: &GridFunction, spacing: f64) -> Vec<Point> {
    let g = u.grid;
    let d = g.d;
    let contact = (0..g.len()).filter(|&i| {
        !g.is_boundary(i)
            && u.values[i] <= 0.0
            && (0..d).any(|k| u.values[i + g.stride(k)] > 0.0 || u.values[i - g.stride(k)] > 0.0)
    });
    let mut nodes: Vec<(f64, Point)> = contact
        .map(|i| g.point(i))
        .chain(free_boundary_nodes(u))
        .filter(|p| p[..d].iter().all(|c| c.abs() <= CLASSIFY_WINDOW))
        .map(|p| (u.interpolate_linear(&p).abs(), p))
        .collect();
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut kept: Vec<Point> = Vec::new();
    for (_, p) in nodes {
        if kept.iter().all(|q| norm(&sub(&p, q)) >= spacing) {
            kept.push(p);
        }
    }
    kept
}

fn blowup_fields(b: &Option<Blowup>) -> (String, String) {
    match b {
        Some(Blowup::HalfSpace { profile }) => ("half-space".into(), join(&profile.nu[..profile.d])),
        Some(Blowup::Quadratic { a }) => {
            let upper: Vec<f64> = (0..a.d).flat_map(|i| (i..a.d).map(move |j| (i, j))).map(|(i, j)| a.get(i, j)).collect();
            ("quadratic".into(), join(&upper))
        }
        None => (String::new(), String::new()),
    }
}

fn kind_name(k: PointKind) -> &'static str {
    match k {
        PointKind::Regular => "regular",
        PointKind::Singular => "singular",
        PointKind::Unclassified => "unclassified",
    }
}

#[derive(Serialize)]
struct ClassifiedPoint {
    classification: PointClassification,
    weiss_monotonicity_defect: f64,
}

#[derive(Serialize)]
struct ClassifySummary {
    command: &'static str,
    config_hash: String,
    d: usize,
    h: f64,
    monotonicity_slack: f64,
    regular: usize,
    singular: usize,
    unclassified: usize,
    skipped: Vec<String>,
    points: Vec<ClassifiedPoint>,
}

pub fn classify_cmd(cfg: &RunConfig, out: &mut Outputs) -> Result<Status> {
    let u = load_input(cfg)?;
    let d = u.grid.d;
    let hash = cfg.hash();
    let points: Vec<Point> = if cfg.points.is_empty() {
        thinned_free_boundary(&u, cfg.spacing)
    } else {
        cfg.points.iter().map(|p| point_of(p)).collect()
    };
    let results: Vec<std::result::Result<ClassifiedPoint, String>> = points
        .par_iter()
        .map(|p| {
            let c = classify_point(&u, p).map_err(|e| format!("{:?}: {e}", &p[..d]))?;
            let m = weiss_monotonicity_defect(&u, p).map_err(|e| format!("{:?}: {e}", &p[..d]))?;
            Ok(ClassifiedPoint { classification: c, weiss_monotonicity_defect: m })
        })
        .collect();
    let mut classified = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(c) => classified.push(c),
            Err(e) => skipped.push(e),
        }
    }
    let mut csv = CsvTable::new(
        &["x0", "density", "kind", "stratum", "blowup_type", "blowup", "fit_residual", "scale", "weiss_monotonicity_defect"],
        &hash,
    )?;
    for cp in &classified {
        let c = &cp.classification;
        let (bt, bp) = blowup_fields(&c.blowup);
        csv.row(&[
            join(&c.x0),
            fmt(c.density),
            kind_name(c.kind).into(),
            c.stratum.map(|k| k.to_string()).unwrap_or_default(),
            bt,
            bp,
            fmt(c.fit_residual),
            fmt(c.scale),
            fmt(cp.weiss_monotonicity_defect),
        ])?;
    }
    let count = |k| classified.iter().filter(|c| c.classification.kind == k).count();
    let summary = ClassifySummary {
        command: "classify",
        config_hash: hash,
        d,
        h: u.grid.h(),
        monotonicity_slack: 10.0 * u.grid.h(),
        regular: count(PointKind::Regular),
        singular: count(PointKind::Singular),
        unclassified: count(PointKind::Unclassified),
        skipped,
        points: classified,
    };
    out.add_csv("classify.csv", csv)?;
    out.add_json("classify.json", &summary)?;
    Ok(Status::Ok)
}

// ---------------------------------------------------------------------------------------------
// decay

#[derive(Serialize)]
struct DecayReport {
    classification: PointClassification,
    reference_density: f64,
    gamma: f64,
    series: DecaySeries,
    fit: std::result::Result<DecayFit, String>,
    corrected_series: Option<DecaySeries>,
    corrected_fit: Option<std::result::Result<DecayFit, String>>,
    chain: Vec<ChainCheck>,
    modulus: std::result::Result<ModulusReport, String>,
}

#[derive(Serialize)]
struct DecaySummary {
    command: &'static str,
    config_hash: String,
    d: usize,
    h: f64,
    points: Vec<DecayReport>,
}

fn decay_point(u: &GridFunction, x0: &Point, cfg: &RunConfig) -> Result<DecayReport> {
    let d = u.grid.d;
    let k = density_constants(d);
    let classification = classify_point(u, x0)?;
    let regular = classification.kind == PointKind::Regular;
    let reference_density = if regular { k.theta_plus } else { k.theta };
    let gamma = cfg.gamma.unwrap_or(if regular { 0.0 } else { theorem_gamma(d) });
    let room = (0..d).map(|i| u.grid.half_width - x0[i].abs()).fold(f64::INFINITY, f64::min);
    let r_max = room.min(0.5);
    let r_min = MIN_SCALE_IN_H * u.grid.h();
    if r_max <= r_min {
        return Err(Error::InsufficientScales(format!("no room for scales around {:?}", &x0[..d])).into());
    }
    let series = decay_series(u, x0, reference_density, &geometric_scales(r_max, r_min, cfg.scales))?;
    let fit = decay_fit(&series, gamma).map_err(|e| e.to_string());
    let (corrected_series, corrected_fit) = if cfg.correction_c1 > 0.0 {
        let c = almost_min_correction(&series, cfg.correction_alpha, cfg.correction_c1)?;
        let f = decay_fit(&c, gamma).map_err(|e| e.to_string());
        (Some(c), Some(f))
    } else {
        (None, None)
    };
    let chain = chain_checks(u, x0, &dyadic_scales(u, x0))?;
    let modulus = match &classification.blowup {
        Some(b) => blowup_modulus_check(u, x0, b, gamma).map_err(|e| e.to_string()),
        None => Err("no blow-up".into()),
    };
    Ok(DecayReport {
        classification,
        reference_density,
        gamma,
        series,
        fit,
        corrected_series,
        corrected_fit,
        chain,
        modulus,
    })
}

pub fn decay_cmd(cfg: &RunConfig, out: &mut Outputs) -> Result<Status> {
    let u = load_input(cfg)?;
    let d = u.grid.d;
    let hash = cfg.hash();
    let points: Vec<Point> =
        if cfg.points.is_empty() { vec![[0.0; 3]] } else { cfg.points.iter().map(|p| point_of(p)).collect() };
    let reports = points.par_iter().map(|p| decay_point(&u, p, cfg)).collect::<Result<Vec<_>>>()?;

    let mut csv = CsvTable::new(
        &["x0", "r", "log10_r", "e", "log10_e", "f", "ode_profile", "e_corrected", "log10_e_corrected"],
        &hash,
    )?;
    for rep in &reports {
        let s = &rep.series;
        let c_fit = rep.fit.as_ref().ok().map(|f| f.c_fit).filter(|c| c.is_finite());
        for i in 0..s.len() {
            let r = s.scales[i];
            let profile = c_fit.map(|c| ode_decay_oracle(rep.gamma, c, s.gap[0], s.scales[0], r));
            let corrected = rep.corrected_series.as_ref().map(|c| c.gap[i]);
            csv.row(&[
                join(&rep.classification.x0),
                fmt(r),
                fmt_log(r),
                fmt(s.gap[i]),
                fmt_log(s.gap[i]),
                fmt(s.defect[i]),
                fmt_opt(profile),
                fmt_opt(corrected),
                corrected.map(fmt_log).unwrap_or_default(),
            ])?;
        }
    }
    let summary = DecaySummary { command: "decay", config_hash: hash, d, h: u.grid.h(), points: reports };
    out.add_csv("decay.csv", csv)?;
    out.add_json("decay.json", &summary)?;
    Ok(Status::Ok)
}

// ---------------------------------------------------------------------------------------------
// sharpness

#[derive(Serialize)]
struct SlopeRow {
    quantity: &'static str,
    slope: f64,
    expected: f64,
}

pub fn sharpness_cmd(cfg: &RunConfig, out: &mut Outputs) -> Result<Status> {
    if cfg.dim != 3 {
        bail!(ConfigError(format!("sharpness runs in d = 3 only, got dim = {}", cfg.dim)));
    }
    let hash = cfg.hash();
    let eps = if cfg.eps.is_empty() { DEFAULT_SHARPNESS_EPS.to_vec() } else { cfg.eps.clone() };
    let table = sharpness_scan(cfg.dim, &eps)?;
    let mut csv = CsvTable::new(
        &[
            "eps",
            "log10_eps",
            "r_l2",
            "log10_r_l2",
            "grad_r_l2",
            "log10_grad_r_l2",
            "measure",
            "log10_measure",
            "grad_phi_l2",
            "log10_grad_phi_l2",
            "dist_to_cone",
            "log10_dist_to_cone",
            "c0",
            "c2_abs",
            "final_ratio",
        ],
        &hash,
    )?;
    for r in &table.rows {
        csv.row(&[
            fmt(r.eps),
            fmt_log(r.eps),
            fmt(r.r_l2),
            fmt_log(r.r_l2),
            fmt(r.grad_r_l2),
            fmt_log(r.grad_r_l2),
            fmt(r.measure),
            fmt_log(r.measure),
            fmt(r.grad_phi_l2),
            fmt_log(r.grad_phi_l2),
            fmt(r.dist_to_cone),
            fmt_log(r.dist_to_cone),
            fmt(r.c0),
            fmt(r.c2_abs),
            fmt(r.final_ratio),
        ])?;
    }
    let slopes = [
        SlopeRow { quantity: "r_l2", slope: table.slope_r_l2, expected: 1.5 },
        SlopeRow { quantity: "grad_r_l2", slope: table.slope_grad_r_l2, expected: 1.0 },
        SlopeRow { quantity: "measure", slope: table.slope_measure, expected: 1.0 },
        SlopeRow { quantity: "grad_phi_l2", slope: table.slope_grad_phi_l2, expected: 1.0 },
        SlopeRow { quantity: "dist_to_cone", slope: table.slope_dist, expected: 1.0 },
    ];
    let mut scsv = CsvTable::new(&["quantity", "slope", "expected"], &hash)?;
    for s in &slopes {
        scsv.row(&[s.quantity.into(), fmt(s.slope), fmt(s.expected)])?;
    }
    out.add_csv("sharpness.csv", csv)?;
    out.add_csv("sharpness_slopes.csv", scsv)?;
    out.add_json("sharpness.json", &serde_json::json!({ "command": "sharpness", "config_hash": hash, "table": table }))?;
    Ok(Status::Ok)
}
