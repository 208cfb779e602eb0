//! The five run modes. Each takes the parsed config, appends phases, checks,
//! metrics, and artifacts to the report, and returns only hard failures;
//! soft failures live in the report's checks and map to the exit code later.

use std::fs;
use std::path::Path;

use nldiff_core::grid::laplacian;
use nldiff_core::identities::{self as ids};
use nldiff_core::io::{fmt_float, write_field_csv, write_field_vtk};
use nldiff_core::poisson::{greens_direct, greens_fft, invert_for_f};
use nldiff_core::reference::{analytic_eval, compare, solve};
use nldiff_core::taylor::{build_series, MAX_ORDER};
use nldiff_core::{
    Boundary, EquationId, Error as CoreError, Grid3, ResidualReport, ScalarField3, Scheme,
    SolverConfig, Trajectory,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::config::{ConfigError, RunConfig};
use crate::report::RunReport;
use crate::scenario;

/// Relative mass-conservation budget on periodic grids.
const MASS_TOL: f64 = 1e-12;
/// Negative undershoot budget for the flux-form scheme on nonnegative data.
const POSITIVITY_TOL: f64 = 1e-12;
/// FFT-vs-direct agreement for the open-space kernel.
const KERNEL_TOL: f64 = 1e-10;
/// Largest cell count the O(N^2) direct kernel sum is allowed.
const DIRECT_KERNEL_CELL_CAP: usize = 32 * 32 * 32;

pub enum RunError {
    Config(ConfigError),
    Divergence(String),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

/// Core failures split by exit code: blown-up runs are their own class,
/// everything else is reported as a configuration/input problem.
fn core(e: CoreError) -> RunError {
    match e {
        CoreError::Divergence { .. } | CoreError::Instability { .. } => {
            RunError::Divergence(e.to_string())
        }
        other => RunError::Config(ConfigError {
            message: other.to_string(),
        }),
    }
}

#[derive(Clone, Copy)]
struct Formats {
    csv: bool,
    vtk: bool,
}

fn formats(cfg: &RunConfig) -> Result<Formats, ConfigError> {
    let list = cfg
        .get_str_list("output.formats")
        .unwrap_or_else(|| vec!["csv".to_string()]);
    let mut out = Formats {
        csv: false,
        vtk: false,
    };
    for f in &list {
        match f.as_str() {
            "csv" => out.csv = true,
            "vtk" => out.vtk = true,
            other => {
                return Err(cfg.value_error(
                    "output.formats",
                    &format!("expected csv and/or vtk, got `{other}`"),
                ))
            }
        }
    }
    Ok(out)
}

fn emit_field(
    report: &mut RunReport,
    fmts: Formats,
    out: &Path,
    name: &str,
    field: &ScalarField3,
) -> Result<(), RunError> {
    if fmts.csv {
        let path = out.join(format!("{name}.csv"));
        write_field_csv(field, &path).map_err(core)?;
        report.artifact(&path);
    }
    if fmts.vtk {
        let path = out.join(format!("{name}.vtk"));
        write_field_vtk(field, &path, name).map_err(core)?;
        report.artifact(&path);
    }
    Ok(())
}

fn solver_config(cfg: &RunConfig) -> Result<(SolverConfig, Scheme), ConfigError> {
    let t_end = cfg.need_f64("solver.t_end")?;
    let snapshots = cfg.get_usize("solver.snapshots")?.unwrap_or(3);
    let scheme = match cfg.get_str("solver.scheme").unwrap_or("flux_form") {
        "flux_form" => Scheme::ExplicitFluxForm,
        "kirchhoff" => Scheme::KirchhoffExplicit,
        other => {
            return Err(cfg.value_error(
                "solver.scheme",
                &format!("expected `flux_form` or `kirchhoff`, got `{other}`"),
            ))
        }
    };
    let mut sc = SolverConfig::uniform(t_end, snapshots, scheme)
        .map_err(|e| cfg.value_error("solver.t_end", &e.to_string()))?;
    if let Some(cfl) = cfg.get_f64("solver.cfl_safety")? {
        sc = sc
            .with_cfl_safety(cfl)
            .map_err(|e| cfg.value_error("solver.cfl_safety", &e.to_string()))?;
    }
    Ok((sc, scheme))
}

fn seed_of(cfg: &RunConfig) -> Result<u64, ConfigError> {
    Ok(cfg.get_u64("seed")?.unwrap_or(42))
}

// ---------------------------------------------------------------------------
// series

pub fn run_series(cfg: &RunConfig, report: &mut RunReport, out: &Path) -> Result<(), RunError> {
    let fmts = formats(cfg)?;
    let (grid, model, c0) = report.phase("setup", |_| -> Result<_, RunError> {
        let grid = scenario::build_grid(cfg)?;
        let model = scenario::build_model(cfg)?;
        let c0 = scenario::build_initial(cfg, &grid, &model)?;
        Ok((grid, model, c0))
    })?;
    let _ = grid;

    let order = cfg.get_usize("series.order")?.unwrap_or(12);
    if order == 0 || order > MAX_ORDER {
        return Err(cfg
            .value_error("series.order", &format!("must be in 1..={MAX_ORDER}"))
            .into());
    }
    let state = report.phase("series", |_| build_series(&c0, &model, order).map_err(core))?;

    let norms = state.coefficient_norms();
    let tail_max = norms[1..].iter().cloned().fold(0.0_f64, f64::max);
    report.metric("max_coefficient_norm_above_order_zero", tail_max);
    report.metric("clamped_cells", state.clamped_cells() as f64);
    if order >= 4 {
        let radius = state.convergence_radius().map_err(core)?;
        report.metric("convergence_radius", radius);
    }

    let norms_path = out.join("coefficient_norms.csv");
    let mut text = String::from("n,linf_norm\n");
    for (n, v) in norms.iter().enumerate() {
        text.push_str(&format!("{n},{}\n", fmt_float(*v)));
    }
    fs::write(&norms_path, text).map_err(|e| io_err(&norms_path, e))?;
    report.artifact(&norms_path);

    let eval_times = cfg.get_f64_list("series.eval_times")?.unwrap_or_else(|| vec![0.0]);
    report.phase("evaluate", |report| -> Result<(), RunError> {
        for (k, &t) in eval_times.iter().enumerate() {
            let c_t = state.evaluate(t);
            let f_series = state.evaluate_f(t);
            let (f_of_c, _) = model.kirchhoff_f_field(&c_t);
            // The two routes to F at time t — summing the F-series vs mapping
            // the summed c-series — must agree to within the truncation bound.
            let rem = state.remainder_estimate(t);
            let gap = f_series.sub(&f_of_c).map_err(core)?.linf();
            let scale = f_of_c.linf().max(1.0);
            report.check_le(
                &format!("series.f_consistency[{k}]"),
                gap,
                10.0 * rem.linf + 1e-12 * scale,
            );
            emit_field(report, fmts, out, &format!("eval_{k:02}"), &c_t)?;
        }
        Ok(())
    })?;

    if cfg.get_bool("series.emit_coefficients")?.unwrap_or(false) {
        report.phase("coefficients", |report| -> Result<(), RunError> {
            for n in 0..=order {
                emit_field(report, fmts, out, &format!("coefficient_{n:02}"), state.coefficient(n))?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// reference

pub fn run_reference(cfg: &RunConfig, report: &mut RunReport, out: &Path) -> Result<(), RunError> {
    let fmts = formats(cfg)?;
    let (grid, model, c0) = report.phase("setup", |_| -> Result<_, RunError> {
        let grid = scenario::build_grid(cfg)?;
        let model = scenario::build_model(cfg)?;
        let c0 = scenario::build_initial(cfg, &grid, &model)?;
        Ok((grid, model, c0))
    })?;
    let (sc, scheme) = solver_config(cfg)?;

    let traj = report.phase("integrate", |_| solve(&c0, &model, &sc).map_err(core))?;

    report.phase("emit", |report| -> Result<(), RunError> {
        for k in 0..traj.len() {
            report.metric(&format!("snapshot_time_{k:02}"), traj.times()[k]);
            emit_field(report, fmts, out, &format!("snapshot_{k:02}"), traj.field(k))?;
        }
        Ok(())
    })?;

    let last = traj.field(traj.len() - 1);
    if grid.boundary == Boundary::Periodic {
        let m0 = c0.mass();
        let drift = (last.mass() - m0).abs() / m0.abs().max(f64::MIN_POSITIVE);
        report.check_le("reference.mass_drift", drift, MASS_TOL);
    } else {
        report.metric("final_mass", last.mass());
    }
    let min0 = c0.values().iter().cloned().fold(f64::INFINITY, f64::min);
    if scheme == Scheme::ExplicitFluxForm && min0 >= 0.0 {
        let min_last = last.values().iter().cloned().fold(f64::INFINITY, f64::min);
        let undershoot = (-min_last).max(0.0) / last.linf().max(f64::MIN_POSITIVE);
        report.check_le("reference.positivity", undershoot, POSITIVITY_TOL);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// identities

fn parse_equations(cfg: &RunConfig) -> Result<(Vec<EquationId>, bool), ConfigError> {
    let Some(list) = cfg.get_str_list("identities.equations") else {
        return Ok((EquationId::all().to_vec(), false));
    };
    if list.len() == 1 && list[0] == "all" {
        return Ok((EquationId::all().to_vec(), false));
    }
    let mut eqs = Vec::new();
    for name in &list {
        let upper = name.to_uppercase();
        let eq = EquationId::all()
            .into_iter()
            .find(|e| e.as_str() == upper)
            .ok_or_else(|| {
                cfg.value_error("identities.equations", &format!("unknown equation `{name}`"))
            })?;
        if !eqs.contains(&eq) {
            eqs.push(eq);
        }
    }
    Ok((eqs, true))
}

fn residual_for(
    eq: EquationId,
    traj: &Trajectory,
    n6690: usize,
) -> nldiff_core::Result<ResidualReport> {
    let mid = traj.len() / 2;
    let last = traj.len() - 1;
    match eq {
        EquationId::E2200 => ids::residual_e2200(traj, last),
        EquationId::E3090 => ids::residual_e3090(traj, mid),
        EquationId::E4710 => ids::residual_e4710_e4720(traj, mid).map(|(r, _)| r),
        EquationId::E4720 => ids::residual_e4710_e4720(traj, mid).map(|(_, r)| r),
        EquationId::E5020 => ids::residual_e5020(traj, mid),
        EquationId::E5100 => ids::residual_e5100(traj, mid),
        EquationId::E5120 => ids::residual_e5120(traj, mid),
        EquationId::E5160 => ids::residual_e5160(traj, mid),
        EquationId::E5200 => ids::residual_e5200(traj),
        EquationId::E5680 => ids::residual_e5680(traj, mid),
        EquationId::E6690 => ids::residual_e6690(traj, mid, n6690),
    }
}

/// Inapplicability is a property of the model/grid, not of the data; these
/// are dropped silently for the default equation set and rejected when the
/// equation was requested by name.
fn inapplicable(e: &CoreError) -> bool {
    matches!(
        e,
        CoreError::NonlinearityRequired { .. }
            | CoreError::UnsupportedOrder { .. }
            | CoreError::UnsupportedBoundary { .. }
    )
}

pub fn run_identities(cfg: &RunConfig, report: &mut RunReport, out: &Path) -> Result<(), RunError> {
    let model = scenario::build_model(cfg)?;
    let base_grid = scenario::build_grid(cfg)?;
    let (sc0, _) = solver_config(cfg)?;
    let levels = cfg.get_usize("identities.levels")?.unwrap_or(2);
    if levels == 0 {
        return Err(cfg.value_error("identities.levels", "must be >= 1").into());
    }
    let min_order = cfg.get_f64("identities.min_order")?.unwrap_or(1.8);
    let n6690 = cfg.get_usize("identities.e6690_order")?.unwrap_or(1);
    let snaps0 = cfg.get_usize("solver.snapshots")?.unwrap_or(5);
    if snaps0 < 3 {
        return Err(cfg
            .value_error("solver.snapshots", "identity residuals need >= 3 snapshots")
            .into());
    }
    let (mut eqs, explicit) = parse_equations(cfg)?;

    // rows[eq] = normalized interior L2 per level, for the order estimate.
    let mut history: Vec<(EquationId, Vec<ResidualReport>)> =
        eqs.iter().map(|&e| (e, Vec::new())).collect();

    for level in 0..levels {
        let scale = 1usize << level;
        let grid = Grid3::centered(
            base_grid.nx * scale,
            base_grid.ny * scale,
            base_grid.nz * scale,
            base_grid.h / scale as f64,
            base_grid.boundary,
        )
        .map_err(core)?;
        // Halving h quarters the time step; scaling the snapshot count keeps
        // the sampled times identical across levels.
        let snaps = (snaps0 - 1) * scale + 1;
        let sc = SolverConfig::uniform(sc0.t_end, snaps, sc0.scheme)
            .and_then(|s| s.with_cfl_safety(sc0.cfl_safety))
            .map_err(core)?;
        let c0 = scenario::build_initial(cfg, &grid, &model)?;
        let traj = report.phase(&format!("integrate[{level}]"), |_| {
            solve(&c0, &model, &sc).map_err(core)
        })?;

        let mut dropped = Vec::new();
        for (eq, rows) in history.iter_mut() {
            match residual_for(*eq, &traj, n6690) {
                Ok(r) => rows.push(r),
                Err(e) if level == 0 && inapplicable(&e) => {
                    if explicit {
                        return Err(cfg
                            .value_error(
                                "identities.equations",
                                &format!("{} not applicable here: {e}", eq.as_str()),
                            )
                            .into());
                    }
                    report.metric_text(&format!("skipped[{}]", eq.as_str()), &e.to_string());
                    dropped.push(*eq);
                }
                Err(e) => return Err(core(e)),
            }
        }
        history.retain(|(eq, _)| !dropped.contains(eq));
        eqs.retain(|eq| !dropped.contains(eq));
    }

    let csv_path = out.join("identities.csv");
    let mut text = String::from("equation,t,h,dt,norm_l2,norm_linf,normalization,order_estimate\n");
    for (eq, rows) in &history {
        for (level, r) in rows.iter().enumerate() {
            let order = if level == 0 {
                String::new()
            } else {
                let prev = rows[level - 1].normalized_l2();
                fmt_float(refinement_order(prev, r.normalized_l2()))
            };
            text.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                eq.as_str(),
                fmt_float(r.t),
                fmt_float(r.h),
                fmt_float(r.dt),
                fmt_float(r.norm_l2),
                fmt_float(r.norm_linf),
                fmt_float(r.normalization),
                order
            ));
        }
    }
    fs::write(&csv_path, text).map_err(|e| io_err(&csv_path, e))?;
    report.artifact(&csv_path);

    if levels >= 2 {
        for (eq, rows) in &history {
            let n = rows.len();
            let order = refinement_order(rows[n - 2].normalized_l2(), rows[n - 1].normalized_l2());
            report.check_ge(&format!("identities.order[{}]", eq.as_str()), order, min_order);
        }
    } else {
        for (eq, rows) in &history {
            report.metric(&format!("normalized_l2[{}]", eq.as_str()), rows[0].normalized_l2());
        }
    }
    Ok(())
}

/// log2 ratio of successive residuals; exact zeros count as converged.
fn refinement_order(coarse: f64, fine: f64) -> f64 {
    if fine == 0.0 {
        f64::INFINITY
    } else if coarse == 0.0 {
        f64::NEG_INFINITY
    } else {
        (coarse / fine).log2()
    }
}

// ---------------------------------------------------------------------------
// poisson-test

pub fn run_poisson(cfg: &RunConfig, report: &mut RunReport, out: &Path) -> Result<(), RunError> {
    let fmts = formats(cfg)?;
    let grid = scenario::build_grid(cfg)?;
    if grid.boundary != Boundary::FreeDecay {
        return Err(cfg
            .value_error("grid.boundary", "the open-space kernel needs free_decay")
            .into());
    }
    if grid.len() > DIRECT_KERNEL_CELL_CAP {
        return Err(cfg
            .value_error(
                "grid.nx",
                &format!("direct kernel sum is O(N^2); cap is {DIRECT_KERNEL_CELL_CAP} cells"),
            )
            .into());
    }

    let lx = grid.nx as f64 * grid.h;
    let sigma = match cfg.get_f64("poisson.sigma")? {
        Some(s) if s > 0.0 => s,
        Some(_) => return Err(cfg.value_error("poisson.sigma", "must be positive").into()),
        None => 0.18 * lx,
    };
    let mut rng = StdRng::seed_from_u64(seed_of(cfg)?);
    let noise: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let envelope = ScalarField3::from_fn(grid, |x, y, z| {
        (-(x * x + y * y + z * z) / (sigma * sigma)).exp()
    });
    let source = ScalarField3::from_values(grid, noise)
        .and_then(|n| n.zip_with(&envelope, |a, b| a * b))
        .map_err(core)?;

    let sol_fft = report.phase("fft", |_| greens_fft(&source).map_err(core))?;
    let sol_direct = report.phase("direct", |_| greens_direct(&source).map_err(core))?;
    let gap = sol_fft.v.sub(&sol_direct.v).map_err(core)?.linf();
    let rel = gap / sol_direct.v.linf().max(f64::MIN_POSITIVE);
    report.check_le("poisson.fft_vs_direct", rel, KERNEL_TOL);
    report.metric("kernel_residual_fft", sol_fft.residual_linf);
    report.metric("kernel_residual_direct", sol_direct.residual_linf);

    // Manufactured round trip: lay down a decaying potential, take its
    // Laplacian as the rate field, and invert back. The gap between the
    // discrete Laplacian and the continuum kernel is second order, so the
    // budget is (h/sigma)^2 — the profile's sharpness in cells.
    let sigma_truth = 0.2 * lx;
    let recon = report.phase("reconstruction", |_| -> Result<f64, RunError> {
        let s2 = sigma_truth * sigma_truth;
        let truth = ScalarField3::from_fn(grid, |x, y, z| (-(x * x + y * y + z * z) / s2).exp());
        let rate = laplacian(&truth);
        let recovered = invert_for_f(&rate).map_err(core)?;
        let err = recovered.sub(&truth).map_err(core)?;
        Ok(err.interior_rms() / truth.interior_rms().max(f64::MIN_POSITIVE))
    })?;
    report.check_le("poisson.reconstruction", recon, (grid.h / sigma_truth).powi(2));

    emit_field(report, fmts, out, "source", &source)?;
    emit_field(report, fmts, out, "potential", &sol_fft.v)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// compare

pub fn run_compare(cfg: &RunConfig, report: &mut RunReport, out: &Path) -> Result<(), RunError> {
    let fmts = formats(cfg)?;
    let (grid, model, c0) = report.phase("setup", |_| -> Result<_, RunError> {
        let grid = scenario::build_grid(cfg)?;
        let model = scenario::build_model(cfg)?;
        let c0 = scenario::build_initial(cfg, &grid, &model)?;
        Ok((grid, model, c0))
    })?;
    let sol = scenario::build_analytic(cfg, &model)?;
    let (sc, _) = solver_config(cfg)?;
    let l1_tol = cfg.get_f64("compare.l1_tol")?.unwrap_or(0.05);
    let mass_tol = cfg.get_f64("compare.mass_tol")?.unwrap_or(MASS_TOL);

    let traj = report.phase("integrate", |_| solve(&c0, &model, &sc).map_err(core))?;
    let rows = report.phase("compare", |_| compare(&traj, (&sol).into()).map_err(core))?;

    let csv_path = out.join("compare_errors.csv");
    let mut text = String::from("t,l1,l2,linf,mass_drift\n");
    for r in &rows {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_float(r.t),
            fmt_float(r.l1),
            fmt_float(r.l2),
            fmt_float(r.linf),
            fmt_float(r.mass_drift)
        ));
    }
    fs::write(&csv_path, text).map_err(|e| io_err(&csv_path, e))?;
    report.artifact(&csv_path);

    let mass = sol.mass();
    let worst_l1 = rows.iter().map(|r| r.l1 / mass).fold(0.0_f64, f64::max);
    report.check_le("compare.rel_l1_max", worst_l1, l1_tol);
    if grid.boundary == Boundary::Periodic {
        // Conservation of the solver's own discrete mass; the rows' drift
        // column also carries the target profile's quadrature error.
        let m0 = traj.field(0).mass();
        let drift = (0..traj.len())
            .map(|k| ((traj.field(k).mass() - m0) / m0.abs().max(f64::MIN_POSITIVE)).abs())
            .fold(0.0_f64, f64::max);
        report.check_le("compare.mass_drift_max", drift, mass_tol);
    }

    let last = traj.len() - 1;
    emit_field(report, fmts, out, "final_numeric", traj.field(last))?;
    let exact = analytic_eval(&sol, &grid, traj.times()[last]).map_err(core)?;
    emit_field(report, fmts, out, "final_analytic", &exact)?;
    Ok(())
}

fn io_err(path: &Path, e: std::io::Error) -> RunError {
    RunError::Config(ConfigError {
        message: format!("cannot write {}: {e}", path.display()),
    })
}
