//! Turns a parsed [`RunConfig`] into core objects: grid, diffusivity model,
//! and initial field. All value validation funnels through `ConfigError` so
//! bad inputs exit with the config diagnostic path.

use nldiff_core::io::read_diffusivity_table;
use nldiff_core::reference::analytic_eval;
use nldiff_core::{AnalyticSolution, Boundary, DiffusivityModel, Grid3, ScalarField3};

use crate::config::{ConfigError, RunConfig};

fn core_err(cfg: &RunConfig, key: &str, e: nldiff_core::Error) -> ConfigError {
    cfg.value_error(key, &e.to_string())
}

pub fn build_grid(cfg: &RunConfig) -> Result<Grid3, ConfigError> {
    let nx = cfg.need_usize("grid.nx")?;
    let ny = cfg.get_usize("grid.ny")?.unwrap_or(nx);
    let nz = cfg.get_usize("grid.nz")?.unwrap_or(nx);
    let h = cfg.need_f64("grid.h")?;
    let boundary = match cfg.get_str("grid.boundary").unwrap_or("free_decay") {
        "free_decay" => Boundary::FreeDecay,
        "periodic" => Boundary::Periodic,
        other => {
            return Err(cfg.value_error(
                "grid.boundary",
                &format!("expected `free_decay` or `periodic`, got `{other}`"),
            ))
        }
    };
    Grid3::centered(nx, ny, nz, h, boundary).map_err(|e| core_err(cfg, "grid.nx", e))
}

pub fn build_model(cfg: &RunConfig) -> Result<DiffusivityModel, ConfigError> {
    let kind = cfg.need_str("diffusivity.kind")?.to_string();
    let d0 = || cfg.need_f64("diffusivity.d0");
    let model = match kind.as_str() {
        "constant" => DiffusivityModel::constant(d0()?),
        "power_law" => DiffusivityModel::power_law(d0()?, cfg.need_f64("diffusivity.m")?),
        "exponential" => DiffusivityModel::exponential(d0()?, cfg.need_f64("diffusivity.beta")?),
        "tabulated" => {
            let path = cfg.need_str("diffusivity.table_file")?;
            let knots = read_diffusivity_table(path)
                .map_err(|e| core_err(cfg, "diffusivity.table_file", e))?;
            DiffusivityModel::tabulated(&knots)
        }
        other => {
            return Err(cfg.value_error(
                "diffusivity.kind",
                &format!("expected constant | power_law | exponential | tabulated, got `{other}`"),
            ))
        }
    }
    .map_err(|e| core_err(cfg, "diffusivity.kind", e))?;
    let model = match cfg.get_f64("diffusivity.c_ref")? {
        Some(c_ref) => model
            .with_c_ref(c_ref)
            .map_err(|e| core_err(cfg, "diffusivity.c_ref", e))?,
        None => model,
    };
    match cfg.get_f64("diffusivity.c_min")? {
        Some(c_min) => model
            .with_c_min(c_min)
            .map_err(|e| core_err(cfg, "diffusivity.c_min", e)),
        None => Ok(model),
    }
}

/// The closed-form solution matching `initial.kind` + the model, for `compare`.
pub fn build_analytic(
    cfg: &RunConfig,
    model: &DiffusivityModel,
) -> Result<AnalyticSolution, ConfigError> {
    match cfg.need_str("initial.kind")? {
        "barenblatt" => {
            let (d0, m) = model.power_law_params().ok_or_else(|| {
                cfg.value_error(
                    "initial.kind",
                    "barenblatt initial data needs diffusivity.kind = power_law",
                )
            })?;
            let mass = cfg.need_f64("initial.mass")?;
            let t0 = cfg.need_f64("initial.t0")?;
            AnalyticSolution::barenblatt_pattle(d0, m, mass, t0)
                .map_err(|e| core_err(cfg, "initial.mass", e))
        }
        "gaussian" => {
            let d0 = model.constant_value().ok_or_else(|| {
                cfg.value_error(
                    "initial.kind",
                    "a spreading Gaussian has a closed form only for diffusivity.kind = constant",
                )
            })?;
            if cfg.get_f64("initial.base")?.unwrap_or(0.0) != 0.0 {
                return Err(cfg.value_error(
                    "initial.base",
                    "the spreading-Gaussian closed form needs initial.base = 0",
                ));
            }
            let amp = cfg.need_f64("initial.amp")?;
            let sigma = cfg.need_f64("initial.sigma")?;
            // amp * exp(-r^2/sigma^2) has mass amp * pi^(3/2) sigma^3 and
            // matches the kernel shape at sigma0^2 = sigma^2 / 2.
            let mass = amp * std::f64::consts::PI.powf(1.5) * sigma.powi(3);
            AnalyticSolution::heat_gaussian(d0, mass, 0.5 * sigma * sigma)
                .map_err(|e| core_err(cfg, "initial.sigma", e))
        }
        other => Err(cfg.value_error(
            "initial.kind",
            &format!("no closed-form solution for initial.kind = `{other}`"),
        )),
    }
}

pub fn build_initial(
    cfg: &RunConfig,
    grid: &Grid3,
    model: &DiffusivityModel,
) -> Result<ScalarField3, ConfigError> {
    let base = cfg.get_f64("initial.base")?.unwrap_or(0.0);
    match cfg.need_str("initial.kind")? {
        "gaussian" => {
            let amp = cfg.need_f64("initial.amp")?;
            let sigma = cfg.need_f64("initial.sigma")?;
            if sigma <= 0.0 {
                return Err(cfg.value_error("initial.sigma", "must be positive"));
            }
            let inv = 1.0 / (sigma * sigma);
            Ok(ScalarField3::from_fn(*grid, |x, y, z| {
                base + amp * (-(x * x + y * y + z * z) * inv).exp()
            }))
        }
        "step" => {
            let amp = cfg.need_f64("initial.amp")?;
            let radius = cfg.need_f64("initial.radius")?;
            let r2 = radius * radius;
            Ok(ScalarField3::from_fn(*grid, |x, y, z| {
                if x * x + y * y + z * z <= r2 {
                    base + amp
                } else {
                    base
                }
            }))
        }
        "eigenmode" => {
            let amp = cfg.need_f64("initial.amp")?;
            let mx = cfg.get_usize("initial.mode_x")?.unwrap_or(1) as f64;
            let my = cfg.get_usize("initial.mode_y")?.unwrap_or(1) as f64;
            let mz = cfg.get_usize("initial.mode_z")?.unwrap_or(1) as f64;
            let tau = std::f64::consts::TAU;
            let (lx, ly, lz) = (
                grid.nx as f64 * grid.h,
                grid.ny as f64 * grid.h,
                grid.nz as f64 * grid.h,
            );
            Ok(ScalarField3::from_fn(*grid, |x, y, z| {
                base + amp
                    * (tau * mx * x / lx).cos()
                    * (tau * my * y / ly).cos()
                    * (tau * mz * z / lz).cos()
            }))
        }
        "barenblatt" => {
            let sol = build_analytic(cfg, model)?;
            // Solution time is offset by t0 internally: t = 0 is the profile
            // the run starts from.
            let profile =
                analytic_eval(&sol, grid, 0.0).map_err(|e| core_err(cfg, "initial.t0", e))?;
            if base == 0.0 {
                Ok(profile)
            } else {
                Ok(profile.map(|v| v + base))
            }
        }
        "from_file" => {
            let path = cfg.need_str("initial.file")?;
            let field = nldiff_core::io::read_field_csv(path, grid.boundary)
                .map_err(|e| core_err(cfg, "initial.file", e))?;
            if field.grid() != grid {
                return Err(cfg.value_error(
                    "initial.file",
                    &format!(
                        "field in file is {}x{}x{} with h = {}, config grid disagrees",
                        field.grid().nx,
                        field.grid().ny,
                        field.grid().nz,
                        field.grid().h
                    ),
                ));
            }
            Ok(field)
        }
        other => Err(cfg.value_error(
            "initial.kind",
            &format!(
                "expected gaussian | step | eigenmode | barenblatt | from_file, got `{other}`"
            ),
        )),
    }
}
