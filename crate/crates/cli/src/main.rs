//! `nldiff`: run nonlinear-diffusion computations from a config file and emit
//! checked, reproducible artifacts plus a JSON run report.
//!
//! Exit codes: 0 all checks passed, 1 a check failed, 2 configuration or
//! input error, 3 the computation diverged.

mod config;
mod report;
mod runs;
mod scenario;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use report::RunReport;
use runs::RunError;

#[derive(Parser)]
#[command(name = "nldiff", version, about = "Nonlinear diffusion: series, reference runs, and consistency checks")]
struct Cli {
    /// Run configuration file (key = value lines, [section] headers allowed).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `output.directory` (default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads; 0 picks the machine default.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Reject unknown config keys (`--strict=false` downgrades them to warnings).
    #[arg(long, global = true, default_value_t = true)]
    strict: bool,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Build the power series in time and evaluate it.
    Series,
    /// Integrate with the explicit reference scheme and emit snapshots.
    Reference,
    /// Residuals of the built-in consistency identities under grid refinement.
    Identities,
    /// Cross-validate the open-space inversion routes on seeded data.
    PoissonTest,
    /// Error norms of the reference solution against a closed form.
    Compare,
}

impl Cmd {
    fn name(self) -> &'static str {
        match self {
            Cmd::Series => "series",
            Cmd::Reference => "reference",
            Cmd::Identities => "identities",
            Cmd::PoissonTest => "poisson-test",
            Cmd::Compare => "compare",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    ExitCode::from(run(&cli))
}

fn run(cli: &Cli) -> u8 {
    if cli.threads > 0 {
        // A second build_global in one process is harmless for our use.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }

    let Some(config_path) = cli.config.as_ref() else {
        eprintln!("config error: --config <file> is required");
        return 2;
    };
    let cfg = match RunConfig::load(config_path, cli.strict) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return 2;
        }
    };

    let out_dir = cli
        .out
        .clone()
        .or_else(|| cfg.get_str("output.directory").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        eprintln!("config error: cannot create {}: {e}", out_dir.display());
        return 2;
    }

    let mut flags = BTreeMap::new();
    flags.insert("config".to_string(), config_path.display().to_string());
    flags.insert("out".to_string(), out_dir.display().to_string());
    flags.insert("threads".to_string(), cli.threads.to_string());
    flags.insert("strict".to_string(), cli.strict.to_string());
    let mut report = RunReport::new(cli.cmd.name(), cfg.echo(), flags);

    let report_enabled = match cfg.get_bool("output.report") {
        Ok(v) => v.unwrap_or(true),
        Err(e) => {
            eprintln!("config error: {e}");
            return 2;
        }
    };

    let result = match cli.cmd {
        Cmd::Series => runs::run_series(&cfg, &mut report, &out_dir),
        Cmd::Reference => runs::run_reference(&cfg, &mut report, &out_dir),
        Cmd::Identities => runs::run_identities(&cfg, &mut report, &out_dir),
        Cmd::PoissonTest => runs::run_poisson(&cfg, &mut report, &out_dir),
        Cmd::Compare => runs::run_compare(&cfg, &mut report, &out_dir),
    };

    let report_path = out_dir.join("report.json");
    match result {
        Ok(()) => {
            if report_enabled {
                if let Err(e) = report.finish(&report_path) {
                    eprintln!("config error: cannot write {}: {e}", report_path.display());
                    return 2;
                }
            }
            if report.all_passed() {
                0
            } else {
                eprintln!("one or more checks failed; see {}", report_path.display());
                1
            }
        }
        Err(RunError::Config(e)) => {
            eprintln!("config error: {e}");
            2
        }
        Err(RunError::Divergence(msg)) => {
            // Keep whatever phases and checks completed for post-mortems.
            if report_enabled {
                let _ = report.finish(&report_path);
            }
            eprintln!("divergence: {msg}");
            3
        }
    }
}
