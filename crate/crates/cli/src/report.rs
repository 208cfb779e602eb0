//! Machine-readable run report. Every float is serialized through
//! [`nldiff_core::io::fmt_float`] so the JSON carries the same 17-significant-
//! digit text as the CSV outputs.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use nldiff_core::io::fmt_float;
use serde::Serialize;

#[derive(Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub measured: String,
    pub threshold: String,
    /// How `measured` relates to `threshold` when the check passes.
    pub comparison: &'static str,
}

#[derive(Serialize)]
struct Phase {
    name: String,
    seconds: String,
}

#[derive(Serialize)]
struct Tool {
    name: &'static str,
    version: &'static str,
}

#[derive(Serialize)]
pub struct RunReport {
    tool: Tool,
    subcommand: String,
    config: BTreeMap<String, String>,
    flags: BTreeMap<String, String>,
    phases: Vec<Phase>,
    checks: Vec<Check>,
    metrics: BTreeMap<String, String>,
    artifacts: Vec<String>,
}

impl RunReport {
    pub fn new(subcommand: &str, config: BTreeMap<String, String>, flags: BTreeMap<String, String>) -> Self {
        Self {
            tool: Tool {
                name: "nldiff",
                version: env!("CARGO_PKG_VERSION"),
            },
            subcommand: subcommand.to_string(),
            config,
            flags,
            phases: Vec::new(),
            checks: Vec::new(),
            metrics: BTreeMap::new(),
            artifacts: Vec::new(),
        }
    }

    /// Runs `f`, recording its wall-clock time under `name`.
    pub fn phase<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> T) -> T {
        let start = Instant::now();
        let out = f(self);
        self.phases.push(Phase {
            name: name.to_string(),
            seconds: fmt_float(start.elapsed().as_secs_f64()),
        });
        out
    }

    pub fn check_le(&mut self, name: &str, measured: f64, threshold: f64) -> bool {
        let pass = measured <= threshold;
        self.checks.push(Check {
            name: name.to_string(),
            pass,
            measured: fmt_float(measured),
            threshold: fmt_float(threshold),
            comparison: "<=",
        });
        pass
    }

    pub fn check_ge(&mut self, name: &str, measured: f64, threshold: f64) -> bool {
        let pass = measured >= threshold;
        self.checks.push(Check {
            name: name.to_string(),
            pass,
            measured: fmt_float(measured),
            threshold: fmt_float(threshold),
            comparison: ">=",
        });
        pass
    }

    pub fn metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), fmt_float(value));
    }

    pub fn metric_text(&mut self, name: &str, value: &str) {
        self.metrics.insert(name.to_string(), value.to_string());
    }

    pub fn artifact(&mut self, path: &Path) {
        self.artifacts.push(path.display().to_string());
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// Writes the report and prints one line per check for scanning runs by eye.
    pub fn finish(&self, path: &Path) -> std::io::Result<()> {
        for c in &self.checks {
            let verdict = if c.pass { "PASS" } else { "FAIL" };
            println!(
                "check {}: {} ({} {} {})",
                c.name, verdict, c.measured, c.comparison, c.threshold
            );
        }
        let json = serde_json::to_string_pretty(self).expect("report is plain data");
        std::fs::write(path, json + "\n")
    }
}
