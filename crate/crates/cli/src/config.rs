//! Line-oriented run configuration: `key.path = value` pairs, with optional
//! `[section]` headers that prefix the keys below them. Strict mode rejects
//! any key outside the schema, naming the key and its line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// Every key the tool understands. Presence here only means "recognized";
/// each subcommand reads the subset it needs and validates values on read.
const SCHEMA: &[&str] = &[
    "seed",
    "grid.nx",
    "grid.ny",
    "grid.nz",
    "grid.h",
    "grid.boundary",
    "diffusivity.kind",
    "diffusivity.d0",
    "diffusivity.m",
    "diffusivity.beta",
    "diffusivity.c_ref",
    "diffusivity.c_min",
    "diffusivity.table_file",
    "initial.kind",
    "initial.base",
    "initial.amp",
    "initial.sigma",
    "initial.radius",
    "initial.mode_x",
    "initial.mode_y",
    "initial.mode_z",
    "initial.mass",
    "initial.t0",
    "initial.file",
    "series.order",
    "series.eval_times",
    "series.emit_coefficients",
    "solver.scheme",
    "solver.cfl_safety",
    "solver.t_end",
    "solver.snapshots",
    "identities.equations",
    "identities.levels",
    "identities.min_order",
    "identities.e6690_order",
    "compare.l1_tol",
    "compare.mass_tol",
    "poisson.sigma",
    "output.directory",
    "output.formats",
    "output.report",
];

#[derive(Debug)]
pub struct ConfigError {
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(message: String) -> ConfigError {
    ConfigError { message }
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// Parsed key-value store; each entry remembers its line for diagnostics.
#[derive(Debug, Default)]
pub struct RunConfig {
    entries: BTreeMap<String, Entry>,
}

impl RunConfig {
    pub fn parse(text: &str, strict: bool) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        let mut warnings = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = strip_comment(raw).trim().to_string();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| err(format!("line {line_no}: unterminated section header")))?
                    .trim();
                if name.is_empty() {
                    return Err(err(format!("line {line_no}: empty section name")));
                }
                section = name.to_string();
                continue;
            }
            let (key_part, value_part) = line
                .split_once('=')
                .ok_or_else(|| err(format!("line {line_no}: expected `key = value`")))?;
            let bare = key_part.trim();
            if bare.is_empty() {
                return Err(err(format!("line {line_no}: empty key")));
            }
            let key = if section.is_empty() {
                bare.to_string()
            } else {
                format!("{section}.{bare}")
            };
            let value = unquote(value_part.trim()).to_string();
            if !SCHEMA.contains(&key.as_str()) {
                if strict {
                    return Err(err(format!("line {line_no}: unknown key `{key}`")));
                }
                let _ = writeln!(warnings, "warning: line {line_no}: ignoring unknown key `{key}`");
                continue;
            }
            if let Some(prev) = entries.insert(key.clone(), Entry { value, line: line_no }) {
                let Entry { line: prev_line, .. } = prev;
                return Err(err(format!(
                    "line {line_no}: duplicate key `{key}` (first set at line {prev_line})"
                )));
            }
        }
        if !warnings.is_empty() {
            eprint!("{warnings}");
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path, strict: bool) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| err(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, strict)
    }

    /// Raw key/value pairs, for the report's config echo.
    pub fn echo(&self) -> BTreeMap<String, String> {
        self.entries
            .iter()
            .map(|(k, e)| (k.clone(), e.value.clone()))
            .collect()
    }

    fn raw(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    fn parse_with<T>(&self, key: &str, what: &str, f: impl Fn(&str) -> Option<T>) -> Result<Option<T>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => f(&e.value).map(Some).ok_or_else(|| {
                err(format!(
                    "line {}: key `{key}`: expected {what}, got `{}`",
                    e.line, e.value
                ))
            }),
        }
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.parse_with(key, "a number", |v| v.parse::<f64>().ok().filter(|x| x.is_finite()))
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        self.parse_with(key, "a non-negative integer", |v| v.parse::<usize>().ok())
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        self.parse_with(key, "a non-negative integer", |v| v.parse::<u64>().ok())
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>, ConfigError> {
        self.parse_with(key, "true or false", |v| match v {
            "true" | "on" | "yes" => Some(true),
            "false" | "off" | "no" => Some(false),
            _ => None,
        })
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.raw(key).map(|e| e.value.as_str())
    }

    pub fn get_f64_list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.parse_with(key, "a comma-separated list of numbers", |v| {
            v.split(',')
                .map(|p| p.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
                .collect::<Option<Vec<f64>>>()
        })
    }

    pub fn get_str_list(&self, key: &str) -> Option<Vec<String>> {
        self.raw(key).map(|e| {
            e.value
                .split(',')
                .map(|p| p.trim().to_string())
                .filter(|p| !p.is_empty())
                .collect()
        })
    }

    /// Required-key variants, reporting the missing key by name.
    pub fn need_f64(&self, key: &str) -> Result<f64, ConfigError> {
        self.get_f64(key)?.ok_or_else(|| err(format!("missing required key `{key}`")))
    }

    pub fn need_usize(&self, key: &str) -> Result<usize, ConfigError> {
        self.get_usize(key)?.ok_or_else(|| err(format!("missing required key `{key}`")))
    }

    pub fn need_str(&self, key: &str) -> Result<&str, ConfigError> {
        self.get_str(key).ok_or_else(|| err(format!("missing required key `{key}`")))
    }

    /// Line number of a key, for diagnostics about bad value combinations.
    pub fn line_of(&self, key: &str) -> Option<usize> {
        self.raw(key).map(|e| e.line)
    }

    pub fn value_error(&self, key: &str, message: &str) -> ConfigError {
        match self.line_of(key) {
            Some(line) => err(format!("line {line}: key `{key}`: {message}")),
            None => err(format!("key `{key}`: {message}")),
        }
    }
}

fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    for (i, ch) in line.char_indices() {
        match ch {
            '"' => in_quotes = !in_quotes,
            '#' | ';' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

fn unquote(v: &str) -> &str {
    if v.len() >= 2 && v.starts_with('"') && v.ends_with('"') {
        &v[1..v.len() - 1]
    } else {
        v
    }
}
