//! Run configuration: command-line flags layered over a flat `key=value` file.
//!
//! Every key is also a long flag of the same name, so `n=8` in a file and
//! `--n 8` on the command line mean the same thing. Flags win over the file.

use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Arg, ArgAction, Command};
use gradrobust::Form;

use crate::error::CliError;

/// Cells per axis of the large runs enabled by `full`.
pub const FULL_LEVEL: usize = 256;
pub const DEFAULT_LEVEL: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Forward solves with the manufactured boundary data.
    State,
    /// Velocity change under an added gradient force.
    Invariance,
    /// Optimal control solves.
    Ocp,
    /// The full sweep with table output.
    Tables,
}

impl Mode {
    pub fn tag(self) -> &'static str {
        match self {
            Mode::State => "state",
            Mode::Invariance => "invariance",
            Mode::Ocp => "ocp",
            Mode::Tables => "tables",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "state" => Ok(Mode::State),
            "invariance" => Ok(Mode::Invariance),
            "ocp" => Ok(Mode::Ocp),
            "tables" => Ok(Mode::Tables),
            _ => Err("expected one of state, invariance, ocp, tables".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub forms: Vec<Form>,
    pub robust: Vec<bool>,
    pub nus: Vec<f64>,
    /// Cells per axis; `None` means the default level.
    pub levels: Option<Vec<usize>>,
    /// Runs at `FULL_LEVEL`; incompatible with explicit levels.
    pub full: bool,
    pub gradient_tol: f64,
    pub max_iter: usize,
    pub newton_atol: f64,
    pub newton_rtol: f64,
    pub newton_max_iter: usize,
    pub literal_pairings: bool,
    pub deterministic: bool,
    pub csv: Option<PathBuf>,
    pub markdown: Option<PathBuf>,
    pub vtk: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Tables,
            forms: Form::ALL.to_vec(),
            robust: vec![true, false],
            nus: vec![1.0, 0.1, 0.01],
            levels: None,
            full: false,
            gradient_tol: 1e-8,
            max_iter: 200,
            newton_atol: 1e-12,
            newton_rtol: 1e-12,
            newton_max_iter: 30,
            literal_pairings: false,
            deterministic: false,
            csv: None,
            markdown: None,
            vtk: None,
        }
    }
}

struct Key {
    name: &'static str,
    help: &'static str,
    switch: bool,
}

const fn key(name: &'static str, help: &'static str) -> Key {
    Key { name, help, switch: false }
}

const fn switch(name: &'static str, help: &'static str) -> Key {
    Key { name, help, switch: true }
}

/// Accepted keys. `form` and `forms` are synonyms.
const KEYS: &[Key] = &[
    key("mode", "state | invariance | ocp | tables [default: tables]"),
    key("form", "nonlinear form: conv | div | rot (comma-separated list allowed)"),
    key("forms", "comma-separated forms [default: conv,div,rot]"),
    key("robust", "true | false | both, or a comma-separated list [default: both]"),
    key("nu", "comma-separated viscosities [default: 1,0.1,0.01]"),
    key("n", "comma-separated cells per axis [default: 16]"),
    switch("full", "run at 256 cells per axis [default: false]"),
    key("gradient-tol", "optimizer stopping tolerance on the reduced gradient [default: 1e-8]"),
    key("max-iter", "optimizer iteration limit [default: 200]"),
    key("newton-atol", "absolute Newton residual tolerance [default: 1e-12]"),
    key("newton-rtol", "relative Newton residual tolerance [default: 1e-12]"),
    key("newton-max-iter", "Newton iteration limit [default: 30]"),
    switch("literal-pairings", "reconstruct only the tracking and load pairings [default: false]"),
    switch("deterministic", "single-threaded linear algebra [default: false]"),
    key("csv", "CSV output path (tables mode)"),
    key("markdown", "Markdown output path (tables mode)"),
    key("vtk", "legacy VTK output path (single state or ocp run)"),
];

fn command() -> Command {
    let mut cmd = Command::new("gradrobust")
        .about("Gradient-robust Navier-Stokes solves and their optimal control")
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .help("flat key=value file; flags override its values"),
        );
    for k in KEYS {
        let mut arg = Arg::new(k.name).long(k.name).help(k.help).action(ArgAction::Set).allow_hyphen_values(!k.switch);
        if k.switch {
            arg = arg.num_args(0..=1).default_missing_value("true").value_name("BOOL");
        }
        cmd = cmd.arg(arg);
    }
    cmd
}

fn is_key(name: &str) -> bool {
    KEYS.iter().any(|k| k.name == name)
}

fn invalid(key: &str, value: &str, reason: impl Into<String>) -> CliError {
    CliError::Invalid { key: key.to_string(), value: value.to_string(), reason: reason.into() }
}

fn list<T>(key: &str, value: &str, item: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, CliError> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.iter().any(|s| s.is_empty()) {
        return Err(invalid(key, value, "empty list entry"));
    }
    parts
        .into_iter()
        .map(|s| item(s).ok_or_else(|| invalid(key, value, format!("cannot parse '{s}'"))))
        .collect()
}

fn boolean(s: &str) -> Option<bool> {
    match s {
        "true" | "yes" | "1" => Some(true),
        "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

fn positive(key: &str, value: &str) -> Result<f64, CliError> {
    match value.parse::<f64>() {
        Ok(x) if x.is_finite() && x > 0.0 => Ok(x),
        _ => Err(invalid(key, value, "expected a positive finite number")),
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Effective mesh levels.
    pub fn mesh_levels(&self) -> Vec<usize> {
        if self.full {
            vec![FULL_LEVEL]
        } else {
            self.levels.clone().unwrap_or_else(|| vec![DEFAULT_LEVEL])
        }
    }

    /// Number of individual solves requested.
    pub fn run_count(&self) -> usize {
        self.forms.len() * self.robust.len() * self.nus.len() * self.mesh_levels().len()
    }

    /// Sets one key. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let value = value.trim();
        match key {
            "mode" => self.mode = value.parse().map_err(|e: String| invalid(key, value, e))?,
            "form" | "forms" => self.forms = list(key, value, |s| s.parse().ok())?,
            "robust" => {
                self.robust = match value {
                    "both" => vec![true, false],
                    _ => list(key, value, boolean)?,
                }
            }
            "nu" => {
                self.nus = list(key, value, |s| s.parse::<f64>().ok().filter(|x| x.is_finite() && *x > 0.0))?
            }
            "n" => self.levels = Some(list(key, value, |s| s.parse::<usize>().ok().filter(|&n| n > 0))?),
            "full" => self.full = boolean(value).ok_or_else(|| invalid(key, value, "expected true or false"))?,
            "gradient-tol" => self.gradient_tol = positive(key, value)?,
            "max-iter" => self.max_iter = value.parse().map_err(|_| invalid(key, value, "expected an integer"))?,
            "newton-atol" => self.newton_atol = positive(key, value)?,
            "newton-rtol" => self.newton_rtol = positive(key, value)?,
            "newton-max-iter" => {
                self.newton_max_iter = match value.parse() {
                    Ok(n) if n > 0 => n,
                    _ => return Err(invalid(key, value, "expected a positive integer")),
                }
            }
            "literal-pairings" => {
                self.literal_pairings = boolean(value).ok_or_else(|| invalid(key, value, "expected true or false"))?
            }
            "deterministic" => {
                self.deterministic = boolean(value).ok_or_else(|| invalid(key, value, "expected true or false"))?
            }
            "csv" | "markdown" | "vtk" => {
                if value.is_empty() {
                    return Err(invalid(key, value, "empty path"));
                }
                let path = Some(PathBuf::from(value));
                match key {
                    "csv" => self.csv = path,
                    "markdown" => self.markdown = path,
                    _ => self.vtk = path,
                }
            }
            other => return Err(CliError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Applies one layer of settings; `form` and `forms` may not both appear.
    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<(), CliError> {
        let has = |k: &str| pairs.iter().any(|(key, _)| key == k);
        if has("form") && has("forms") {
            return Err(CliError::Conflict("both 'form' and 'forms' given".into()));
        }
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Cross-field checks, run once all layers are applied.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.full && self.levels.is_some() {
            return Err(CliError::Conflict("'full' and 'n' both select the mesh level".into()));
        }
        if self.mode != Mode::Tables && (self.csv.is_some() || self.markdown.is_some()) {
            return Err(CliError::Conflict(format!("table output requested in {} mode", self.mode)));
        }
        if self.vtk.is_some() {
            if !matches!(self.mode, Mode::State | Mode::Ocp) {
                return Err(CliError::Conflict(format!("field output is not available in {} mode", self.mode)));
            }
            if self.run_count() != 1 {
                return Err(CliError::Conflict(format!(
                    "field output needs exactly one run, {} requested",
                    self.run_count()
                )));
            }
        }
        Ok(())
    }

    /// Serializes every setting; `parse_config_text` reads it back unchanged.
    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| out.push_str(&format!("{k}={v}\n"));
        line("mode", self.mode.to_string());
        line("forms", join(&self.forms));
        line("robust", join(&self.robust));
        line("nu", join(&self.nus));
        if let Some(levels) = &self.levels {
            line("n", join(levels));
        }
        line("full", self.full.to_string());
        line("gradient-tol", self.gradient_tol.to_string());
        line("max-iter", self.max_iter.to_string());
        line("newton-atol", self.newton_atol.to_string());
        line("newton-rtol", self.newton_rtol.to_string());
        line("newton-max-iter", self.newton_max_iter.to_string());
        line("literal-pairings", self.literal_pairings.to_string());
        line("deterministic", self.deterministic.to_string());
        for (k, p) in [("csv", &self.csv), ("markdown", &self.markdown), ("vtk", &self.vtk)] {
            if let Some(p) = p {
                line(k, p.display().to_string());
            }
        }
        out
    }
}

/// Splits config file text into pairs. Blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Syntax(format!("line {}: expected key=value, got '{line}'", i + 1)));
        };
        let k = k.trim();
        if !is_key(k) {
            return Err(CliError::UnknownKey(k.to_string()));
        }
        pairs.push((k.to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

/// Defaults overridden by config file text.
pub fn parse_config_text(text: &str) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    cfg.apply(&parse_pairs(text)?)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parses a command line. `args` starts with the program name, as
/// `std::env::args` does.
pub fn parse_config<I, T>(args: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = command().try_get_matches_from(args)?;
    let mut cfg = RunConfig::default();
    if let Some(path) = matches.get_one::<String>("config") {
        let text = fs::read_to_string(path)
            .map_err(|source| CliError::Unreadable { path: PathBuf::from(path), source })?;
        cfg.apply(&parse_pairs(&text)?)?;
    }
    let flags: Vec<(String, String)> = KEYS
        .iter()
        .filter_map(|k| matches.get_one::<String>(k.name).map(|v| (k.name.to_string(), v.clone())))
        .collect();
    cfg.apply(&flags)?;
    cfg.validate()?;
    Ok(cfg)
}
