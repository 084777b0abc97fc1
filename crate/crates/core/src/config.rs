//! Run configuration files.
//!
//! A config is sectioned `key = value` text with `#` comments and
//! expressions in double quotes (a TOML subset):
//!
//! ```text
//! [problem]
//! kind = "hj"
//! a = "1"
//! V = "x^2"
//! G = "q^2/2"
//!
//! [grid]
//! x = { min = 0.1, max = 0.9, count = 41 }
//! t = [0.0, 0.1, 0.2]
//!
//! [solver]
//! q_range = [1.0, 6.0]
//!
//! [output]
//! field = "harmonic.csv"
//! ```
//!
//! Unknown keys are rejected. Errors carry the line number of the offending
//! entry.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::expr::{Expression, ParseError};
use crate::field::{self, linspace};
use crate::hj::{HjError, HjProblem, DEFAULT_EPS_ADM};
use crate::numerics::SolverConfig;
use crate::pq::{PqError, PqProblem};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Syntax(String),
    #[error("line {line}: expression `{key} = \"{source_text}\"`: {error}")]
    Expression {
        key: String,
        line: usize,
        source_text: String,
        error: ParseError,
    },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("{0}")]
    Problem(String),
}

impl From<HjError> for ConfigError {
    fn from(e: HjError) -> Self {
        ConfigError::Problem(e.to_string())
    }
}

impl From<PqError> for ConfigError {
    fn from(e: PqError) -> Self {
        ConfigError::Problem(e.to_string())
    }
}

fn one() -> String {
    "1".into()
}

fn zero() -> String {
    "0".into()
}

fn plus() -> f64 {
    1.0
}

fn eps_adm() -> f64 {
    DEFAULT_EPS_ADM
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSection {
    Hj {
        #[serde(default = "one")]
        a: String,
        #[serde(rename = "V", alias = "v", default = "zero")]
        v: String,
        #[serde(rename = "G", alias = "g")]
        g: String,
        #[serde(default = "plus")]
        sigma: f64,
        #[serde(default)]
        x0: f64,
        #[serde(default = "eps_adm")]
        eps_adm: f64,
        /// When set, the run samples the constant-`q` complete integral
        /// instead of solving the constraint.
        #[serde(default)]
        separation_c: Option<f64>,
    },
    Explicit {
        f: String,
        phi: String,
    },
    ScaledX {
        scale: String,
        #[serde(rename = "G", alias = "g")]
        g: String,
        phi: String,
        #[serde(default)]
        base: f64,
    },
    ScaledY {
        scale: String,
        #[serde(rename = "G", alias = "g")]
        g: String,
        phi: String,
        #[serde(default)]
        base: f64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum AxisSpec {
    Range { min: f64, max: f64, count: usize },
    Points(Vec<f64>),
}

impl AxisSpec {
    pub fn points(&self) -> Vec<f64> {
        match self {
            AxisSpec::Range { min, max, count } => linspace(*min, *max, *count),
            AxisSpec::Points(p) => p.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub x: AxisSpec,
    pub y: Option<AxisSpec>,
    pub t: Option<AxisSpec>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub q_range: Option<[f64; 2]>,
    pub root_tol: Option<f64>,
    pub resid_tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub quad_tol: Option<f64>,
    pub scan_points: Option<usize>,
}

fn min_resolved() -> f64 {
    0.99
}

fn max_residual() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub field: Option<String>,
    pub report: Option<String>,
    #[serde(default = "min_resolved")]
    pub min_resolved: f64,
    #[serde(default = "max_residual")]
    pub max_residual: f64,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            field: None,
            report: None,
            min_resolved: min_resolved(),
            max_residual: max_residual(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    problem: ProblemSection,
    grid: GridSection,
    #[serde(default)]
    solver: SolverSection,
    #[serde(default)]
    output: OutputSection,
}

/// A configured problem, ready to solve.
#[derive(Debug, Clone)]
pub enum Problem {
    Hj {
        problem: HjProblem,
        separation_c: Option<f64>,
    },
    Pq(PqProblem),
}

impl Problem {
    pub fn is_hj(&self) -> bool {
        matches!(self, Problem::Hj { .. })
    }
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: Problem,
    pub axis1: Vec<f64>,
    pub axis2: Vec<f64>,
    pub solver: SolverConfig,
    pub q_range: (f64, f64),
    pub output: OutputSection,
    /// Directory the config was read from; relative output paths resolve here.
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Syntax(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = RunConfig::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of_offset(text, s.start));
            let msg = e.message().to_string();
            match line {
                Some(line) => ConfigError::Invalid { line, message: msg },
                None => ConfigError::Syntax(msg),
            }
        })?;
        let expr = |key: &str, src: &str| -> Result<Expression, ConfigError> {
            Expression::parse(src).map_err(|error| ConfigError::Expression {
                key: key.to_owned(),
                line: line_of_key(text, "problem", key),
                source_text: src.to_owned(),
                error,
            })
        };
        let problem = match &raw.problem {
            ProblemSection::Hj {
                a,
                v,
                g,
                sigma,
                x0,
                eps_adm,
                separation_c,
            } => {
                if !(*eps_adm > 0.0) {
                    return Err(ConfigError::Invalid {
                        line: line_of_key(text, "problem", "eps_adm"),
                        message: "eps_adm must be positive".into(),
                    });
                }
                if *sigma != 1.0 && *sigma != -1.0 {
                    return Err(ConfigError::Invalid {
                        line: line_of_key(text, "problem", "sigma"),
                        message: "sigma must be 1 or -1".into(),
                    });
                }
                let problem = HjProblem::new(expr("a", a)?, expr("V", v)?, expr("G", g)?)?
                    .with_branch(*sigma)
                    .with_base_point(*x0)
                    .with_margin(*eps_adm);
                Problem::Hj {
                    problem,
                    separation_c: *separation_c,
                }
            }
            ProblemSection::Explicit { f, phi } => {
                Problem::Pq(PqProblem::explicit(expr("f", f)?, expr("phi", phi)?)?)
            }
            ProblemSection::ScaledX {
                scale,
                g,
                phi,
                base,
            } => Problem::Pq(
                PqProblem::scaled_x(expr("scale", scale)?, expr("G", g)?, expr("phi", phi)?)?
                    .with_scale_base(*base),
            ),
            ProblemSection::ScaledY {
                scale,
                g,
                phi,
                base,
            } => Problem::Pq(
                PqProblem::scaled_y(expr("scale", scale)?, expr("G", g)?, expr("phi", phi)?)?
                    .with_scale_base(*base),
            ),
        };

        let (second_name, second) = if problem.is_hj() {
            ("t", raw.grid.t.as_ref())
        } else {
            ("y", raw.grid.y.as_ref())
        };
        let grid_line = |key: &str| line_of_key(text, "grid", key);
        let second = second.ok_or_else(|| ConfigError::Invalid {
            line: line_of_section(text, "grid"),
            message: format!("grid needs a `{second_name}` axis for this problem kind"),
        })?;
        let stray = if problem.is_hj() {
            raw.grid.y.is_some()
        } else {
            raw.grid.t.is_some()
        };
        if stray {
            let key = if problem.is_hj() { "y" } else { "t" };
            return Err(ConfigError::Invalid {
                line: grid_line(key),
                message: format!("axis `{key}` does not belong to this problem kind"),
            });
        }
        let axis1 = raw.grid.x.points();
        let axis2 = second.points();
        field::check_axis("x", &axis1).map_err(|message| ConfigError::Invalid {
            line: grid_line("x"),
            message,
        })?;
        field::check_axis(second_name, &axis2).map_err(|message| ConfigError::Invalid {
            line: grid_line(second_name),
            message,
        })?;

        let defaults = SolverConfig::default();
        let s = &raw.solver;
        let solver = SolverConfig {
            root_tol: s.root_tol.unwrap_or(defaults.root_tol),
            resid_tol: s.resid_tol.unwrap_or(defaults.resid_tol),
            max_iter: s.max_iter.unwrap_or(defaults.max_iter),
            quad_tol: s.quad_tol.unwrap_or(defaults.quad_tol),
            scan_points: s.scan_points.unwrap_or(defaults.scan_points),
        };
        solver.validate().map_err(|message| ConfigError::Invalid {
            line: line_of_section(text, "solver"),
            message,
        })?;
        let q_range = match (s.q_range, &problem) {
            (Some([lo, hi]), _) if lo < hi => (lo, hi),
            (Some(_), _) => {
                return Err(ConfigError::Invalid {
                    line: line_of_key(text, "solver", "q_range"),
                    message: "q_range must be [lo, hi] with lo < hi".into(),
                })
            }
            (
                None,
                Problem::Hj {
                    separation_c: Some(c),
                    ..
                },
            ) => (*c, *c + 1.0),
            (None, _) => {
                return Err(ConfigError::Invalid {
                    line: line_of_section(text, "solver"),
                    message: "solver.q_range is required".into(),
                })
            }
        };
        Ok(RunConfig {
            problem,
            axis1,
            axis2,
            solver,
            q_range,
            output: raw.output,
            base_dir: PathBuf::new(),
        })
    }

    /// Output path from the config, resolved against the config directory,
    /// or `fallback` when unset.
    pub fn output_path(&self, configured: Option<&str>, fallback: PathBuf) -> PathBuf {
        match configured {
            Some(p) if Path::new(p).is_absolute() => PathBuf::from(p),
            Some(p) => self.base_dir.join(p),
            None => fallback,
        }
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn line_of_section(text: &str, section: &str) -> usize {
    let header = format!("[{section}]");
    text.lines()
        .position(|l| l.trim() == header)
        .map(|i| i + 1)
        .unwrap_or(0)
}

/// Line of `key = ...` inside `[section]`, 0 when not found.
fn line_of_key(text: &str, section: &str, key: &str) -> usize {
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.starts_with('[') && trimmed.ends_with(']') {
            current = trimmed[1..trimmed.len() - 1].trim().to_owned();
            continue;
        }
        if current != section {
            continue;
        }
        if let Some((lhs, _)) = trimmed.split_once('=') {
            if lhs.trim().eq_ignore_ascii_case(key) {
                return i + 1;
            }
        }
    }
    0
}
