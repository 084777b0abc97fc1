//! Command-line front end.
//!
//! Exit codes: 0 success, 1 numeric-quality failure, 2 input or config
//! failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ConfigError, Problem, RunConfig};
use crate::csvio::{self, LoadedField};
use crate::expr::Expression;
use crate::field::{GridField, PointStatus};
use crate::verify::{self, Model, ResidualReport, VerifyError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_QUALITY: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

/// Environment variable capping solver threads; `0` runs serially.
pub const THREADS_ENV: &str = "HJGEN_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "hjgen",
    version,
    about = "General solutions of first-order PDEs and the 1-D Hamilton-Jacobi equation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the configured problem and write the field CSV and report.
    Solve {
        config: PathBuf,
        /// Overrides `output.field`.
        #[arg(long)]
        field: Option<PathBuf>,
        /// Overrides `output.report`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Recompute the residual report of a field CSV.
    Verify { config: PathBuf, csv: PathBuf },
    /// Compare a field CSV against a closed-form solution.
    Oracle {
        /// free_particle, harmonic or separation.
        name: String,
        csv: PathBuf,
        /// Oracle parameter as key=value; repeatable.
        #[arg(long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
    },
    /// Compare a symbolic derivative with central differences at random points.
    Diffcheck {
        expr: String,
        var: String,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Runs the CLI with `args` (including the program name), writing normal
/// output to `out` and diagnostics to `err`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Solve {
            config,
            field,
            report,
        } => run_solve(&config, field.as_deref(), report.as_deref(), out),
        Command::Verify { config, csv } => run_verify(&config, &csv, out),
        Command::Oracle { name, csv, params } => run_oracle(&name, &csv, &params, out),
        Command::Diffcheck { expr, var, n, seed } => run_diffcheck(&expr, &var, n, seed, out),
    };
    match result {
        Ok(code) => code,
        Err(message) => {
            let _ = writeln!(err, "error: {message}");
            EXIT_INPUT
        }
    }
}

/// Input failures become `Err` (exit 2); numeric verdicts are `Ok(code)`.
type CliResult = Result<i32, String>;

fn config_error(path: &Path, e: ConfigError) -> String {
    format!("{}: {e}", path.display())
}

fn thread_pool() -> Result<rayon::ThreadPool, String> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| format!("{THREADS_ENV} must be a non-negative integer, got `{v}`"))?;
            n.max(1)
        }
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| e.to_string())
}

enum Solved {
    Hj(crate::field::ActionField),
    Pq(crate::field::SolutionField),
}

fn solve(cfg: &RunConfig) -> Result<Solved, String> {
    let pool = thread_pool()?;
    pool.install(|| match &cfg.problem {
        Problem::Hj {
            problem,
            separation_c: Some(c),
        } => problem
            .separation_field(*c, &cfg.axis1, &cfg.axis2, &cfg.solver)
            .map(Solved::Hj)
            .map_err(|e| e.to_string()),
        Problem::Hj { problem, .. } => problem
            .solve_field(&cfg.axis1, &cfg.axis2, cfg.q_range, &cfg.solver)
            .map(Solved::Hj)
            .map_err(|e| e.to_string()),
        Problem::Pq(problem) => problem
            .solve_grid(&cfg.axis1, &cfg.axis2, cfg.q_range, &cfg.solver)
            .map(Solved::Pq)
            .map_err(|e| e.to_string()),
    })
}

fn model(problem: &Problem) -> Model<'_> {
    match problem {
        Problem::Hj { problem, .. } => Model::Hj(problem),
        Problem::Pq(problem) => Model::Pq(problem),
    }
}

/// Renders the report and decides the verdict.
fn render_report<F: GridField + ?Sized>(
    cfg: &RunConfig,
    field: &F,
    residual: &Result<ResidualReport, VerifyError>,
) -> (String, bool) {
    let mut s = String::new();
    let total = field.len();
    let kind = if cfg.problem.is_hj() { "hj" } else { "pq" };
    let second = if cfg.problem.is_hj() { "t" } else { "y" };
    let _ = writeln!(s, "kind = {kind}");
    let _ = writeln!(s, "points = {total}");
    for status in [
        PointStatus::Resolved,
        PointStatus::NoRoot,
        PointStatus::MultiRoot,
        PointStatus::DomainFail,
    ] {
        let _ = writeln!(s, "{status} = {}", field.count_status(status));
    }
    let fraction = if total == 0 {
        0.0
    } else {
        field.count_status(PointStatus::Resolved) as f64 / total as f64
    };
    let _ = writeln!(s, "resolved_fraction = {fraction}");
    let _ = writeln!(s, "min_resolved = {}", cfg.output.min_resolved);
    let _ = writeln!(s, "max_residual = {:e}", cfg.output.max_residual);
    let pass = match residual {
        Ok(r) => {
            let (i, j) = r.worst_point;
            let _ = writeln!(s, "residual_points = {}", r.points);
            let _ = writeln!(s, "residual_max_abs = {:e}", r.max_abs);
            let _ = writeln!(s, "residual_mean_abs = {:e}", r.mean_abs);
            let _ = writeln!(
                s,
                "worst_point = ({i}, {j}) x = {} {second} = {}",
                field.axis1()[i],
                field.axis2()[j]
            );
            let _ = writeln!(s, "h_used = {:e}", r.h_used);
            fraction >= cfg.output.min_resolved && r.max_abs <= cfg.output.max_residual
        }
        Err(e) => {
            let _ = writeln!(s, "residual = unavailable ({e})");
            false
        }
    };
    let _ = writeln!(s, "verdict = {}", if pass { "pass" } else { "fail" });
    (s, pass)
}

fn create(path: &Path) -> Result<BufWriter<File>, String> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn run_solve(
    config: &Path,
    field_path: Option<&Path>,
    report_path: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult {
    let cfg = RunConfig::load(config).map_err(|e| config_error(config, e))?;
    let field_path = field_path.map(Path::to_path_buf).unwrap_or_else(|| {
        cfg.output_path(cfg.output.field.as_deref(), config.with_extension("csv"))
    });
    let report_path = report_path.map(Path::to_path_buf).unwrap_or_else(|| {
        cfg.output_path(
            cfg.output.report.as_deref(),
            config.with_extension("report.txt"),
        )
    });
    let solved = solve(&cfg)?;
    let mut w = create(&field_path)?;
    let (text, pass) = match &solved {
        Solved::Hj(field) => {
            csvio::write_action_field(&mut w, field).map_err(|e| e.to_string())?;
            render_report(
                &cfg,
                field,
                &verify::residual_report(model(&cfg.problem), field),
            )
        }
        Solved::Pq(field) => {
            csvio::write_solution_field(&mut w, field).map_err(|e| e.to_string())?;
            render_report(
                &cfg,
                field,
                &verify::residual_report(model(&cfg.problem), field),
            )
        }
    };
    w.flush().map_err(|e| e.to_string())?;
    let mut r = create(&report_path)?;
    r.write_all(text.as_bytes()).map_err(|e| e.to_string())?;
    r.flush().map_err(|e| e.to_string())?;
    let _ = write!(out, "{text}");
    let _ = writeln!(out, "field = {}", field_path.display());
    let _ = writeln!(out, "report = {}", report_path.display());
    Ok(if pass { EXIT_OK } else { EXIT_QUALITY })
}

fn load_csv(path: &Path) -> Result<LoadedField, String> {
    let file = File::open(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    csvio::read_field(BufReader::new(file)).map_err(|e| format!("{}: {e}", path.display()))
}

fn run_verify(config: &Path, csv: &Path, out: &mut dyn Write) -> CliResult {
    let cfg = RunConfig::load(config).map_err(|e| config_error(config, e))?;
    let loaded = load_csv(csv)?;
    let (text, pass) = match (&loaded, cfg.problem.is_hj()) {
        (LoadedField::Hj(field), true) => render_report(
            &cfg,
            field,
            &verify::residual_report(model(&cfg.problem), field),
        ),
        (LoadedField::Pq(field), false) => render_report(
            &cfg,
            field,
            &verify::residual_report(model(&cfg.problem), field),
        ),
        _ => {
            return Err(format!(
                "{}: CSV schema does not match the configured problem kind",
                csv.display()
            ))
        }
    };
    let _ = write!(out, "{text}");
    Ok(if pass { EXIT_OK } else { EXIT_QUALITY })
}

struct Params(Vec<(String, String)>);

impl Params {
    fn parse(raw: &[String], allowed: &[&str]) -> Result<Params, String> {
        let mut out = Vec::new();
        for p in raw {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| format!("parameter `{p}` is not key=value"))?;
            let k = k.trim();
            if !allowed.contains(&k) {
                return Err(format!(
                    "unknown parameter `{k}` (expected one of {})",
                    allowed.join(", ")
                ));
            }
            out.push((k.to_owned(), v.trim().to_owned()));
        }
        Ok(Params(out))
    }

    fn text(&self, key: &str) -> Option<&str> {
        self.0
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn num(&self, key: &str, default: Option<f64>) -> Result<f64, String> {
        match self.text(key) {
            Some(v) => v
                .parse()
                .map_err(|_| format!("parameter {key}: `{v}` is not a number")),
            None => default.ok_or_else(|| format!("parameter {key} is required")),
        }
    }
}

fn run_oracle(name: &str, csv: &Path, raw: &[String], out: &mut dyn Write) -> CliResult {
    type Oracle = Box<dyn Fn(f64, f64, f64) -> f64>;
    let (params, oracle): (Params, Oracle) = match name {
        "free_particle" => {
            let p = Params::parse(raw, &["a", "C", "tol"])?;
            let (a, c) = (p.num("a", Some(1.0))?, p.num("C", Some(1.0))?);
            (p, Box::new(move |x, t, _| x * x / (4.0 * a * (c - t))))
        }
        "harmonic" => {
            let p = Params::parse(raw, &["G", "tol"])?;
            let g = Expression::parse(p.text("G").unwrap_or("q^2/2"))
                .map_err(|e| format!("parameter G: {e}"))?
                .compile(&["q"])
                .map_err(|e| format!("parameter G: {e}"))?;
            let oracle = move |x: f64, t: f64, q: f64| {
                let g = g.eval(&[q]).unwrap_or(f64::NAN);
                0.5 * x * (q - x * x).sqrt() + 0.5 * q * (x / q.sqrt()).asin() + q * t - g
            };
            (p, Box::new(oracle))
        }
        "separation" => {
            let p = Params::parse(raw, &["a", "C", "model", "tol"])?;
            let (a, c) = (p.num("a", Some(1.0))?, p.num("C", None)?);
            let oracle: Oracle = match p.text("model").unwrap_or("free") {
                "free" => Box::new(move |x, t, _| x * (c / a).sqrt() + c * t),
                "harmonic" => Box::new(move |x, t, _| {
                    0.5 * x * (c - x * x).sqrt() + 0.5 * c * (x / c.sqrt()).asin() + c * t
                }),
                other => {
                    return Err(format!(
                        "unknown separation model `{other}` (free or harmonic)"
                    ))
                }
            };
            (p, oracle)
        }
        other => {
            return Err(format!(
                "unknown oracle `{other}` (expected free_particle, harmonic or separation)"
            ))
        }
    };
    let tol = params.num("tol", Some(1e-8))?;
    let LoadedField::Hj(field) = load_csv(csv)? else {
        return Err(format!(
            "{}: oracle `{name}` needs a Hamilton-Jacobi field",
            csv.display()
        ));
    };
    let points = field.count_status(PointStatus::Resolved);
    let (max, mean) = verify::compare_oracle_with(&field, oracle);
    let pass = points > 0 && max <= tol;
    let _ = writeln!(out, "oracle = {name}");
    let _ = writeln!(out, "points = {points}");
    let _ = writeln!(out, "max_abs_err = {max:e}");
    let _ = writeln!(out, "mean_abs_err = {mean:e}");
    let _ = writeln!(out, "tol = {tol:e}");
    let _ = writeln!(out, "verdict = {}", if pass { "pass" } else { "fail" });
    Ok(if pass { EXIT_OK } else { EXIT_QUALITY })
}

/// Outcome of a symbolic-versus-numeric derivative comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffCheck {
    pub checked: usize,
    pub failures: usize,
    pub worst_rel: f64,
}

const DIFFCHECK_BOX: f64 = 3.0;
const DIFFCHECK_TOL: f64 = 1e-6;

/// Compares `d expr / d var` with central differences at `n` seeded random
/// points drawn uniformly from `[-3, 3]` per variable.
///
/// A draw counts only where the expression is defined and smooth enough for
/// the difference quotient to be trustworthy: the estimates with steps `h`
/// and `2h` must agree to 1e-7 relative. Returns `None` if fewer than `n`
/// such points turn up within `200 n` draws.
pub fn diffcheck(expr: &Expression, var: &str, n: usize, seed: u64) -> Option<DiffCheck> {
    let mut names: Vec<String> = expr.variables().into_iter().collect();
    if !names.iter().any(|v| v == var) {
        names.push(var.to_owned());
    }
    let vars: Vec<&str> = names.iter().map(String::as_str).collect();
    let slot = vars.iter().position(|v| *v == var).expect("var present");
    let f = expr.compile(&vars).ok()?;
    let df = expr.differentiate(var).compile(&vars).ok()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DiffCheck {
        checked: 0,
        failures: 0,
        worst_rel: 0.0,
    };
    let mut draws = 0;
    while out.checked < n && draws < 200 * n.max(1) {
        draws += 1;
        let point: Vec<f64> = vars
            .iter()
            .map(|_| rng.gen_range(-DIFFCHECK_BOX..=DIFFCHECK_BOX))
            .collect();
        let v = point[slot];
        let h = 1e-6 * (1.0 + v.abs());
        let at = |dv: f64| {
            let mut p = point.clone();
            p[slot] = v + dv;
            f.eval(&p).ok()
        };
        let (Some(sym), Some(p1), Some(m1), Some(p2), Some(m2)) = (
            df.eval(&point).ok(),
            at(h),
            at(-h),
            at(2.0 * h),
            at(-2.0 * h),
        ) else {
            continue;
        };
        let fd = (p1 - m1) / (2.0 * h);
        let fd2 = (p2 - m2) / (4.0 * h);
        if (fd - fd2).abs() > 1e-7 * (1.0 + fd.abs()) {
            continue;
        }
        out.checked += 1;
        let rel = (sym - fd).abs() / (1.0 + sym.abs());
        out.worst_rel = out.worst_rel.max(rel);
        if rel > DIFFCHECK_TOL {
            out.failures += 1;
        }
    }
    (out.checked >= n).then_some(out)
}

fn run_diffcheck(src: &str, var: &str, n: usize, seed: u64, out: &mut dyn Write) -> CliResult {
    let expr = Expression::parse(src).map_err(|e| format!("expression `{src}`: {e}"))?;
    if var.is_empty() || !var.chars().all(|c| c.is_alphanumeric() || c == '_') {
        return Err(format!("`{var}` is not a variable name"));
    }
    let _ = writeln!(out, "expr = {src}");
    let _ = writeln!(out, "derivative = {}", expr.differentiate(var));
    match diffcheck(&expr, var, n, seed) {
        Some(r) => {
            let pass = r.failures == 0;
            let _ = writeln!(out, "points = {}", r.checked);
            let _ = writeln!(out, "failures = {}", r.failures);
            let _ = writeln!(out, "worst_rel = {:e}", r.worst_rel);
            let _ = writeln!(out, "verdict = {}", if pass { "pass" } else { "fail" });
            Ok(if pass { EXIT_OK } else { EXIT_QUALITY })
        }
        None => {
            let _ = writeln!(out, "verdict = fail (too few evaluable points)");
            Ok(EXIT_QUALITY)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(args.iter().copied(), &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn diffcheck_examples() {
        assert_eq!(
            run_args(&["hjgen", "diffcheck", "asin(x/sqrt(q))", "q"]).0,
            0
        );
        assert_eq!(run_args(&["hjgen", "diffcheck", "q^2/2", "q"]).0, 0);
        assert_eq!(
            run_args(&[
                "hjgen",
                "diffcheck",
                "ln(x)",
                "q",
                "--n",
                "20",
                "--seed",
                "7"
            ])
            .0,
            0
        );
        let (code, _, err) = run_args(&["hjgen", "diffcheck", "q^^2", "q"]);
        assert_eq!(code, 2);
        assert!(err.contains("position 2"), "{err}");
    }

    #[test]
    fn diffcheck_needs_evaluable_points() {
        assert_eq!(
            run_args(&["hjgen", "diffcheck", "sqrt(-1 - q^2)", "q"]).0,
            1
        );
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_args(&["hjgen"]).0, 2);
        assert_eq!(run_args(&["hjgen", "frobnicate"]).0, 2);
        assert_eq!(run_args(&["hjgen", "--help"]).0, 0);
    }

    #[test]
    fn unknown_oracle_exits_2() {
        let (code, _, err) = run_args(&["hjgen", "oracle", "pendulum", "nowhere.csv"]);
        assert_eq!(code, 2);
        assert!(err.contains("unknown oracle"));
    }
}
