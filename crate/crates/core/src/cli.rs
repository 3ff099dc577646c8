//! Command-line front end.
//!
//! Every command prints (or writes with `--out`) one report as JSON or CSV.
//! Exit codes: 0 success, 1 solver failure, 2 violated invariant or bound,
//! 3 bad configuration.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::bounds::BoundsReport;
use crate::dressed::{find_q, find_q_report, solve_eps0};
use crate::error::Error;
use crate::fredholm::{build_resolvent, log_fredholm_det, positivity_check};
use crate::freeenergy::{free_energy, free_energy_lowt_fit, truncation_tail_bound};
use crate::kernel::{parse_coupling, ModelParams};
use crate::lowt::{verify_expansion, ExpansionConfig};
use crate::nlie::{certify_t0, solve_yang_yang};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SOLVER: i32 = 1;
pub const EXIT_INVARIANT: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

const DEFAULT_TOL: f64 = 1e-10;
const DEFAULT_GRID_N: usize = 128;
const DEFAULT_SEED: u64 = 42;
const POSITIVITY_SAMPLES: usize = 500;
/// `check-bounds` samples `T·2^{−k}` for `k` below this.
const T0_GRID_LEVELS: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "yangyang",
    version,
    about = "Yang-Yang equation solver and verification suite"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandKind,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum CommandKind {
    /// Solve the finite-temperature equation and export ε on the grid.
    Solve,
    /// Finite-temperature Fermi point q̂ with its bracket.
    FermiPoint,
    /// Zero-temperature dressed energy on [−α, α] (α defaults to q).
    Dressed,
    /// Log-determinant of I − K/2π and resolvent positivity on [−α, α].
    Det,
    /// Low-temperature expansion check over a temperature list.
    LowtVerify,
    /// Free energy at T, with a low-temperature fit when --t-list is given.
    FreeEnergy,
    /// Auxiliary bounds z_h, w, V_h and the Fermi-point bracket.
    CheckBounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Coupling constant; `inf` selects the impenetrable limit.
    #[arg(long = "c", global = true, allow_hyphen_values = true)]
    pub c: Option<String>,
    /// Chemical potential.
    #[arg(long = "h", global = true, allow_hyphen_values = true)]
    pub h: Option<f64>,
    /// Temperature.
    #[arg(long = "T", global = true, allow_hyphen_values = true)]
    pub t: Option<f64>,
    /// Comma-separated temperatures.
    #[arg(long = "t-list", global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub t_list: Option<Vec<f64>>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub tol: Option<f64>,
    #[arg(long = "grid-n", global = true)]
    pub grid_n: Option<usize>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Flat `key = value` file with the same keys as the flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

/// Validated configuration of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: CommandKind,
    pub params: ModelParams,
    pub t: Option<f64>,
    pub t_list: Option<Vec<f64>>,
    pub tol: f64,
    pub grid_n: usize,
    pub alpha: Option<f64>,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub seed: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Solver(#[from] Error),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Solver(e) if e.is_invariant_violation() => EXIT_INVARIANT,
            CliError::Solver(_) | CliError::Io(_) => EXIT_SOLVER,
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Reads a flat `key = value` file into flags. `#` starts a comment.
pub fn parse_config_file(text: &str) -> Result<Flags, CliError> {
    let mut flags = Flags::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| config_err(format!("line {}: expected `key = value`", lineno + 1)))?;
        let key = key.trim().to_ascii_lowercase().replace('_', "-");
        let value = value.trim().trim_matches('"');
        let bad = |what: &str| config_err(format!("line {}: cannot parse {what} from {value:?}", lineno + 1));
        match key.as_str() {
            "c" => flags.c = Some(value.to_string()),
            "h" => flags.h = Some(value.parse().map_err(|_| bad("h"))?),
            "t" => flags.t = Some(value.parse().map_err(|_| bad("T"))?),
            "t-list" => {
                let list = value
                    .split(',')
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| bad("t-list"))?;
                flags.t_list = Some(list);
            }
            "tol" => flags.tol = Some(value.parse().map_err(|_| bad("tol"))?),
            "grid-n" => flags.grid_n = Some(value.parse().map_err(|_| bad("grid-n"))?),
            "alpha" => flags.alpha = Some(value.parse().map_err(|_| bad("alpha"))?),
            "out" => flags.out = Some(PathBuf::from(value)),
            "format" => {
                flags.format = Some(Format::from_str(value, true).map_err(|_| bad("format"))?);
            }
            "seed" => flags.seed = Some(value.parse().map_err(|_| bad("seed"))?),
            other => return Err(config_err(format!("line {}: unknown key {other:?}", lineno + 1))),
        }
    }
    Ok(flags)
}

fn merge(cli: Flags, file: Flags) -> Flags {
    Flags {
        c: cli.c.or(file.c),
        h: cli.h.or(file.h),
        t: cli.t.or(file.t),
        t_list: cli.t_list.or(file.t_list),
        tol: cli.tol.or(file.tol),
        grid_n: cli.grid_n.or(file.grid_n),
        alpha: cli.alpha.or(file.alpha),
        out: cli.out.or(file.out),
        format: cli.format.or(file.format),
        seed: cli.seed.or(file.seed),
        config: None,
    }
}

impl RunConfig {
    pub fn from_cli(cli: Cli) -> Result<Self, CliError> {
        let flags = match &cli.flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
                let file = parse_config_file(&text)?;
                merge(cli.flags, file)
            }
            None => cli.flags,
        };
        let command = cli.command;
        let c = flags.c.as_deref().ok_or_else(|| config_err("--c is required"))?;
        let coupling = parse_coupling(c).map_err(|e| config_err(e.to_string()))?;
        let h = match (flags.h, command) {
            (Some(h), _) => h,
            (None, CommandKind::Det) => 1.0,
            (None, _) => return Err(config_err("--h is required")),
        };
        let params = ModelParams::with_coupling(coupling, h).map_err(|e| config_err(e.to_string()))?;
        let tol = flags.tol.unwrap_or(DEFAULT_TOL);
        if !(tol > 0.0 && tol < 1.0) {
            return Err(config_err(format!("--tol must lie in (0, 1), got {tol}")));
        }
        let grid_n = flags.grid_n.unwrap_or(DEFAULT_GRID_N);
        if grid_n < crate::fredholm::MIN_GRID_N {
            return Err(config_err(format!(
                "--grid-n must be at least {}",
                crate::fredholm::MIN_GRID_N
            )));
        }
        if let Some(t) = flags.t {
            if !(t > 0.0 && t.is_finite()) {
                return Err(config_err(format!("--T must be positive, got {t}")));
            }
        }
        if let Some(list) = &flags.t_list {
            if list.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
                return Err(config_err("--t-list entries must be positive"));
            }
        }
        if let Some(a) = flags.alpha {
            if !(a > 0.0 && a.is_finite()) {
                return Err(config_err(format!("--alpha must be positive, got {a}")));
            }
        }
        let needs_t = matches!(
            command,
            CommandKind::Solve | CommandKind::FermiPoint | CommandKind::FreeEnergy | CommandKind::CheckBounds
        );
        if needs_t && flags.t.is_none() {
            return Err(config_err("--T is required for this command"));
        }
        if command == CommandKind::LowtVerify && flags.t_list.is_none() {
            return Err(config_err("--t-list is required for lowt-verify"));
        }
        if command == CommandKind::Det && flags.alpha.is_none() {
            return Err(config_err("--alpha is required for det"));
        }
        Ok(Self {
            command,
            params,
            t: flags.t,
            t_list: flags.t_list,
            tol,
            grid_n,
            alpha: flags.alpha,
            out: flags.out,
            format: flags.format.unwrap_or_default(),
            seed: flags.seed.unwrap_or(DEFAULT_SEED),
        })
    }
}

/// Rendered report and, when an invariant failed, the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub body: String,
    pub violation: Option<String>,
}

impl RunOutput {
    pub fn exit_code(&self) -> i32 {
        if self.violation.is_some() {
            EXIT_INVARIANT
        } else {
            EXIT_OK
        }
    }
}

/// Tabular view of a report for CSV output.
struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

fn num(x: f64) -> String {
    // Shortest representation that parses back to the same f64.
    format!("{x:?}")
}

fn render(format: Format, json_value: &Value, table: Table) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(json_value).expect("reports serialize");
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut s = table.header.join(",");
            s.push('\n');
            for row in table.rows {
                let _ = writeln!(s, "{}", row.join(","));
            }
            s
        }
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

pub fn run(config: &RunConfig) -> Result<RunOutput, CliError> {
    let p = &config.params;
    let mut violation = None;
    let (value, table) = match config.command {
        CommandKind::Solve => {
            let t = config.t.expect("validated");
            let sol = solve_yang_yang(p, t, config.tol)?;
            let eps = sol.epsilon_values();
            let grid: Vec<Value> = eps.iter().map(|(l, e)| json!({ "lambda": l, "epsilon": e })).collect();
            let value = json!({
                "params": p,
                "T": t,
                "tol": config.tol,
                "qhat": sol.qhat(),
                "iterations": sol.iterations(),
                "contraction_estimate": sol.contraction_estimate(),
                "residual_norm": sol.residual_norm(),
                "z_h": sol.z_h(),
                "lambda_max": sol.lambda_max(),
                "grid": grid,
            });
            let rows = eps.iter().map(|(l, e)| vec![num(l), num(e)]).collect();
            (
                value,
                Table {
                    header: vec!["lambda", "epsilon"],
                    rows,
                },
            )
        }
        CommandKind::FermiPoint => {
            let t = config.t.expect("validated");
            let sol = solve_yang_yang(p, t, config.tol)?;
            let q = find_q(p, config.grid_n)?;
            let (lo, hi) = (p.h().sqrt(), 2.0 * sol.w().sqrt());
            if !sol.qhat_in_bracket() {
                violation = Some(format!("qhat = {} outside [{lo}, {hi}]", sol.qhat()));
            }
            let fields = [
                ("T", t),
                ("qhat", sol.qhat()),
                ("q", q),
                ("qhat_lower", lo),
                ("qhat_upper", hi),
                ("epsilon_at_qhat", sol.epsilon_eval(sol.qhat())?),
                ("epsilon_deriv_at_qhat", sol.epsilon_deriv(sol.qhat())?),
            ];
            let mut value = json!({ "params": p, "in_bracket": sol.qhat_in_bracket() });
            for (k, v) in fields {
                value[k] = json!(v);
            }
            let table = Table {
                header: fields.iter().map(|(k, _)| *k).collect(),
                rows: vec![fields.iter().map(|(_, v)| num(*v)).collect()],
            };
            (value, table)
        }
        CommandKind::Dressed => {
            let report = match config.alpha {
                Some(_) => None,
                None => Some(find_q_report(p, config.grid_n)?),
            };
            let alpha = config
                .alpha
                .unwrap_or_else(|| report.as_ref().map(|r| r.q).expect("computed"));
            let d = solve_eps0(alpha, p, config.grid_n)?;
            let grid: Vec<Value> = d
                .eps0_values()
                .iter()
                .map(|(l, e)| json!({ "lambda": l, "eps0": e }))
                .collect();
            let value = json!({
                "params": p,
                "alpha": alpha,
                "fermi_point": report,
                "diag_value": d.diag_value(),
                "diag_derivative": d.diag_derivative(),
                "route_gap": d.route_gap(),
                "equation_residual": d.equation_residual()?,
                "grid": grid,
            });
            let rows = d.eps0_values().iter().map(|(l, e)| vec![num(l), num(e)]).collect();
            (
                value,
                Table {
                    header: vec!["lambda", "eps0"],
                    rows,
                },
            )
        }
        CommandKind::Det => {
            let alpha = config.alpha.expect("validated");
            let det = log_fredholm_det(alpha, p, 40, config.grid_n)?;
            let op = build_resolvent(alpha, p, config.grid_n)?;
            let positivity = positivity_check(&op, POSITIVITY_SAMPLES, config.seed);
            let identity_residual = op.identity_residual();
            if !positivity.passed {
                violation = Some(format!(
                    "resolvent positivity failed: min R = {}, min difference = {}",
                    positivity.min_resolvent, positivity.min_difference
                ));
            }
            let value = json!({
                "params": p,
                "log_det": det,
                "identity_residual": identity_residual,
                "positivity": positivity,
            });
            let rows = det
                .traces
                .iter()
                .enumerate()
                .map(|(n, tr)| vec![(n + 1).to_string(), num(*tr)])
                .collect();
            (
                value,
                Table {
                    header: vec!["n", "trace"],
                    rows,
                },
            )
        }
        CommandKind::LowtVerify => {
            let list = config.t_list.as_ref().expect("validated");
            let cfg = ExpansionConfig {
                tol: config.tol,
                grid_n: config.grid_n,
                parallel: true,
            };
            let report = verify_expansion(p, list, None, &cfg).map_err(|e| match e {
                Error::InvalidParameter(m) => config_err(m),
                other => CliError::Solver(other),
            })?;
            if let Some(i) = report.qhat_in_bracket.iter().position(|b| !b) {
                violation = Some(format!("qhat outside its bracket at T = {}", report.t_list[i]));
            }
            let rows = (0..report.t_list.len())
                .map(|i| {
                    vec![
                        num(report.t_list[i]),
                        num(report.qhat_list[i]),
                        num(report.sup_residual0[i]),
                        num(report.sup_residual2[i]),
                    ]
                })
                .collect();
            (
                to_value(&report),
                Table {
                    header: vec!["T", "qhat", "sup_residual0", "sup_residual2"],
                    rows,
                },
            )
        }
        CommandKind::FreeEnergy => {
            let t = config.t.expect("validated");
            let sol = solve_yang_yang(p, t, config.tol)?;
            let f = free_energy(&sol)?;
            let fit = match &config.t_list {
                Some(list) => Some(free_energy_lowt_fit(p, list, config.tol, config.grid_n)?),
                None => None,
            };
            let mut rows = vec![vec![num(t), num(f)]];
            if let Some(fit) = &fit {
                rows.extend(fit.points.iter().map(|pt| vec![num(pt.t), num(pt.f)]));
            }
            let value = json!({
                "params": p,
                "T": t,
                "f": f,
                "tail_bound": truncation_tail_bound(&sol),
                "fit": fit,
            });
            (
                value,
                Table {
                    header: vec!["T", "f"],
                    rows,
                },
            )
        }
        CommandKind::CheckBounds => {
            let t = config.t.expect("validated");
            let mut report = BoundsReport::compute(p, t)?;
            let sol = solve_yang_yang(p, t, config.tol)?;
            let temps: Vec<f64> = (0..T0_GRID_LEVELS).map(|k| t * 2f64.powi(-k)).collect();
            report.t0_checked = certify_t0(p, &temps, config.tol)?;
            let qhat = sol.qhat();
            if !(report.qhat_lower <= qhat && qhat <= report.qhat_upper) {
                violation = Some(format!(
                    "qhat = {qhat} outside [{}, {}]",
                    report.qhat_lower, report.qhat_upper
                ));
            }
            let mut value = to_value(&report);
            value["qhat"] = json!(qhat);
            let fields = [
                ("T", t),
                ("z_h", report.z_h),
                ("w", report.w),
                ("V_h", report.v_h),
                ("qhat_lower", report.qhat_lower),
                ("qhat", qhat),
                ("qhat_upper", report.qhat_upper),
                ("T0_checked", report.t0_checked.unwrap_or(f64::NAN)),
            ];
            let table = Table {
                header: fields.iter().map(|(k, _)| *k).collect(),
                rows: vec![fields.iter().map(|(_, v)| num(*v)).collect()],
            };
            (value, table)
        }
    };
    Ok(RunOutput {
        body: render(config.format, &value, table),
        violation,
    })
}

fn write_output(out: Option<&Path>, body: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, body)?,
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(body.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let outcome = RunConfig::from_cli(cli).and_then(|config| {
        let output = run(&config)?;
        write_output(config.out.as_deref(), &output.body)?;
        Ok(output)
    });
    match outcome {
        Ok(output) => {
            if let Some(v) = &output.violation {
                eprintln!("invariant violated: {v}");
            }
            output.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(args: &[&str]) -> Result<RunConfig, CliError> {
        let mut full = vec!["yangyang"];
        full.extend_from_slice(args);
        RunConfig::from_cli(Cli::try_parse_from(full).unwrap())
    }

    #[test]
    fn flags_and_defaults() {
        let cfg = config(&["solve", "--c", "1", "--h", "1", "--T", "0.1"]).unwrap();
        assert_eq!(cfg.tol, 1e-10);
        assert_eq!(cfg.grid_n, 128);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.format, Format::Json);
        let cfg = config(&[
            "--c",
            "inf",
            "--h",
            "2",
            "lowt-verify",
            "--t-list",
            "0.1,0.05,0.02,0.01",
        ])
        .unwrap();
        assert!(cfg.params.is_impenetrable());
        assert_eq!(cfg.t_list.unwrap().len(), 4);
    }

    #[test]
    fn missing_or_bad_values_are_config_errors() {
        for args in [
            &["solve", "--c", "1", "--h", "1"][..],
            &["lowt-verify", "--c", "1", "--h", "1"],
            &["det", "--c", "1"],
            &["solve", "--c", "-1", "--h", "1", "--T", "0.1"],
            &["solve", "--c", "1", "--h", "1", "--T", "0.1", "--tol", "0"],
            &["solve", "--h", "1", "--T", "0.1"],
        ] {
            let err = config(args).unwrap_err();
            assert_eq!(err.exit_code(), EXIT_CONFIG, "{args:?}");
        }
        assert_eq!(main_with_args(["yangyang", "solve", "--bogus"]), EXIT_CONFIG);
        assert_eq!(main_with_args(["yangyang", "--help"]), EXIT_OK);
    }

    #[test]
    fn config_file_keys() {
        let flags = parse_config_file("# sweep\nc = 2.5\nh=1\nT = 0.05\nt_list = 0.1, 0.05\nformat = csv\n").unwrap();
        assert_eq!(flags.c.as_deref(), Some("2.5"));
        assert_eq!(flags.t, Some(0.05));
        assert_eq!(flags.t_list, Some(vec![0.1, 0.05]));
        assert_eq!(flags.format, Some(Format::Csv));
        assert!(parse_config_file("speed = 3").is_err());
        assert!(parse_config_file("c 3").is_err());
        assert!(parse_config_file("h = abc").is_err());
    }

    #[test]
    fn error_codes() {
        assert_eq!(CliError::Solver(Error::IterationCap(3)).exit_code(), EXIT_SOLVER);
        assert_eq!(
            CliError::Solver(Error::BoundViolation("x".into())).exit_code(),
            EXIT_INVARIANT
        );
        let nested = Error::MonotonicityViolation { step: 1, excess: 1.0 }.at_temperature(0.1);
        assert_eq!(CliError::Solver(nested).exit_code(), EXIT_INVARIANT);
    }

    #[test]
    fn csv_and_json_carry_the_same_numbers() {
        let mut cfg = config(&["solve", "--c", "1", "--h", "1", "--T", "0.2"]).unwrap();
        let json_out = run(&cfg).unwrap().body;
        cfg.format = Format::Csv;
        let csv_out = run(&cfg).unwrap().body;
        let v: Value = serde_json::from_str(&json_out).unwrap();
        let grid = v["grid"].as_array().unwrap();
        let lines: Vec<&str> = csv_out.lines().skip(1).collect();
        assert_eq!(grid.len(), lines.len());
        for (g, line) in grid.iter().zip(lines) {
            let (l, e) = line.split_once(',').unwrap();
            assert_eq!(g["lambda"].as_f64().unwrap(), l.parse::<f64>().unwrap());
            assert_eq!(g["epsilon"].as_f64().unwrap(), e.parse::<f64>().unwrap());
        }
    }
}
