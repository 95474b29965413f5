//! Command-line front end. `run` returns the process exit code: 0 on success,
//! 1 on a numerical failure or a failed check, 2 on a usage error.

pub mod config;
pub mod verify;

pub use config::{Command, RunConfig, OUTPUT_DIR_ENV};

use crate::error::Error;
use crate::fixpoint_solver::{solve, sweep, SolveRecord};
use crate::reconstruct::{config_hash, export_profile, ExportFormat};
use crate::shooting_oracle::ShootConfig;
use clap::Parser;
use serde::Serialize;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

/// A numerical or I/O failure tagged with the module it came from.
#[derive(Debug)]
pub struct Failure {
    pub module: &'static str,
    pub error: Error,
}

impl Failure {
    pub fn tag(module: &'static str) -> impl Fn(Error) -> Failure {
        move |error| Failure { module, error }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {}", self.module, self.error)
    }
}

fn parse_format(s: &str) -> Result<ExportFormat, String> {
    match s {
        "csv" => Ok(ExportFormat::Csv),
        "json" => Ok(ExportFormat::Json),
        _ => Err(format!("unknown format {s:?} (csv or json)")),
    }
}

/// Flags override the config file, which overrides the defaults.
#[derive(Debug, Parser)]
#[command(name = "pnls", version, about = "Self-similar blowup profiles of the 3D focusing p-NLS")]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    /// JSON config file with the flat keys of the effective config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub p_min: Option<f64>,
    #[arg(long)]
    pub p_max: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub pstar_degree: Option<usize>,
    #[arg(long)]
    pub left_degree: Option<usize>,
    #[arg(long)]
    pub right_p_degree: Option<usize>,
    #[arg(long)]
    pub right_q_degree: Option<usize>,
    #[arg(long)]
    pub fixed_point_tol: Option<f64>,
    #[arg(long)]
    pub bisection_tol: Option<f64>,
    #[arg(long)]
    pub quadrature_tol: Option<f64>,
    #[arg(long)]
    pub ode_rtol: Option<f64>,
    #[arg(long)]
    pub bracket_cap: Option<f64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub export_path: Option<PathBuf>,
    #[arg(long, value_parser = parse_format)]
    pub format: Option<ExportFormat>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Args {
    /// Effective configuration; `env_dir` is the value of the output-directory variable.
    pub fn resolve(&self, env_dir: Option<PathBuf>) -> Result<RunConfig, String> {
        let mut c = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        c.command = self.command;
        macro_rules! over {
            ($($f:ident),*) => { $( if let Some(v) = self.$f.clone() { c.$f = v; } )* };
        }
        over!(p, p_min, p_max, steps, pstar_degree, left_degree, right_p_degree, right_q_degree);
        over!(fixed_point_tol, bisection_tol, quadrature_tol, ode_rtol, bracket_cap, format, threads, seed);
        if let Some(dir) = env_dir {
            c.output_dir = dir;
        }
        if let Some(dir) = &self.output_dir {
            c.output_dir = dir.clone();
        }
        if self.export_path.is_some() {
            c.export_path = self.export_path.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Serialize)]
struct Output<'a, T: Serialize> {
    timestamp_unix: u64,
    config: &'a RunConfig,
    result: T,
}

fn timestamp() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn write_json<T: Serialize>(path: &Path, cfg: &RunConfig, result: T) -> Result<(), Failure> {
    let io = Failure::tag("cli");
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io(e.into()))?;
    }
    let doc = Output { timestamp_unix: timestamp(), config: cfg, result };
    let text = serde_json::to_string_pretty(&doc).map_err(|e| io(e.into()))?;
    std::fs::write(path, text).map_err(|e| io(e.into()))
}

/// File-name label of a power, e.g. `p3.000000`.
pub fn p_label(p: f64) -> String {
    format!("p{p:.6}")
}

fn summary(rec: &SolveRecord) -> String {
    format!(
        "p = {:.6}  alpha_p = {:.15}  a_p = {:.6e}  residual_y = {:.3e}  |f_p|_X = {:.3e}  iterations = {}  contraction = {:.3e}",
        rec.p, rec.alpha_p, rec.a_p, rec.residual_y, rec.norm_x_fp, rec.iterations, rec.contraction_estimate
    )
}

/// Column header of the sweep index.
pub const INDEX_HEADER: &str = "p,status,alpha_p,a_p,residual_y,norm_x_fp,iterations,file";

fn run_sweep(cfg: &RunConfig, out: &mut dyn Write) -> Result<bool, Failure> {
    let entries = sweep(&cfg.grid(), &cfg.solve_options(), cfg.threads > 1).map_err(Failure::tag("fixpoint_solver"))?;
    let dir = cfg.output_dir.join("sweep");
    let io = Failure::tag("cli");
    std::fs::create_dir_all(&dir).map_err(|e| io(e.into()))?;
    let mut index = format!("{INDEX_HEADER}\n");
    let mut ok = true;
    for e in &entries {
        let name = format!("{}.json", p_label(e.p));
        write_json(&dir.join(&name), cfg, &e.record)?;
        match &e.record {
            Ok(r) => {
                index += &format!("{:.16e},ok,{:.16e},{:.16e},{:.6e},{:.6e},{},{name}\n", r.p, r.alpha_p, r.a_p, r.residual_y, r.norm_x_fp, r.iterations);
                let _ = writeln!(out, "{}", summary(r));
            }
            Err(msg) => {
                ok = false;
                index += &format!("{:.16e},failed,,,,,,{name}\n", e.p);
                let _ = writeln!(out, "p = {:.6}  FAILED [fixpoint_solver] {msg}", e.p);
            }
        }
    }
    std::fs::write(dir.join("index.csv"), index).map_err(|e| io(e.into()))?;
    let _ = writeln!(out, "wrote {} records and index.csv to {}", entries.len(), dir.display());
    Ok(ok)
}

fn execute(cfg: &RunConfig, out: &mut dyn Write) -> Result<bool, Failure> {
    let label = p_label(cfg.p);
    let solve_at = || solve(cfg.p, None, &cfg.solve_options()).map_err(Failure::tag("fixpoint_solver"));
    match cfg.command {
        Command::Solve => {
            let rec = solve_at()?;
            let _ = writeln!(out, "{}", summary(&rec));
            let path = cfg.output_dir.join(format!("solve_{label}.json"));
            write_json(&path, cfg, &rec)?;
            let _ = writeln!(out, "wrote {}", path.display());
            Ok(true)
        }
        Command::Sweep => run_sweep(cfg, out),
        Command::Oracle => {
            let rec = solve_at()?;
            let mut sc = ShootConfig::default();
            sc.ode.rtol = cfg.ode_rtol;
            let rep = verify::oracle(&rec, &sc)?;
            let _ = writeln!(out, "alpha spectral = {:.15}  alpha shooting = {:.15}", rep.alpha_spectral, rep.alpha_shoot);
            let checks = verify::oracle_checks(&rep);
            for c in &checks {
                let _ = writeln!(out, "{c}");
            }
            write_json(&cfg.output_dir.join(format!("oracle_{label}.json")), cfg, &rep)?;
            Ok(checks.iter().all(|c| c.pass))
        }
        Command::Verify => {
            let rep = verify::verify(cfg)?;
            let _ = writeln!(out, "{}", summary(&rep.record));
            for c in &rep.checks {
                let _ = writeln!(out, "{c}");
            }
            write_json(&cfg.output_dir.join(format!("verify_{label}.json")), cfg, &rep)?;
            Ok(rep.passed())
        }
        Command::Export => {
            let rec = solve_at()?;
            let ext = match cfg.format {
                ExportFormat::Csv => "csv",
                ExportFormat::Json => "json",
            };
            let path = cfg.export_path.clone().unwrap_or_else(|| cfg.output_dir.join(format!("profile_{label}.{ext}")));
            let io = Failure::tag("reconstruct");
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| io(e.into()))?;
            }
            let value = serde_json::to_value(cfg).map_err(|e| io(e.into()))?;
            let files = export_profile(&rec, cfg.format, &path, &value).map_err(&io)?;
            let _ = writeln!(out, "config hash {}", config_hash(&value));
            for f in files {
                let _ = writeln!(out, "wrote {}", f.display());
            }
            Ok(true)
        }
    }
}

/// Runs the CLI on `argv` (including the program name), writing to `out` and `err`.
pub fn run_with<I, T>(argv: I, env_dir: Option<PathBuf>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if e.use_stderr() { write!(err, "{}", e.render()) } else { write!(out, "{}", e.render()) };
            return code;
        }
    };
    let cfg = match args.resolve(env_dir) {
        Ok(c) => c,
        Err(msg) => {
            let _ = writeln!(err, "usage error: {msg}");
            return 2;
        }
    };
    let _ = writeln!(out, "effective config: {}", serde_json::to_string(&cfg).unwrap_or_default());
    match execute(&cfg, out) {
        Ok(true) => 0,
        Ok(false) => {
            let _ = writeln!(err, "one or more checks failed");
            1
        }
        Err(f) => {
            let _ = writeln!(err, "error {f}");
            1
        }
    }
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let env_dir = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from);
    run_with(argv, env_dir, &mut std::io::stdout(), &mut std::io::stderr())
}
