//! Command-line driver: reads a JSON config, writes CSV grid functions and
//! JSON summaries.
//!
//! Exit codes: 0 on success, 1 when a numerical method fails to converge,
//! 2 for configuration, parse and I/O errors.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::discretize::{CertMode, GridFunction};
use crate::eigen::{self, EigenEstimate, Which};
use crate::error::Error;
use crate::geometry::{DomainGeometry, Grid};
use crate::solve::{solve_neumann, SolveStatus};

pub use config::{LoadedConfig, ProblemConfig};

#[derive(Debug, Parser)]
#[command(name = "nleig", version, about = "Principal eigenvalues of fully nonlinear elliptic operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve F[u] = λu + g and write u as CSV.
    #[command(allow_negative_numbers = true)]
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute principal eigenvalues and eigenfunctions.
    Eigen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        which: WhichArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print constant-barrier bounds on the principal eigenvalue.
    Bounds {
        #[arg(long)]
        config: PathBuf,
    },
    /// Certify a CSV grid function as a discrete sub- or supersolution.
    #[command(allow_negative_numbers = true)]
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        function: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long)]
        lambda: f64,
    },
    /// Print the drift threshold for the radial non-uniqueness barrier.
    Beta2 {
        #[arg(long)]
        a: f64,
        #[arg(long = "A")]
        big_a: f64,
        #[arg(long)]
        dim: usize,
        #[arg(long = "R")]
        radius: f64,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        beta1: f64,
        #[arg(long)]
        k: f64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum WhichArg {
    Bar,
    Under,
    Both,
    Dirichlet,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Sub,
    Super,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Lib(#[from] Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Input(String),
    /// Output was produced but the method did not converge.
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Lib(Error::NonConvergence { .. } | Error::Singular(_)) | CliError::Numeric(_) => 1,
            _ => 2,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

fn load(path: &Path) -> CliResult<LoadedConfig> {
    Ok(LoadedConfig::parse(&read(path)?)?)
}

fn print(value: &Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("JSON values serialize"));
}

fn domain_json(domain: &DomainGeometry) -> Value {
    match *domain {
        DomainGeometry::Interval { x0, x1 } => json!({ "type": "interval", "x0": x0, "x1": x1 }),
        DomainGeometry::Rectangle { x0, x1, y0, y1 } => json!({ "type": "rectangle", "x0": x0, "x1": x1, "y0": y0, "y1": y1 }),
        DomainGeometry::RadialBall { radius, dim } => json!({ "type": "radial_ball", "radius": radius, "dim": dim }),
    }
}

fn grid_metadata(grid: &Grid) -> Value {
    json!({
        "domain": domain_json(grid.domain()),
        "n": grid.n(),
        "nodes": grid.len(),
        "spacing": &grid.spacing()[..grid.axes()],
    })
}

/// CSV with header `x,u` or `x,y,u`; values use the shortest round-trip form.
pub fn grid_function_csv(grid: &Grid, u: &GridFunction) -> String {
    let mut out = String::from(if grid.axes() == 2 { "x,y,u\n" } else { "x,u\n" });
    for (i, v) in u.iter().enumerate() {
        let p = grid.node(i);
        if grid.axes() == 2 {
            out.push_str(&format!("{},{},{}\n", p[0], p[1], v));
        } else {
            out.push_str(&format!("{},{}\n", p[0], v));
        }
    }
    out
}

/// Parses a CSV written by [`grid_function_csv`] and checks it matches `grid`.
pub fn parse_grid_function_csv(grid: &Grid, text: &str) -> std::result::Result<GridFunction, String> {
    let cols = grid.axes() + 1;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or("empty CSV")?;
    let expected = if cols == 3 { "x,y,u" } else { "x,u" };
    if header.replace(' ', "") != expected {
        return Err(format!("CSV header must be `{expected}`, found `{header}`"));
    }
    let mut values = Vec::with_capacity(grid.len());
    for (row, line) in lines.enumerate() {
        let nums = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| format!("CSV row {}: {e}", row + 1))?;
        if nums.len() != cols {
            return Err(format!("CSV row {} has {} columns, expected {cols}", row + 1, nums.len()));
        }
        if row >= grid.len() {
            return Err(format!("CSV has more rows than the {} grid nodes", grid.len()));
        }
        let p = grid.node(row);
        if (0..cols - 1).any(|k| (nums[k] - p[k]).abs() > 1e-9 * (1.0 + p[k].abs())) {
            return Err(format!("CSV row {} coordinates do not match the configured grid", row + 1));
        }
        values.push(nums[cols - 1]);
    }
    if values.len() != grid.len() {
        return Err(format!("CSV has {} rows, grid has {} nodes", values.len(), grid.len()));
    }
    GridFunction::try_new(values).map_err(|e| e.to_string())
}

fn estimate_json(e: &EigenEstimate) -> Value {
    json!({
        "lambda": e.lambda,
        "bracket": [e.bracket.0, e.bracket.1],
        "residual": e.residual,
        "probes": e.probes,
        "indeterminate": e.indeterminate,
        "wall_time": e.wall_time,
    })
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "eigen".into());
    out.with_file_name(format!("{stem}_{suffix}.csv"))
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Solve { config, lambda, out } => {
            let loaded = load(&config)?;
            let problem = loaded.config.problem(lambda)?;
            let report = solve_neumann(&problem, &loaded.config.solver)?;
            write(&out, &grid_function_csv(problem.grid(), &report.solution))?;
            print(&json!({
                "status": report.status,
                "residual": report.final_residual,
                "iterations": report.outer_iterations,
                "config_hash": loaded.hash,
                "grid": grid_metadata(problem.grid()),
            }));
            if report.status != SolveStatus::Converged {
                return Err(CliError::Numeric(format!("solve ended with status {:?}", report.status)));
            }
            Ok(())
        }
        Command::Eigen { config, which, out } => {
            let loaded = load(&config)?;
            let c = &loaded.config;
            let problem = c.problem(0.0)?;
            let grid = problem.grid();
            let mut doc = serde_json::Map::new();
            let mut csv = serde_json::Map::new();
            let mut emit = |key: &str, tag: &str, est: EigenEstimate| -> CliResult<()> {
                let path = sibling(&out, tag);
                write(&path, &grid_function_csv(grid, &est.eigenfunction))?;
                doc.insert(key.into(), estimate_json(&est));
                csv.insert(tag.into(), json!(path.to_string_lossy()));
                Ok(())
            };
            match which {
                WhichArg::Dirichlet => emit("lambda_dirichlet", "dirichlet", eigen::dirichlet_eigenvalue(&problem, &c.eigen, &c.solver)?)?,
                WhichArg::Bar => emit("lambda_bar", "bar", eigen::principal_eigenfunction(&problem, Which::Bar, &c.eigen, &c.solver)?)?,
                WhichArg::Under => emit("lambda_under", "under", eigen::principal_eigenfunction(&problem, Which::Under, &c.eigen, &c.solver)?)?,
                WhichArg::Both => {
                    let (bar, under) = eigen::principal_eigenvalues(&problem, &c.eigen, &c.solver)?;
                    emit("lambda_bar", "bar", bar)?;
                    emit("lambda_under", "under", under)?;
                }
            }
            doc.insert("eigenfunction_csv".into(), Value::Object(csv));
            doc.insert("config_hash".into(), json!(loaded.hash));
            doc.insert("grid".into(), grid_metadata(grid));
            let text = serde_json::to_string_pretty(&Value::Object(doc)).expect("JSON values serialize");
            write(&out, &(text + "\n"))
        }
        Command::Bounds { config } => {
            let loaded = load(&config)?;
            let problem = loaded.config.problem(0.0)?;
            let (lo, hi) = eigen::constant_bounds(&problem)?;
            print(&json!({ "lo": lo, "hi": hi, "config_hash": loaded.hash, "grid": grid_metadata(problem.grid()) }));
            Ok(())
        }
        Command::Verify { config, function, mode, lambda } => {
            let loaded = load(&config)?;
            let problem = loaded.config.problem(lambda)?;
            let u = parse_grid_function_csv(problem.grid(), &read(&function)?)
                .map_err(|e| CliError::Input(format!("{}: {e}", function.display())))?;
            let mode = match mode {
                ModeArg::Sub => CertMode::Sub,
                ModeArg::Super => CertMode::Super,
            };
            let cert = problem.certify_solution_class(&u, mode, loaded.config.solver.outer_tol);
            print(&json!({
                "certified": cert.certified,
                "worst_node": cert.worst_node,
                "margin": cert.margin,
                "violations": cert.violations.len(),
                "config_hash": loaded.hash,
                "grid": grid_metadata(problem.grid()),
            }));
            Ok(())
        }
        Command::Beta2 { a, big_a, dim, radius, rho, beta1, k } => {
            println!("{}", eigen::beta2_threshold(a, big_a, dim, radius, rho, beta1, k)?);
            Ok(())
        }
    }
}
