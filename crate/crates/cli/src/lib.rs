//! Batch front-end for the plate solver: the `plate` command.
//!
//! ```text
//! plate solve --builtin point --strategy uniform --max-dofs 3000 --out results
//! plate solve --config plate.json
//! plate oracle --case point-max --terms 100
//! plate reproduce --out results
//! plate export-vtk --builtin lshape_ss --max-dofs 2000 --out results
//! ```
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::builder::PossibleValuesParser;
use clap::{Args, Parser, Subcommand, ValueEnum};
use plate_core::adapt::{
    energy_rate, rate_summary, run_study_with, ConvergenceRecord, StudyConfig, StudyError, DEFAULT_WINDOW,
};
use plate_core::builtin::{BuiltinCase, HALF_WIDTH};
use plate_core::model::PlateProblem;
use plate_core::oracle::{
    max_deflection_point_load, navier_deflection, NavierCase, NavierLoad, DEFAULT_MAX_TERMS, DEFAULT_TERMS,
};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig, SampleGrid, StrategyName, StudySection, DEFAULT_MAX_DOFS, DEFAULT_THETA};
use crate::output::{records_csv, samples_csv, summary_csv, vtk, SummaryRow};

/// Largest uniform mesh solved by `reproduce` unless `--max-dofs` is given.
pub const REPRODUCE_UNIFORM_MAX_DOFS: usize = 40_000;
/// Largest adaptive mesh solved by `reproduce` unless `--max-dofs` is given.
pub const REPRODUCE_ADAPTIVE_MAX_DOFS: usize = 3_000;

#[derive(Debug, Parser)]
#[command(
    name = "plate",
    version,
    about = "Adaptive Argyris finite elements for Kirchhoff plates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a convergence study; writes a CSV and one VTK file per mesh.
    Solve(StudyArgs),
    /// Evaluate a Navier series reference value on the unit square.
    Oracle(OracleArgs),
    /// Run every built-in study, uniform and adaptive, and summarize rates.
    Reproduce(ReproduceArgs),
    /// Run a study and write the VTK file of the final mesh only.
    ExportVtk(StudyArgs),
}

#[derive(Debug, Args)]
struct StudyArgs {
    /// JSON problem description.
    #[arg(
        long,
        value_name = "PATH",
        conflicts_with = "builtin",
        required_unless_present = "builtin"
    )]
    config: Option<PathBuf>,
    /// Built-in benchmark problem.
    #[arg(long, value_name = "NAME", value_parser = PossibleValuesParser::new(BuiltinCase::ALL.map(|c| c.name())))]
    builtin: Option<String>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// Marking threshold (default 0.5).
    #[arg(long, value_name = "X")]
    theta: Option<f64>,
    /// Meshes with more degrees of freedom are not solved (default 3000).
    #[arg(long, value_name = "N")]
    max_dofs: Option<usize>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrategyArg {
    Uniform,
    Adaptive,
}

impl From<StrategyArg> for StrategyName {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Uniform => StrategyName::Uniform,
            StrategyArg::Adaptive => StrategyName::Adaptive,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OracleCase {
    /// Deflection under the unit centre point load.
    Point,
    /// Centre deflection under the point load, from the fast single series.
    PointMax,
    /// Deflection under the unit line load on x = 1/2, |y - 1/2| <= 1/3.
    Line,
    /// Deflection under the unit patch load on [1/6, 5/6]^2.
    Square,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long, value_enum)]
    case: OracleCase,
    #[arg(long, default_value_t = 0.5)]
    x: f64,
    #[arg(long, default_value_t = 0.5)]
    y: f64,
    /// Series terms per direction (default 100 for point-max, 2000 otherwise).
    #[arg(long, value_name = "M")]
    terms: Option<usize>,
}

#[derive(Debug, Args)]
struct ReproduceArgs {
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "reproduce")]
    out: PathBuf,
    #[arg(long, value_name = "X", default_value_t = DEFAULT_THETA)]
    theta: f64,
    /// Cap for every study (defaults: 40000 uniform, 3000 adaptive).
    #[arg(long, value_name = "N")]
    max_dofs: Option<usize>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

/// Parses the arguments, runs the command and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    1
                }
            };
        }
    };
    let result = configure_threads().and_then(|_| match cli.command {
        Command::Solve(a) => cmd_solve(&a, out, false),
        Command::ExportVtk(a) => cmd_solve(&a, out, true),
        Command::Oracle(a) => cmd_oracle(&a, out),
        Command::Reproduce(a) => cmd_reproduce(&a, out),
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

/// Honours `PLATE_THREADS` by sizing the global worker pool.
fn configure_threads() -> Result<(), CliError> {
    let Some(raw) = std::env::var_os("PLATE_THREADS") else {
        return Ok(());
    };
    let n = raw
        .to_str()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("PLATE_THREADS must be a positive integer, got {raw:?}")))?;
    // Fails only if the pool is already running, e.g. a second call in the
    // same process; the first size then stays in effect.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

struct Job {
    problem: PlateProblem,
    study: StudyConfig,
    stem: String,
    csv: PathBuf,
    vtk_dir: PathBuf,
    samples: Option<SampleGrid>,
}

fn resolve_job(a: &StudyArgs) -> Result<Job, CliError> {
    let override_study = |mut s: StudySection| {
        if let Some(st) = a.strategy {
            s.strategy = st.into();
        }
        if let Some(t) = a.theta {
            s.theta = t;
        }
        if let Some(m) = a.max_dofs {
            s.max_dofs = m;
        }
        s
    };
    let strategy_name = |s: &StudyConfig| s.strategy.name();
    if let Some(name) = &a.builtin {
        let case = BuiltinCase::from_name(name).ok_or_else(|| CliError::Usage(format!("unknown built-in `{name}`")))?;
        let section = override_study(StudySection {
            max_dofs: DEFAULT_MAX_DOFS,
            ..StudySection::default()
        });
        let study = section.validate()?;
        let stem = format!("{}_{}", case.name(), strategy_name(&study));
        let dir = a.out.clone().unwrap_or_else(|| PathBuf::from("."));
        return Ok(Job {
            problem: case.problem(),
            study,
            csv: dir.join(format!("{stem}.csv")),
            vtk_dir: dir,
            stem,
            samples: None,
        });
    }
    let path = a
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("either --config or --builtin is required".into()))?;
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut cfg = RunConfig::parse(&text)?;
    cfg.study = override_study(cfg.study);
    let (problem, study) = cfg.validate()?;
    let stem = cfg
        .name
        .clone()
        .or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "plate".into());
    let (csv, vtk_dir) = match &a.out {
        Some(dir) => (dir.join(format!("{stem}.csv")), dir.clone()),
        None => {
            let csv = cfg
                .output
                .csv
                .clone()
                .unwrap_or_else(|| PathBuf::from(format!("{stem}.csv")));
            let vtk_dir = cfg
                .output
                .vtk_dir
                .clone()
                .unwrap_or_else(|| csv.parent().map(Path::to_path_buf).unwrap_or_default());
            (csv, vtk_dir)
        }
    };
    Ok(Job {
        problem,
        study,
        stem,
        csv,
        vtk_dir,
        samples: cfg.output.samples,
    })
}

fn print_records(out: &mut dyn Write, records: &[ConvergenceRecord]) -> io::Result<()> {
    writeln!(out, "{:>8} {:>8} {:>14} {:>14}", "ndofs", "nelems", "eta", "energynorm")?;
    for r in records {
        let e = r
            .energy
            .map(|e| format!("{e:14.6e}"))
            .unwrap_or_else(|| format!("{:>14}", "-"));
        writeln!(out, "{:>8} {:>8} {:>14.6e} {e}", r.ndofs, r.nelems, r.eta)?;
    }
    Ok(())
}

fn study_failure(e: &StudyError) -> CliError {
    CliError::Numerical(e.to_string())
}

fn cmd_solve(a: &StudyArgs, out: &mut dyn Write, final_only: bool) -> Result<(), CliError> {
    let job = resolve_job(a)?;
    let mut write_error = None;
    let mut last_vtk = None;
    let mut last_samples = None;
    let result = run_study_with(&job.problem, &job.study, |step| {
        let title = format!("{} step {} ndofs {}", job.stem, step.record.step, step.record.ndofs);
        let text = vtk(
            &step.problem.mesh,
            &step.report.eta_k,
            &step.solution.vertex_deflections(),
            &title,
        );
        if let Some(g) = job.samples {
            last_samples = Some(samples_csv(step.solution, g.nx, g.ny));
        }
        if final_only {
            last_vtk = Some(text);
        } else if write_error.is_none() {
            let path = job
                .vtk_dir
                .join(format!("{}_step{:03}.vtk", job.stem, step.record.step));
            write_error = write_file(&path, &text).err();
        }
    });
    if let Some(e) = write_error {
        return Err(e);
    }
    let (records, failure) = match result {
        Ok(r) => (r, None),
        Err(e) => {
            let f = study_failure(&e);
            (e.partial, Some(f))
        }
    };
    if final_only {
        if let Some(text) = last_vtk {
            let path = job.vtk_dir.join(format!("{}.vtk", job.stem));
            write_file(&path, &text)?;
        }
    } else {
        write_file(&job.csv, &records_csv(&records))?;
    }
    if let Some(text) = last_samples {
        let path = job.csv.with_file_name(format!("{}_samples.csv", job.stem));
        write_file(&path, &text)?;
    }
    print_records(out, &records).map_err(io_err(Path::new("<stdout>")))?;
    failure.map_or(Ok(()), Err)
}

fn cmd_oracle(a: &OracleArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let material = BuiltinCase::material();
    let numerical = |e: plate_core::oracle::OracleError| CliError::Numerical(e.to_string());
    let value = match a.case {
        OracleCase::PointMax => {
            max_deflection_point_load(1.0, &material, a.terms.unwrap_or(DEFAULT_MAX_TERMS)).map_err(numerical)?
        }
        case => {
            let load = match case {
                OracleCase::Point => NavierLoad::Point { f0: 1.0 },
                OracleCase::Line => NavierLoad::Line { d: HALF_WIDTH, g0: 1.0 },
                _ => NavierLoad::Square {
                    c: HALF_WIDTH,
                    d: HALF_WIDTH,
                    f0: 1.0,
                },
            };
            let nc = NavierCase::new(load, material).map_err(|e| CliError::Usage(e.to_string()))?;
            navier_deflection(&nc, a.x, a.y, a.terms.unwrap_or(DEFAULT_TERMS))
                .map_err(|e| CliError::Usage(e.to_string()))?
        }
    };
    let w = |out: &mut dyn Write| -> io::Result<()> {
        writeln!(out, "value {}", value.value)?;
        writeln!(out, "tail_bound {:e}", value.tail_bound)?;
        writeln!(out, "terms {}", value.terms)
    };
    w(out).map_err(io_err(Path::new("<stdout>")))
}

fn cmd_reproduce(a: &ReproduceArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let section = |strategy, max_dofs| {
        StudySection {
            strategy,
            theta: a.theta,
            max_dofs,
            max_steps: None,
        }
        .validate()
    };
    let uniform = section(StrategyName::Uniform, a.max_dofs.unwrap_or(REPRODUCE_UNIFORM_MAX_DOFS))?;
    let adaptive = section(
        StrategyName::Adaptive,
        a.max_dofs.unwrap_or(REPRODUCE_ADAPTIVE_MAX_DOFS),
    )?;
    let mut rows = Vec::new();
    for case in BuiltinCase::ALL {
        for study in [uniform, adaptive] {
            let problem = case.problem();
            let result = run_study_with(&problem, &study, |_| {});
            let stem = format!("{}_{}", case.name(), study.strategy.name());
            let (records, failure) = match result {
                Ok(r) => (r, None),
                Err(e) => {
                    let f = study_failure(&e);
                    (e.partial, Some(f))
                }
            };
            write_file(&a.out.join(format!("{stem}.csv")), &records_csv(&records))?;
            if let Some(f) = failure {
                write_file(&a.out.join("summary.csv"), &summary_csv(&rows))?;
                return Err(f);
            }
            let last = records.last().expect("a study always has its initial record");
            rows.push(SummaryRow {
                case: case.name().to_string(),
                strategy: study.strategy.name().to_string(),
                steps: records.len(),
                final_ndofs: last.ndofs,
                final_eta: last.eta,
                slope: rate_summary(&records).ok(),
                energy_slope: energy_rate(&records, DEFAULT_WINDOW).ok(),
            });
            let r = rows.last().unwrap();
            let slope = r
                .slope
                .map(|s| format!("{:.3}", s.window))
                .unwrap_or_else(|| "-".into());
            writeln!(
                out,
                "{:<12} {:<9} steps {:>3}  N {:>6}  eta {:.4e}  slope {slope}",
                r.case, r.strategy, r.steps, r.final_ndofs, r.final_eta
            )
            .map_err(io_err(Path::new("<stdout>")))?;
        }
    }
    write_file(&a.out.join("summary.csv"), &summary_csv(&rows))
}
