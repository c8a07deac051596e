use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use afem_core::driver::{loglog_slope, to_csv};
use afem_core::{run_observed, AfemConfig, AfemError, ConvergenceRecord, Mode, Problem, SolveMethod};
use clap::{Parser, ValueEnum};
use serde::Serialize;

mod source;

/// Adaptive spline finite elements for the clamped plate problem on the unit square.
#[derive(Debug, Parser)]
#[command(name = "afem", version)]
struct Args {
    /// Right-hand side and (when known) exact solution.
    #[arg(long, value_enum, default_value_t = ProblemArg::Sin2)]
    problem: ProblemArg,
    /// JSON polynomial source for `--problem custom-file`.
    #[arg(long, value_name = "FILE")]
    source_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModeArg::Conforming)]
    mode: ModeArg,
    #[arg(long, default_value_t = 2)]
    degree: usize,
    /// Dörfler bulk parameter in (0, 1].
    #[arg(long)]
    theta: Option<f64>,
    /// Nitsche stabilization for the value trace. Default 10(r+1)^4.
    #[arg(long)]
    gamma1: Option<f64>,
    /// Nitsche stabilization for the normal-derivative trace. Default 10(r+1)^4.
    #[arg(long)]
    gamma2: Option<f64>,
    /// Uniform levels of the initial mesh.
    #[arg(long)]
    initial_levels: Option<u32>,
    #[arg(long)]
    max_dofs: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Gauss points per direction for assembly and estimation. Default r+2.
    #[arg(long)]
    quad_n: Option<usize>,
    #[arg(long, value_enum, default_value_t = SolverArg::Direct)]
    solver: SolverArg,
    /// Write `mesh_NNN.txt` for every iteration.
    #[arg(long)]
    dump_mesh: bool,
    /// Write `indicators_NNN.txt` for every iteration.
    #[arg(long)]
    dump_indicators: bool,
    /// Write the final discrete solution to `solution.txt`.
    #[arg(long)]
    save_solution: bool,
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR", default_value = "afem-out")]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ProblemArg {
    Sin2,
    Zero,
    CustomFile,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Conforming,
    Nitsche,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SolverArg {
    Direct,
    Cg,
}

/// Echo of a run, written next to its results.
#[derive(Serialize)]
struct RunManifest<'a> {
    problem: &'a str,
    config: &'a AfemConfig,
    build: String,
    outputs: Vec<String>,
    iterations: usize,
    final_dofs: usize,
    /// Slope of `log e` against `log N` over the last iterations.
    error_slope: Option<f64>,
    /// Slope of `log η` against `log N` over the last iterations.
    estimator_slope: Option<f64>,
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<AfemError> for Failure {
    fn from(e: AfemError) -> Self {
        match &e {
            AfemError::InvalidConfig(_)
            | AfemError::EmptyConformingSpace { .. }
            | AfemError::NotPositiveDefinite { .. } => Failure::Config(with_flag(&e)),
            _ => Failure::Run(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

/// Appends the command-line flag that controls the offending setting.
fn with_flag(e: &AfemError) -> String {
    let msg = e.to_string();
    let flag = match e {
        AfemError::EmptyConformingSpace { .. } => Some("--initial-levels"),
        AfemError::NotPositiveDefinite { .. } => Some("--gamma1/--gamma2"),
        _ => [
            ("theta", "--theta"),
            ("degree", "--degree"),
            ("gamma", "--gamma1/--gamma2"),
            ("initial_levels", "--initial-levels"),
            ("max_dofs", "--max-dofs"),
            ("max_iters", "--max-iters"),
            ("quad_n", "--quad-n"),
        ]
        .into_iter()
        .find(|(key, _)| msg.contains(key))
        .map(|(_, flag)| flag),
    };
    match flag {
        Some(f) => format!("{msg} (see {f})"),
        None => msg,
    }
}

fn config(args: &Args) -> AfemConfig {
    let mode = match args.mode {
        ModeArg::Conforming => Mode::Conforming,
        ModeArg::Nitsche => Mode::Nitsche,
    };
    let mut cfg = AfemConfig::new(mode, args.degree);
    cfg.theta = args.theta.unwrap_or(cfg.theta);
    cfg.gamma1 = args.gamma1.unwrap_or(cfg.gamma1);
    cfg.gamma2 = args.gamma2.unwrap_or(cfg.gamma2);
    cfg.initial_levels = args.initial_levels.unwrap_or(cfg.initial_levels);
    cfg.max_dofs = args.max_dofs.unwrap_or(cfg.max_dofs);
    cfg.max_iters = args.max_iters.unwrap_or(cfg.max_iters);
    cfg.quad_n = args.quad_n.unwrap_or(cfg.quad_n);
    cfg.solver.method = match args.solver {
        SolverArg::Direct => SolveMethod::Direct,
        SolverArg::Cg => SolveMethod::ConjugateGradient,
    };
    cfg
}

fn problem(args: &Args) -> Result<Problem, Failure> {
    match (args.problem, &args.source_file) {
        (ProblemArg::Sin2, None) => Ok(Problem::sin2()),
        (ProblemArg::Zero, None) => Ok(Problem::zero()),
        (ProblemArg::CustomFile, Some(path)) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read --source-file {}: {e}", path.display())))?;
            source::parse(&text).map_err(|e| Failure::Config(format!("--source-file {}: {e}", path.display())))
        }
        (ProblemArg::CustomFile, None) => Err(Failure::Config(
            "--problem custom-file needs --source-file".into(),
        )),
        (_, Some(_)) => Err(Failure::Config(
            "--source-file is only used with --problem custom-file".into(),
        )),
    }
}

/// Writes through a temporary file and a rename, so readers never see a
/// partial file.
fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

fn tail_slope(records: &[ConvergenceRecord], y: impl Fn(&ConvergenceRecord) -> Option<f64>) -> Option<f64> {
    let tail = &records[records.len().saturating_sub(5)..];
    let pts: Vec<(f64, f64)> = tail
        .iter()
        .filter_map(|r| y(r).filter(|v| *v > 0.0).map(|v| (r.n_dofs as f64, v)))
        .collect();
    if pts.len() < 2 || pts.iter().all(|p| p.0 == pts[0].0) {
        return None;
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    Some(loglog_slope(&x, &y))
}

fn execute(args: &Args) -> Result<(), Failure> {
    let cfg = config(args);
    cfg.validate()?;
    let prob = problem(args)?;
    fs::create_dir_all(&args.out)?;

    let mut outputs = vec!["convergence.csv".to_string()];
    let mut io_error = None;
    let mut last = None;
    let records = run_observed(&cfg, &prob, |s| {
        let mut dump = |name: String, text: String| {
            if io_error.is_none() {
                match write_atomic(&args.out.join(&name), &text) {
                    Ok(()) => outputs.push(name),
                    Err(e) => io_error = Some(e),
                }
            }
        };
        if args.dump_mesh {
            dump(format!("mesh_{:03}.txt", s.iter), s.space.partition().dump());
        }
        if args.dump_indicators {
            dump(format!("indicators_{:03}.txt", s.iter), s.indicators.dump());
        }
        if args.save_solution {
            last = Some(s.solution.clone());
        }
    })?;
    if let Some(e) = io_error {
        return Err(e.into());
    }
    if let Some(u) = last {
        write_atomic(&args.out.join("solution.txt"), &u.to_text())?;
        outputs.push("solution.txt".into());
    }
    write_atomic(&args.out.join("convergence.csv"), &to_csv(&records))?;

    let manifest = RunManifest {
        problem: &prob.name,
        config: &cfg,
        build: format!(
            "afem {} ({})",
            env!("CARGO_PKG_VERSION"),
            option_env!("AFEM_BUILD_ID").unwrap_or("local")
        ),
        outputs,
        iterations: records.len(),
        final_dofs: records.last().map_or(0, |r| r.n_dofs),
        error_slope: tail_slope(&records, |r| r.energy_error),
        estimator_slope: tail_slope(&records, |r| Some(r.eta)),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Run(e.to_string()))?;
    write_atomic(&args.out.join("manifest.json"), &(json + "\n"))?;

    if let Some(r) = records.last() {
        println!(
            "{} iterations, {} cells, {} dofs, eta {:.3e}; wrote {}",
            records.len(),
            r.n_cells,
            r.n_dofs,
            r.eta,
            args.out.display()
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("afem: configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("afem: {msg}");
            ExitCode::FAILURE
        }
    }
}
