//! Command-line front end: instance files in, JSON result documents out.
//!
//! Exit codes: 0 scaled (or a passing check), 1 I/O, parse or numeric
//! failure, 2 failed verification, 3 infeasible with a certificate.

pub mod document;
pub mod exact;
pub mod gen;
pub mod io;
pub mod verify;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use framescale::{run, run_matrix, Frame, Marginals, MatrixMarginals, NonnegMatrix, ScaleError, ScalingResult, SolverConfig, Status};
use thiserror::Error;

use document::{ConfigEcho, DocStatus, Problem, ResultDocument};

pub const EXIT_SCALED: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_VERIFY_FAILED: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Solver(#[from] ScaleError),
    #[error("{0}")]
    Usage(String),
}

#[derive(Debug, Parser)]
#[command(name = "framescale", version, about = "Frame and matrix scaling with infeasibility certificates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scale the columns of a frame to prescribed leverage scores.
    Frame(FrameArgs),
    /// Scale a nonnegative matrix to prescribed row and column sums.
    Matrix(MatrixArgs),
    /// Write a seeded random instance.
    Gen(GenArgs),
    /// Re-check a result document against its instance.
    Verify(VerifyArgs),
    /// Scale a Gaussian frame and run the parallel perceptron on it.
    Perceptron(PerceptronArgs),
}

#[derive(Debug, Args)]
pub struct SolveOptions {
    #[arg(long)]
    pub eps: f64,
    /// Write the result document here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write per-iteration records as JSON lines.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub no_regularize: bool,
}

#[derive(Debug, Args)]
pub struct FrameArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub marginals: PathBuf,
    #[command(flatten)]
    pub solve: SolveOptions,
}

#[derive(Debug, Args)]
pub struct MatrixArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub rows: PathBuf,
    #[arg(long)]
    pub cols: PathBuf,
    #[command(flatten)]
    pub solve: SolveOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenKind {
    Gaussian,
    Infeasible,
    Bipartite,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    pub kind: GenKind,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for the instance files.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub result: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Frame marginals.
    #[arg(long, conflicts_with_all = ["rows", "cols"])]
    pub marginals: Option<PathBuf>,
    #[arg(long, requires = "cols")]
    pub rows: Option<PathBuf>,
    #[arg(long, requires = "rows")]
    pub cols: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PerceptronArgs {
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100_000)]
    pub max_updates: usize,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_FAILURE } else { EXIT_SCALED };
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

pub fn execute(command: &Command) -> Result<i32, CliError> {
    match command {
        Command::Frame(a) => cmd_frame(a),
        Command::Matrix(a) => cmd_matrix(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Perceptron(a) => cmd_perceptron(a),
    }
}

fn solver_config(o: &SolveOptions) -> Result<SolverConfig, CliError> {
    if !(o.eps.is_finite() && o.eps > 0.0) {
        return Err(CliError::Usage(format!("--eps must be positive, got {}", o.eps)));
    }
    Ok(SolverConfig {
        max_iters: o.max_iters,
        regularize: !o.no_regularize,
        ..SolverConfig::default()
    })
}

fn parse_error(path: &Path, e: ScaleError) -> CliError {
    CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn emit(result: &ScalingResult, o: &SolveOptions, problem: Problem) -> Result<i32, CliError> {
    let doc = ResultDocument::from_result(
        result,
        ConfigEcho {
            problem,
            eps: o.eps,
            max_iters: o.max_iters,
            regularize: !o.no_regularize,
        },
    );
    if let Some(path) = &o.trace {
        let mut lines = String::new();
        for rec in &result.trace {
            writeln!(lines, "{}", serde_json::to_string(rec).expect("records are serializable")).unwrap();
        }
        io::write(path, &lines)?;
    }
    match &o.out {
        Some(path) => io::write(path, &doc.to_json())?,
        None => print!("{}", doc.to_json()),
    }
    Ok(match result.status() {
        Status::Scaled => EXIT_SCALED,
        Status::Infeasible => {
            eprintln!("infeasible: certificate {:?}", result.certificate().unwrap_or_default());
            EXIT_INFEASIBLE
        }
    })
}

pub fn cmd_frame(a: &FrameArgs) -> Result<i32, CliError> {
    let config = solver_config(&a.solve)?;
    let table = io::load_table(&a.input)?;
    let c = io::load_vector(&a.marginals)?;
    let frame = Frame::from_row_slice(table.rows, table.cols, &table.values).map_err(|e| parse_error(&a.input, e))?;
    if c.values.len() != table.cols {
        return Err(CliError::Parse {
            path: a.marginals.clone(),
            message: format!("{} marginals for {} columns", c.values.len(), table.cols),
        });
    }
    let c = Marginals::new(c.values, table.rows).map_err(|e| parse_error(&a.marginals, e))?;
    let result = run(&frame, &c, a.solve.eps, &config)?;
    emit(&result, &a.solve, Problem::Frame)
}

pub fn cmd_matrix(a: &MatrixArgs) -> Result<i32, CliError> {
    let config = solver_config(&a.solve)?;
    let table = io::load_table(&a.input)?;
    let r = io::load_vector(&a.rows)?;
    let c = io::load_vector(&a.cols)?;
    let m = NonnegMatrix::from_row_slice(table.rows, table.cols, &table.values).map_err(|e| parse_error(&a.input, e))?;
    let marg = MatrixMarginals::new(r.values, c.values).map_err(|e| parse_error(&a.cols, e))?;
    let result = run_matrix(&m, &marg, a.solve.eps, &config)?;
    emit(&result, &a.solve, Problem::Matrix)
}

pub fn cmd_gen(a: &GenArgs) -> Result<i32, CliError> {
    let need = |v: Option<usize>, flag: &str| v.ok_or_else(|| CliError::Usage(format!("{flag} is required for this kind")));
    let written = match a.kind {
        GenKind::Gaussian => gen::gaussian(&a.out, need(a.d, "--d")?, a.n, a.seed)?,
        GenKind::Infeasible => gen::infeasible(&a.out, need(a.d, "--d")?, a.n, a.seed)?,
        GenKind::Bipartite => gen::bipartite(&a.out, need(a.m, "--m")?, a.n, a.seed)?,
    };
    for p in written {
        println!("{}", p.display());
    }
    Ok(EXIT_SCALED)
}

fn load_document(path: &Path) -> Result<ResultDocument, CliError> {
    serde_json::from_str(&io::read(path)?).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn cmd_verify(a: &VerifyArgs) -> Result<i32, CliError> {
    let doc = load_document(&a.result)?;
    let table = io::load_table(&a.input)?;
    let outcome = match doc.config.problem {
        Problem::Frame => {
            let path = a.marginals.as_ref().ok_or_else(|| CliError::Usage("frame results need --marginals".into()))?;
            verify::verify_frame(&doc, &table, &io::load_vector(path)?)
        }
        Problem::Matrix => {
            let (Some(r), Some(c)) = (&a.rows, &a.cols) else {
                return Err(CliError::Usage("matrix results need --rows and --cols".into()));
            };
            verify::verify_matrix(&doc, &table, &io::load_vector(r)?, &io::load_vector(c)?)
        }
    };
    match outcome {
        Ok(()) => {
            let what = match doc.status {
                DocStatus::Scaled => "scaling",
                DocStatus::Infeasible => "certificate",
            };
            println!("ok: {what} verified");
            Ok(EXIT_SCALED)
        }
        Err(f) => {
            eprintln!("verification failed: {f}");
            Ok(EXIT_VERIFY_FAILED)
        }
    }
}

pub fn cmd_perceptron(a: &PerceptronArgs) -> Result<i32, CliError> {
    use framescale::instances::{gaussian_frame, rng};
    use framescale::perceptron::{margin_fraction, parallel_perceptron, LabeledSample, QMetric};
    use rand::Rng;
    use rand_distr::StandardNormal;

    let (d, n) = (a.d, a.n);
    let frame = gaussian_frame(d, n, a.seed)?;
    let eps = 0.9 * d as f64 / (2.0 * n as f64);
    let scaled = run(&frame, &Marginals::uniform(d, n), eps, &SolverConfig::default())?;
    let z = scaled
        .scaling()
        .ok_or_else(|| CliError::Usage("Gaussian frame unexpectedly infeasible".into()))?;
    let q = QMetric::new(&frame, z)?;
    let mut r = rng(a.seed ^ 0x9e37_79b9_7f4a_7c15);
    let w = nalgebra::DVector::from_fn(d, |_, _| r.sample::<f64, _>(StandardNormal));
    let samples = (0..n)
        .map(|j| {
            let u = frame.column(j);
            let label = if q.inner(&w, &u) >= 0.0 { 1 } else { -1 };
            LabeledSample::new(u, label)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let gamma = 1.0 / (4.0 * d as f64).sqrt();
    let out = parallel_perceptron(&samples, &q, gamma, a.max_updates)?;
    let summary = serde_json::json!({
        "d": d,
        "n": n,
        "gamma": gamma,
        "scaling_iterations": scaled.iterations,
        "margin_fraction": margin_fraction(&frame, z, &w)?,
        "updates": out.updates,
        "winning_seed": out.seed,
        "v": out.v.as_slice(),
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary is serializable"));
    Ok(EXIT_SCALED)
}
