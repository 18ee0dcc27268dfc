//! `skcov` command line: fixed point, exact enumeration, limit-law samples,
//! replica experiments and an enumeration benchmark.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration error, 3 budget
//! exceeded, 4 AT condition violated. Vertex indices are 1-based.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use thiserror::Error;

use skcov_core::experiments::{emit_report, run_experiment, ExperimentConfig, ExperimentError, ExperimentKind};
use skcov_core::fixed_point::{self, LimitLawSpec, SolverOptions, DEFAULT_ORDER, DEFAULT_TOL};
use skcov_core::gibbs::{Conditioning, Disorder, ExactSolver, GibbsError, ModelParams, Request};

#[derive(Debug, Parser)]
#[command(name = "skcov", version, about = "SK model spin covariances: exact enumeration, path expansion and limit law")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve q = E tanh²(h + √(tq) Z) and report μ, tμ and the limit scale.
    FixedPoint {
        #[arg(long)]
        t: f64,
        #[arg(long)]
        h: f64,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_ORDER)]
        order: usize,
    },
    /// Exact Gibbs moments of one seeded disorder draw.
    Exact {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        h: f64,
        #[arg(long)]
        seed: u64,
        /// 1-based vertex pair, e.g. `1,2`.
        #[arg(long, value_parser = parse_pair, default_value = "1,2")]
        pair: (usize, usize),
    },
    /// Draws from the limit law, one value per line.
    LimitSample {
        #[arg(long)]
        t: f64,
        #[arg(long)]
        h: f64,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: u64,
        /// Write to this file instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a replica experiment described by a TOML config.
    Experiment(ExperimentArgs),
    /// Timing helpers.
    Bench {
        #[command(subcommand)]
        target: BenchTarget,
    },
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// fluctuation, truncation, cavity or vector-cov.
    kind: String,
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum BenchTarget {
    /// Time one full enumeration with all pair covariances.
    Enumerate {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.2)]
        t: f64,
        #[arg(long, default_value_t = 0.4)]
        h: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Budget(String),
    #[error("AT condition violated: t·μ = {0} >= 1")]
    AtViolation(f64),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Budget(_) => 3,
            Self::AtViolation(_) => 4,
            Self::Experiment(e) => e.exit_code() as u8,
            Self::Other(_) => 1,
        }
    }
}

impl From<GibbsError> for CliError {
    fn from(e: GibbsError) -> Self {
        match e {
            GibbsError::FreeSpinCountExceeded { .. } => Self::Budget(e.to_string()),
            GibbsError::InvalidParams(_) | GibbsError::IndexOutOfRange { .. } => Self::Config(e.to_string()),
            other => Self::Other(other.to_string()),
        }
    }
}

impl From<fixed_point::FixedPointError> for CliError {
    fn from(e: fixed_point::FixedPointError) -> Self {
        match e {
            fixed_point::FixedPointError::ATViolation { at_value } => Self::AtViolation(at_value),
            fixed_point::FixedPointError::InvalidParameter(m) => Self::Config(m),
            other => Self::Other(other.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        Self::Other(e.to_string())
    }
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `i,j`, got `{s}`"))?;
    let a: usize = a.trim().parse().map_err(|e| format!("bad index `{a}`: {e}"))?;
    let b: usize = b.trim().parse().map_err(|e| format!("bad index `{b}`: {e}"))?;
    if a == 0 || b == 0 || a == b {
        return Err("pair indices are 1-based and must differ".into());
    }
    Ok((a, b))
}

fn print_json(v: &Value) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v).map_err(|e| CliError::Other(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::FixedPoint { t, h, tol, order } => {
            let opts = SolverOptions { order, ..SolverOptions::default() };
            let s = fixed_point::solve_q_with(t, h, tol, &opts)?;
            let moments = if s.at_holds() { fixed_point::limit_moments(&s, 4)?.values } else { Vec::new() };
            print_json(&json!({
                "t": s.t,
                "h": s.h,
                "q": s.q,
                "mu": s.mu,
                "at_value": s.at_value,
                "at_holds": s.at_holds(),
                "limit_scale": s.limit_scale,
                "limit_moments": moments,
                "iterations": s.iterations,
                "residual": s.residual,
                "order": s.order,
            }))
        }
        Command::Exact { n, t, h, seed, pair } => {
            let params = ModelParams::new(n, t, h)?;
            let (i, j) = (pair.0 - 1, pair.1 - 1);
            if i >= n || j >= n {
                return Err(CliError::Config(format!("pair ({}, {}) is out of range for N = {n}", pair.0, pair.1)));
            }
            let disorder = Disorder::sample(&params, seed);
            let rep = ExactSolver::default().report(&params, &disorder, &Conditioning::none(), &[Request::Pair(i, j)])?;
            let mags: Vec<f64> = (0..n).map(|k| rep.magnetization(k).expect("free")).collect();
            print_json(&json!({
                "n": n,
                "t": t,
                "h": h,
                "seed": seed,
                "log_z": rep.log_z,
                "magnetizations": mags,
                "pair": [pair.0, pair.1],
                "covariance": rep.covariance(i, j),
                "sqrt_n_covariance": rep.covariance(i, j).map(|c| c * (n as f64).sqrt()),
            }))
        }
        Command::LimitSample { t, h, count, seed, output } => {
            let spec = LimitLawSpec::new(fixed_point::solve_q(t, h, DEFAULT_TOL)?)?;
            let draws = fixed_point::limit_law_sample(&spec, count, seed);
            let sink: Box<dyn Write> = match output {
                Some(p) => Box::new(fs::File::create(p)?),
                None => Box::new(io::stdout().lock()),
            };
            let mut w = BufWriter::new(sink);
            for v in draws {
                writeln!(w, "{v}")?;
            }
            w.flush()?;
            Ok(())
        }
        Command::Experiment(args) => {
            let kind: ExperimentKind = args.kind.parse()?;
            let text = fs::read_to_string(&args.config)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.config.display())))?;
            let mut config = ExperimentConfig::from_toml_str(&text)?;
            if let Some(dir) = args.output_dir {
                config.output_dir = dir;
            }
            let output = run_experiment(kind, &config, args.workers)?;
            let files = emit_report(&output, config.format, &config.output_dir)?;
            for f in files {
                println!("{}", f.display());
            }
            Ok(())
        }
        Command::Bench { target: BenchTarget::Enumerate { n, t, h, seed } } => {
            let params = ModelParams::new(n, t, h)?;
            let disorder = Disorder::sample(&params, seed);
            let start = Instant::now();
            let rep = ExactSolver::default().report(&params, &disorder, &Conditioning::none(), &[Request::AllPairs])?;
            let elapsed = start.elapsed().as_secs_f64();
            print_json(&json!({ "n": n, "states": 1u64 << n, "elapsed_secs": elapsed, "log_z": rep.log_z }))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
