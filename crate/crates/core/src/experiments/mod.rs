//! Replica experiments over the default parameter grid and their reports.
//!
//! Every replica draws its disorder from a seed derived from
//! `(master_seed, experiment, N, replica)`, results are collected by replica
//! index, and bootstrap replicates use their own derived seeds, so the report
//! and sample files do not depend on the worker count.

use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::fixed_point::{limit_moments, solve_q, FixedPointError, FixedPointSolution, DEFAULT_TOL};
use crate::gibbs::{Disorder, ExactSolver, GibbsError, ModelParams};
use crate::paths::{PathError, PathExpansion, PathTermBundle, DEFAULT_PATH_CAP};
use crate::sampler::SamplerError;
use crate::seed::derive_seed;
use crate::stats::{self, StatsError};

pub mod config;
pub mod report;

mod cavity;
mod fluctuation;
mod truncation;
mod vector_cov;

pub use config::{ExperimentConfig, Mode, OutputFormat};
pub use report::{
    emit_report, read_report, read_samples_csv, Blocks, CavityBlock, CavitySummary, Comparison, CovarianceEntry,
    Estimate, ExperimentKind, ExperimentOutput, FixedPointBlock, FluctuationBlock, FluctuationSummary, Method,
    MomentComparison, Provenance, Report, SampleRow, StandardizedField, TruncationBlock, TruncationSummary,
    VectorCovBlock, Verdict, SCHEMA_VERSION,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("AT condition violated: t·μ = {at_value} >= 1")]
    ATViolation { at_value: f64 },
    #[error("i/o failure: {0}")]
    Io(String),
    #[error(transparent)]
    Gibbs(GibbsError),
    #[error(transparent)]
    Path(PathError),
    #[error(transparent)]
    FixedPoint(FixedPointError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

impl ExperimentError {
    /// Process exit code for the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::BudgetExceeded(_) => 3,
            Self::ATViolation { .. } => 4,
            _ => 1,
        }
    }
}

impl From<GibbsError> for ExperimentError {
    fn from(e: GibbsError) -> Self {
        match e {
            GibbsError::FreeSpinCountExceeded { .. } => Self::BudgetExceeded(e.to_string()),
            other => Self::Gibbs(other),
        }
    }
}

impl From<PathError> for ExperimentError {
    fn from(e: PathError) -> Self {
        match e {
            PathError::BudgetExceeded { .. } => Self::BudgetExceeded(e.to_string()),
            PathError::Gibbs(g) => g.into(),
            other => Self::Path(other),
        }
    }
}

impl From<FixedPointError> for ExperimentError {
    fn from(e: FixedPointError) -> Self {
        match e {
            FixedPointError::ATViolation { at_value } => Self::ATViolation { at_value },
            other => Self::FixedPoint(other),
        }
    }
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

/// Runs `kind` on a dedicated pool of `workers` threads (all cores when
/// `None`).
pub fn run_experiment(kind: ExperimentKind, config: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentOutput> {
    config.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(ExperimentError::Config("worker count must be at least 1".into()));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| ExperimentError::Config(e.to_string()))?;
    let start = Instant::now();
    let (report, samples) = pool.install(|| run_inner(kind, config))?;
    Ok(ExperimentOutput { report, samples, elapsed: start.elapsed() })
}

fn run_inner(kind: ExperimentKind, config: &ExperimentConfig) -> Result<(Report, Vec<SampleRow>)> {
    let ctx = Context::new(kind, config)?;
    let (results, samples) = match kind {
        ExperimentKind::Fluctuation => fluctuation::run(&ctx)?,
        ExperimentKind::Truncation => truncation::run(&ctx)?,
        ExperimentKind::Cavity => cavity::run(&ctx)?,
        ExperimentKind::VectorCov => vector_cov::run(&ctx)?,
    };
    let report = Report {
        schema: SCHEMA_VERSION,
        experiment: kind,
        config: config.clone(),
        fixed_point: ctx.fixed_point_block()?,
        results,
        provenance: Provenance { master_seed: config.master_seed, version: report::version_string() },
    };
    Ok((report, samples))
}

/// Shared state of one experiment run.
pub(crate) struct Context<'a> {
    pub kind: ExperimentKind,
    pub config: &'a ExperimentConfig,
    pub solution: FixedPointSolution,
    pub solver: ExactSolver,
}

impl<'a> Context<'a> {
    fn new(kind: ExperimentKind, config: &'a ExperimentConfig) -> Result<Self> {
        let solution = solve_q(config.t, config.h, DEFAULT_TOL)?;
        Ok(Self { kind, config, solution, solver: ExactSolver::with_cap(config.enumeration_cap) })
    }

    fn fixed_point_block(&self) -> Result<FixedPointBlock> {
        let s = &self.solution;
        let limit = if s.at_holds() { limit_moments(s, 4)?.values } else { Vec::new() };
        Ok(FixedPointBlock { q: s.q, mu: s.mu, at_value: s.at_value, limit_scale: s.limit_scale, limit_moments: limit })
    }

    pub fn params(&self, n: usize) -> Result<ModelParams> {
        Ok(ModelParams::new(n, self.config.t, self.config.h)?)
    }

    /// Grid sizes in ascending order.
    pub fn grid(&self) -> Vec<usize> {
        let mut g = self.config.n_grid.clone();
        g.sort_unstable();
        g.dedup();
        g
    }

    pub fn replica_seed(&self, n: usize, replica: usize) -> u64 {
        derive_seed(self.config.master_seed, &[self.kind.stream(), n as u64, replica as u64])
    }

    /// Seed for auxiliary draws (bootstrap, reference samples) tagged by `tag`.
    pub fn aux_seed(&self, n: usize, tag: u64) -> u64 {
        derive_seed(self.config.master_seed, &[self.kind.stream(), n as u64, u64::MAX, tag])
    }

    pub fn disorder(&self, params: &ModelParams, n: usize, replica: usize) -> Disorder {
        Disorder::sample(params, self.replica_seed(n, replica))
    }

    /// Exact-mode experiments refuse sizes the enumerator cannot reach.
    pub fn require_exact(&self, n: usize) -> Result<()> {
        if self.config.mode == Mode::Mcmc {
            return Err(ExperimentError::Config(format!(
                "the {} experiment needs exact enumeration; mode = \"mcmc\" is not supported",
                self.kind.name()
            )));
        }
        if n > self.config.enumeration_cap {
            return Err(ExperimentError::BudgetExceeded(format!(
                "N = {n} exceeds the enumeration cap of {}",
                self.config.enumeration_cap
            )));
        }
        Ok(())
    }

    /// Per-replica map over `0..replicas`, collected in index order.
    pub fn map_replicas<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        (0..self.config.replicas).into_par_iter().map(f).collect()
    }

    pub fn bundle(&self, params: &ModelParams, disorder: &Disorder, depth: usize) -> Result<PathTermBundle> {
        let (i, j) = self.config.pair0();
        let expansion = PathExpansion::new(*params, disorder)
            .with_solver(self.solver)
            .with_budget(self.config.memo_cap, DEFAULT_PATH_CAP);
        Ok(expansion.compute_bundle(i, j, depth)?)
    }

    pub fn rms_estimate(&self, x: &[f64], n: usize, tag: u64) -> Estimate {
        let se = stats::bootstrap_se(x, self.config.bootstrap_reps, self.aux_seed(n, tag), stats::rms);
        Estimate::new(stats::rms(x), se)
    }

    pub fn mean_estimate(x: &[f64]) -> Estimate {
        Estimate::new(stats::mean(x), stats::std_dev(x) / (x.len() as f64).sqrt())
    }

    pub fn row(&self, series: impl Into<String>, n: usize, replica: usize, value: f64, std_error: Option<f64>) -> SampleRow {
        SampleRow { experiment: series.into(), n, replica, seed: self.replica_seed(n, replica), value, std_error }
    }
}
