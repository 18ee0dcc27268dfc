//! Report types and their on-disk form.
//!
//! Each run writes `report.json` (schema version 1), a flat per-replica
//! sample file (`samples.csv` or `samples.json`) and `timing.json`. The
//! first two are pure functions of the configuration.
//!
//! CSV columns: `experiment,N,replica,seed,value,std_error`, where
//! `experiment` names the series (e.g. `truncation_m2`) and `std_error` is
//! empty for exact values.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, OutputFormat};
use super::ExperimentError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Fluctuation,
    Truncation,
    Cavity,
    VectorCov,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Fluctuation => "fluctuation",
            Self::Truncation => "truncation",
            Self::Cavity => "cavity",
            Self::VectorCov => "vector-cov",
        }
    }

    pub(crate) fn stream(self) -> u64 {
        match self {
            Self::Fluctuation => 1,
            Self::Truncation => 2,
            Self::Cavity => 3,
            Self::VectorCov => 4,
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fluctuation" => Ok(Self::Fluctuation),
            "truncation" => Ok(Self::Truncation),
            "cavity" => Ok(Self::Cavity),
            "vector-cov" => Ok(Self::VectorCov),
            other => Err(ExperimentError::Config(format!("unknown experiment '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn new(value: f64, std_error: f64) -> Self {
        Self { value, std_error }
    }

    /// `(value − target)/std_error`, absent when the error is zero.
    pub fn z_score(&self, target: f64) -> Option<f64> {
        (self.std_error > 0.0).then(|| (self.value - target) / self.std_error)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// An ordered claim `larger ≥ smaller` between two estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub label: String,
    pub larger: Estimate,
    pub smaller: Estimate,
    pub verdict: Verdict,
}

impl Comparison {
    /// Inconclusive when the 1-σ bands overlap.
    pub fn expect_greater(label: impl Into<String>, larger: Estimate, smaller: Estimate) -> Self {
        let gap = larger.value - smaller.value;
        let band = larger.std_error + smaller.std_error;
        let verdict = if gap.abs() <= band {
            if gap >= 0.0 && band == 0.0 {
                Verdict::Pass
            } else {
                Verdict::Inconclusive
            }
        } else if gap > 0.0 {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        Self { label: label.into(), larger, smaller, verdict }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointBlock {
    pub q: f64,
    pub mu: f64,
    pub at_value: f64,
    pub limit_scale: Option<f64>,
    /// Limit-law raw moments of orders 1..=4.
    pub limit_moments: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentComparison {
    pub order: usize,
    pub estimate: Estimate,
    pub limit: f64,
    pub z: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Mcmc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationBlock {
    pub n: usize,
    pub method: Method,
    pub replicas: usize,
    pub moments: Vec<MomentComparison>,
    pub ks: Estimate,
    pub w1: Estimate,
    pub ks_critical_1pct: f64,
    /// Mean per-replica MCMC standard error of `√N m_ij`.
    pub mean_mcmc_std_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationSummary {
    pub reference_size: usize,
    pub spearman_ks_vs_n: f64,
    /// Spearman correlation of `N` with `|moment − limit|`, for orders 2 and 4.
    pub spearman_moment_gap_vs_n: Vec<(usize, f64)>,
    pub max_abs_odd_z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationBlock {
    pub n: usize,
    /// RMS of `√N m_ij − Σ_{n≤m} X_n` for `m = 0..=M`.
    pub rms_by_depth: Vec<Estimate>,
    /// RMS of `√N m_ij − Σ_{n≤M} X_n − √N A_{M+1}`.
    pub key_residual_rms: Estimate,
    pub sqrt_n_mij_rms: Estimate,
    /// `rms(m) ≥ rms(m+1)` checks.
    pub depth_monotonicity: Vec<Comparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationSummary {
    /// Nonnegative least-squares fit `rms ≈ a N^{-1/2} + b t^{m/2}`.
    pub fit_a: f64,
    pub fit_b: f64,
    pub fit_rss: f64,
    /// `rms_N(M) ≥ rms_{N'}(M)` for consecutive grid sizes.
    pub floor_shrinks: Vec<Comparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizedField {
    pub mean: Estimate,
    pub variance: f64,
    pub ks: f64,
    pub ks_critical_1pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavityBlock {
    pub n: usize,
    pub residual_rms: Estimate,
    /// Pooled `Z_i` against a standard normal reference; absent when every
    /// replica had a degenerate field.
    pub standardized_field: Option<StandardizedField>,
    pub degenerate_replicas: usize,
    pub raw_field_variance: f64,
    pub mean_t_q_cavity: f64,
    pub mean_mii: Estimate,
    pub predicted_mii: f64,
    pub mean_mii_squared: Estimate,
    pub predicted_mii_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavitySummary {
    pub spearman_residual_vs_n: f64,
    pub residual_loglog_slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEntry {
    pub k: usize,
    pub l: usize,
    pub estimate: Estimate,
    pub expected: f64,
    pub z: Option<f64>,
    /// `expected` with the path count `(N−2)(N−3)⋯(N−1−k)` in place of `N^k`.
    pub expected_path_count: f64,
    pub z_path_count: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorCovBlock {
    pub n: usize,
    pub t_covariance: Vec<CovarianceEntry>,
    pub x_covariance: Vec<CovarianceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Blocks {
    Fluctuation { blocks: Vec<FluctuationBlock>, summary: FluctuationSummary },
    Truncation { blocks: Vec<TruncationBlock>, summary: TruncationSummary },
    Cavity { blocks: Vec<CavityBlock>, summary: CavitySummary },
    VectorCov { blocks: Vec<VectorCovBlock> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub master_seed: u64,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    pub fixed_point: FixedPointBlock,
    pub results: Blocks,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub experiment: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub replica: usize,
    pub seed: u64,
    pub value: f64,
    pub std_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub report: Report,
    pub samples: Vec<SampleRow>,
    pub elapsed: Duration,
}

pub fn version_string() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

/// Writes the report, the sample file and the timing sidecar into `dir`.
pub fn emit_report(output: &ExperimentOutput, format: OutputFormat, dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let io = |e: std::io::Error| ExperimentError::Io(e.to_string());
    fs::create_dir_all(dir).map_err(io)?;
    let mut written = Vec::new();

    let report_path = dir.join("report.json");
    let mut json = serde_json::to_string_pretty(&output.report).map_err(|e| ExperimentError::Io(e.to_string()))?;
    json.push('\n');
    fs::write(&report_path, json).map_err(io)?;
    written.push(report_path);

    let samples_path = match format {
        OutputFormat::Csv => {
            let path = dir.join("samples.csv");
            let mut w = csv::Writer::from_path(&path).map_err(|e| ExperimentError::Io(e.to_string()))?;
            for row in &output.samples {
                w.serialize(row).map_err(|e| ExperimentError::Io(e.to_string()))?;
            }
            w.flush().map_err(io)?;
            path
        }
        OutputFormat::Json => {
            let path = dir.join("samples.json");
            let mut json = serde_json::to_string(&output.samples).map_err(|e| ExperimentError::Io(e.to_string()))?;
            json.push('\n');
            fs::write(&path, json).map_err(io)?;
            path
        }
    };
    written.push(samples_path);

    let timing_path = dir.join("timing.json");
    let timing = serde_json::json!({ "elapsed_secs": output.elapsed.as_secs_f64() });
    fs::write(&timing_path, format!("{timing}\n")).map_err(io)?;
    written.push(timing_path);
    Ok(written)
}

pub fn read_report(path: &Path) -> Result<Report, ExperimentError> {
    let s = fs::read_to_string(path).map_err(|e| ExperimentError::Io(e.to_string()))?;
    serde_json::from_str(&s).map_err(|e| ExperimentError::Io(e.to_string()))
}

pub fn read_samples_csv(path: &Path) -> Result<Vec<SampleRow>, ExperimentError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| ExperimentError::Io(e.to_string()))?;
    r.deserialize().collect::<Result<Vec<SampleRow>, _>>().map_err(|e| ExperimentError::Io(e.to_string()))
}
