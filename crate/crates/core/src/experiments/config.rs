//! Experiment configuration, loaded from a flat TOML document.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::gibbs::DEFAULT_ENUMERATION_CAP;
use crate::paths::DEFAULT_KEY_CAP;
use crate::sampler::McmcConfig;
use crate::stats::DEFAULT_BOOTSTRAP_REPS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Exact enumeration wherever `N` fits under the cap.
    Exact,
    /// Glauber estimates for every `N`.
    Mcmc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// All keys are optional; unknown keys are rejected. Vertex indices in
/// `pair` are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub t: f64,
    pub h: f64,
    pub n_grid: Vec<usize>,
    pub replicas: usize,
    /// Truncation depth `M`.
    #[serde(alias = "m")]
    pub depth: usize,
    pub pair: [usize; 2],
    pub master_seed: u64,
    pub mode: Mode,
    pub enumeration_cap: usize,
    pub memo_cap: u64,
    /// Advisory only; recorded in the report.
    pub wall_clock_hint_secs: f64,
    pub output_dir: PathBuf,
    pub format: OutputFormat,
    pub bootstrap_reps: usize,
    pub mcmc_sweeps: usize,
    pub mcmc_burn_in: usize,
    pub mcmc_thinning: usize,
    pub mcmc_chains: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            t: 0.2,
            h: 0.4,
            n_grid: vec![8, 10, 12, 14, 16],
            replicas: 2000,
            depth: 3,
            pair: [1, 2],
            master_seed: 1,
            mode: Mode::Exact,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            memo_cap: DEFAULT_KEY_CAP,
            wall_clock_hint_secs: 0.0,
            output_dir: PathBuf::from("out"),
            format: OutputFormat::Csv,
            bootstrap_reps: DEFAULT_BOOTSTRAP_REPS,
            mcmc_sweeps: 20_000,
            mcmc_burn_in: 2_000,
            mcmc_thinning: 1,
            mcmc_chains: 4,
        }
    }
}

impl ExperimentConfig {
    /// Sizes beyond enumeration: `N ∈ {64, 128}`, 500 replicas, Glauber mode.
    pub fn mcmc_extension() -> Self {
        Self { n_grid: vec![64, 128], replicas: 500, mode: Mode::Mcmc, ..Self::default() }
    }

    pub fn from_toml_str(s: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = toml::from_str(s).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let err = |m: String| Err(ExperimentError::Config(m));
        if !(self.t.is_finite() && self.t >= 0.0) {
            return err(format!("t = {} must be finite and >= 0", self.t));
        }
        if !self.h.is_finite() {
            return err(format!("h = {} must be finite", self.h));
        }
        if self.replicas == 0 {
            return err("replicas must be at least 1".into());
        }
        if self.n_grid.is_empty() {
            return err("n_grid must not be empty".into());
        }
        if let Some(n) = self.n_grid.iter().find(|&&n| n < 4) {
            return err(format!("grid size {n} is below the minimum of 4"));
        }
        let [i, j] = self.pair;
        let n_min = *self.n_grid.iter().min().expect("nonempty");
        if i == j || i == 0 || j == 0 || i > n_min || j > n_min {
            return err(format!("pair ({i}, {j}) must be two distinct vertices in 1..={n_min}"));
        }
        if self.bootstrap_reps < 2 {
            return err("bootstrap_reps must be at least 2".into());
        }
        self.mcmc().validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        Ok(())
    }

    /// 0-based pair.
    pub fn pair0(&self) -> (usize, usize) {
        (self.pair[0] - 1, self.pair[1] - 1)
    }

    pub fn mcmc(&self) -> McmcConfig {
        McmcConfig {
            sweeps: self.mcmc_sweeps,
            burn_in: self.mcmc_burn_in,
            thinning: self.mcmc_thinning,
            chains: self.mcmc_chains,
            seed: 0,
        }
    }
}
