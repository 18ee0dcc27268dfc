//! Glauber (heat-bath) Markov chains for magnetizations and spin covariances
//! beyond the enumeration cap.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gibbs::{Disorder, ModelParams};
use crate::seed::{derive_seed, rng_from_seed};

pub const BATCHES_PER_CHAIN: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("invalid MCMC configuration: {0}")]
    InvalidConfig(String),
    #[error("vertex {} is out of range for {n} spins", .index + 1)]
    IndexOutOfRange { index: usize, n: usize },
    #[error("disorder has {disorder} spins but the model has {params}")]
    DimensionMismatch { params: usize, disorder: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub sweeps: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub chains: usize,
    pub seed: u64,
}

impl McmcConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.sweeps <= self.burn_in {
            return Err(SamplerError::InvalidConfig("sweeps must exceed burn_in".into()));
        }
        if self.thinning == 0 || self.chains == 0 {
            return Err(SamplerError::InvalidConfig("thinning and chains must be at least 1".into()));
        }
        if self.samples_per_chain() < BATCHES_PER_CHAIN {
            return Err(SamplerError::InvalidConfig(format!(
                "need at least {BATCHES_PER_CHAIN} retained sweeps per chain"
            )));
        }
        Ok(())
    }

    pub fn samples_per_chain(&self) -> usize {
        (self.sweeps - self.burn_in) / self.thinning
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Target {
    Magnetization(usize),
    Covariance(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McmcEstimate {
    pub mean: f64,
    /// Batch-means standard error (delta method for covariances).
    pub std_error: f64,
    pub n_effective: f64,
}

/// Probability that the heat-bath update sets the spin to `+1` given its
/// local field.
#[inline]
pub fn heat_bath_up_probability(local_field: f64) -> f64 {
    1.0 / (1.0 + (-2.0 * local_field).exp())
}

/// Per-chain sums of the retained sweeps, split into batches.
struct ChainTally {
    /// `[batch][quantity]` sample means.
    batches: Vec<Vec<f64>>,
    samples: usize,
}

/// Runs `config.chains` independent heat-bath chains (systematic scan) and
/// returns batch-means estimates for each target.
pub fn glauber_estimate(
    params: &ModelParams,
    disorder: &Disorder,
    targets: &[Target],
    config: &McmcConfig,
) -> Result<BTreeMap<Target, McmcEstimate>, SamplerError> {
    config.validate()?;
    let n = params.n;
    if disorder.n() != n {
        return Err(SamplerError::DimensionMismatch { params: n, disorder: disorder.n() });
    }
    for t in targets {
        let (a, b) = match *t {
            Target::Magnetization(i) => (i, i),
            Target::Covariance(i, j) => (i, j),
        };
        for v in [a, b] {
            if v >= n {
                return Err(SamplerError::IndexOutOfRange { index: v, n });
            }
        }
    }

    // Tracked quantities: every spin mean, then each requested product.
    let products: Vec<(usize, usize)> = targets
        .iter()
        .filter_map(|t| match *t {
            Target::Covariance(i, j) => Some((i, j)),
            Target::Magnetization(_) => None,
        })
        .collect();
    let q = n + products.len();

    let tallies: Vec<ChainTally> = (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain(params, disorder, &products, config, derive_seed(config.seed, &[c as u64])))
        .collect();

    let total_samples: usize = tallies.iter().map(|t| t.samples).sum();
    let batch_means: Vec<&Vec<f64>> = tallies.iter().flat_map(|t| t.batches.iter()).collect();
    let nb = batch_means.len() as f64;
    // Equal-size batches up to one sample; overall means weight them equally.
    let grand: Vec<f64> = (0..q).map(|k| batch_means.iter().map(|b| b[k]).sum::<f64>() / nb).collect();

    let se_of = |lin: &dyn Fn(&[f64]) -> f64| -> f64 {
        let vals: Vec<f64> = batch_means.iter().map(|b| lin(b)).collect();
        let m = vals.iter().sum::<f64>() / nb;
        let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (nb - 1.0);
        (var / nb).sqrt()
    };
    let cap = total_samples as f64;

    let mut out = BTreeMap::new();
    let mut product_idx = 0;
    for t in targets {
        let est = match *t {
            Target::Magnetization(i) => {
                let mean = grand[i];
                let se = se_of(&|b: &[f64]| b[i]);
                let var = (1.0 - mean * mean).max(0.0);
                McmcEstimate { mean, std_error: se, n_effective: n_eff(var, se, cap) }
            }
            Target::Covariance(i, j) => {
                let p = n + product_idx;
                product_idx += 1;
                let (mi, mj, mij) = (grand[i], grand[j], grand[p]);
                let mean = mij - mi * mj;
                // Linearization u = s_i s_j − m_j s_i − m_i s_j.
                let se = se_of(&|b: &[f64]| b[p] - mj * b[i] - mi * b[j]);
                let e_u = mij - 2.0 * mi * mj;
                let e_u2 = 1.0 + mj * mj + mi * mi - 2.0 * mj * mj - 2.0 * mi * mi + 2.0 * mi * mj * mij;
                let var = (e_u2 - e_u * e_u).max(0.0);
                McmcEstimate { mean, std_error: se, n_effective: n_eff(var, se, cap) }
            }
        };
        out.insert(*t, est);
    }
    Ok(out)
}

fn n_eff(var: f64, se: f64, cap: f64) -> f64 {
    if se > 0.0 {
        (var / (se * se)).min(cap)
    } else {
        cap
    }
}

fn run_chain(
    params: &ModelParams,
    disorder: &Disorder,
    products: &[(usize, usize)],
    config: &McmcConfig,
    seed: u64,
) -> ChainTally {
    let n = params.n;
    let mut rng = rng_from_seed(seed);
    let mut s: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    let mut lf: Vec<f64> = (0..n)
        .map(|i| params.h + disorder.row(i).iter().zip(&s).map(|(g, x)| g * x).sum::<f64>())
        .collect();

    let samples = config.samples_per_chain();
    let q = n + products.len();
    let mut batches = vec![vec![0.0; q]; BATCHES_PER_CHAIN];
    let mut counts = vec![0usize; BATCHES_PER_CHAIN];
    let mut retained = 0usize;
    for sweep in 0..config.sweeps {
        for i in 0..n {
            let up = rng.random::<f64>() < heat_bath_up_probability(lf[i]);
            let new = if up { 1.0 } else { -1.0 };
            if new != s[i] {
                let delta = new - s[i];
                for (l, g) in lf.iter_mut().zip(disorder.row(i)) {
                    *l += g * delta;
                }
                s[i] = new;
            }
        }
        if sweep >= config.burn_in && (sweep - config.burn_in) % config.thinning == config.thinning - 1 {
            if retained >= samples {
                continue;
            }
            let b = retained * BATCHES_PER_CHAIN / samples;
            let row = &mut batches[b];
            for (acc, x) in row.iter_mut().zip(&s) {
                *acc += x;
            }
            for (acc, &(a, c)) in row[n..].iter_mut().zip(products) {
                *acc += s[a] * s[c];
            }
            counts[b] += 1;
            retained += 1;
        }
    }
    for (row, &c) in batches.iter_mut().zip(&counts) {
        for v in row.iter_mut() {
            *v /= c as f64;
        }
    }
    ChainTally { batches, samples: retained }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::sample_disorder;

    fn cfg(sweeps: usize, seed: u64) -> McmcConfig {
        McmcConfig { sweeps, burn_in: sweeps / 10, thinning: 1, chains: 4, seed }
    }

    #[test]
    fn heat_bath_satisfies_detailed_balance() {
        // Two-state conditional: π(+)/π(−) = e^{2L}, and P(−→+)/P(+→−) must match.
        for &l in &[-2.0, -0.3, 0.0, 0.7, 3.1] {
            let p_up = heat_bath_up_probability(l);
            let ratio = p_up / (1.0 - p_up);
            assert!((ratio - (2.0f64 * l).exp()).abs() < 1e-12 * ratio.max(1.0));
            // Flip probability from σ equals sigmoid(−2 L σ).
            for sigma in [-1.0f64, 1.0] {
                let flip = if sigma > 0.0 { 1.0 - p_up } else { p_up };
                let sig = 1.0 / (1.0 + (2.0 * l * sigma).exp());
                assert!((flip - sig).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn independent_spins_recover_tanh() {
        let p = ModelParams::new(6, 0.0, 0.5).unwrap();
        let d = sample_disorder(&p, 1);
        let targets: Vec<Target> = (0..6).map(Target::Magnetization).collect();
        let est = glauber_estimate(&p, &d, &targets, &cfg(20_000, 3)).unwrap();
        for t in &targets {
            let e = est[t];
            assert!((e.mean - 0.5f64.tanh()).abs() < 3.0 * e.std_error, "{e:?}");
            assert!(e.std_error > 0.0);
            assert!(e.n_effective <= 4.0 * 18_000.0);
        }
    }

    #[test]
    fn seeded_runs_are_identical() {
        let p = ModelParams::new(8, 0.3, 0.2).unwrap();
        let d = sample_disorder(&p, 2);
        let targets = [Target::Magnetization(0), Target::Covariance(0, 1)];
        let a = glauber_estimate(&p, &d, &targets, &cfg(2000, 9)).unwrap();
        let b = glauber_estimate(&p, &d, &targets, &cfg(2000, 9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn validates_config() {
        let p = ModelParams::new(4, 0.3, 0.2).unwrap();
        let d = sample_disorder(&p, 2);
        let bad = McmcConfig { sweeps: 10, burn_in: 10, thinning: 1, chains: 1, seed: 0 };
        assert!(glauber_estimate(&p, &d, &[], &bad).is_err());
        let short = McmcConfig { sweeps: 40, burn_in: 10, thinning: 1, chains: 1, seed: 0 };
        assert!(glauber_estimate(&p, &d, &[], &short).is_err());
        assert!(matches!(
            glauber_estimate(&p, &d, &[Target::Magnetization(4)], &cfg(1000, 1)),
            Err(SamplerError::IndexOutOfRange { index: 4, .. })
        ));
    }
}
