//! Empirical covariance of the path sums `T_{n+1}` and of `X^{(M)}`.

use crate::paths::path_count;
use crate::stats;

use super::report::{Blocks, CovarianceEntry, Estimate, SampleRow, VectorCovBlock};
use super::{Context, ExperimentError, Result};

pub const MAX_DEPTH: usize = 3;

pub(super) fn run(ctx: &Context) -> Result<(Blocks, Vec<SampleRow>)> {
    let cfg = ctx.config;
    let depth = cfg.depth;
    if depth > MAX_DEPTH {
        return Err(ExperimentError::Config(format!("depth {depth} exceeds {MAX_DEPTH} for vector-cov")));
    }
    let t = cfg.t;
    let mu = ctx.solution.mu;
    let mut blocks = Vec::new();
    let mut rows = Vec::new();
    for n in ctx.grid() {
        ctx.require_exact(n)?;
        let params = ctx.params(n)?;
        let per: Vec<(Vec<f64>, Vec<f64>)> = ctx.map_replicas(|r| {
            let b = ctx.bundle(&params, &ctx.disorder(&params, n, r), depth)?;
            Ok((b.t_terms, b.x_vector))
        })?;
        for k in 0..=depth {
            for (r, p) in per.iter().enumerate() {
                rows.push(ctx.row(format!("vector_cov_T{k}"), n, r, p.0[k], None));
            }
            for (r, p) in per.iter().enumerate() {
                rows.push(ctx.row(format!("vector_cov_X{k}"), n, r, p.1[k], None));
            }
        }
        let t_cols: Vec<Vec<f64>> = (0..=depth).map(|k| per.iter().map(|p| p.0[k]).collect()).collect();
        let x_cols: Vec<Vec<f64>> = (0..=depth).map(|k| per.iter().map(|p| p.1[k]).collect()).collect();
        let diag = |k: usize| t * (t * mu).powi(k as i32);
        blocks.push(VectorCovBlock {
            n,
            t_covariance: entries(&t_cols, n, diag),
            x_covariance: entries(&x_cols, n, |k| diag(k) * mu * mu),
        });
    }
    Ok((Blocks::VectorCov { blocks }, rows))
}

/// Upper-triangular covariance entries with the standard error of the mean
/// of centred products.
fn entries(cols: &[Vec<f64>], n: usize, diagonal: impl Fn(usize) -> f64) -> Vec<CovarianceEntry> {
    let mut out = Vec::new();
    for k in 0..cols.len() {
        for l in k..cols.len() {
            let estimate = covariance(&cols[k], &cols[l]);
            let expected = if k == l { diagonal(k) } else { 0.0 };
            let expected_path_count = expected * path_count(n, k) as f64 / (n as f64).powi(k as i32);
            out.push(CovarianceEntry {
                k,
                l,
                estimate,
                expected,
                z: estimate.z_score(expected),
                expected_path_count,
                z_path_count: estimate.z_score(expected_path_count),
            });
        }
    }
    out
}

pub(crate) fn covariance(a: &[f64], b: &[f64]) -> Estimate {
    let n = a.len() as f64;
    let (ma, mb) = (stats::mean(a), stats::mean(b));
    let prods: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).collect();
    let value = prods.iter().sum::<f64>() / (n - 1.0).max(1.0);
    Estimate::new(value, stats::std_dev(&prods) / n.sqrt())
}
