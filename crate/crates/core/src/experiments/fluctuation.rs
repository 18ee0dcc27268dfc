//! Distribution of `√N m_ij` across disorder replicas against the limit law.

use crate::fixed_point::{limit_law_sample, LimitLawSpec};
use crate::gibbs::{Conditioning, Request};
use crate::sampler::{glauber_estimate, Target};
use crate::seed::derive_seed;
use crate::stats::{self, EmpiricalDistribution};

use super::report::{Blocks, Estimate, FluctuationBlock, FluctuationSummary, Method, MomentComparison, SampleRow};
use super::{Context, Mode, Result};

const SERIES: &str = "fluctuation";
const MIN_REFERENCE: usize = 100_000;

pub(super) fn run(ctx: &Context) -> Result<(Blocks, Vec<SampleRow>)> {
    let spec = LimitLawSpec::new(ctx.solution)?;
    let cfg = ctx.config;
    let reference_size = (10 * cfg.replicas).max(MIN_REFERENCE);
    let reference = EmpiricalDistribution::new(
        limit_law_sample(&spec, reference_size, derive_seed(cfg.master_seed, &[ctx.kind.stream(), u64::MAX])),
        "limit",
    )?;
    let (i, j) = cfg.pair0();

    let mut blocks = Vec::new();
    let mut rows = Vec::new();
    for n in ctx.grid() {
        let params = ctx.params(n)?;
        let sqrt_n = (n as f64).sqrt();
        let method = if cfg.mode == Mode::Exact && n <= cfg.enumeration_cap { Method::Exact } else { Method::Mcmc };
        let values: Vec<(f64, Option<f64>)> = ctx.map_replicas(|r| {
            let disorder = ctx.disorder(&params, n, r);
            match method {
                Method::Exact => {
                    let rep = ctx.solver.report(&params, &disorder, &Conditioning::none(), &[Request::Pair(i, j)])?;
                    Ok((sqrt_n * rep.covariance(i, j).expect("requested"), None))
                }
                Method::Mcmc => {
                    let mut mc = cfg.mcmc();
                    mc.seed = derive_seed(ctx.replica_seed(n, r), &[1]);
                    let target = Target::Covariance(i, j);
                    let est = glauber_estimate(&params, &disorder, &[target], &mc)?[&target];
                    Ok((sqrt_n * est.mean, Some(sqrt_n * est.std_error)))
                }
            }
        })?;
        for (r, &(v, se)) in values.iter().enumerate() {
            rows.push(ctx.row(SERIES, n, r, v, se));
        }

        let sample = EmpiricalDistribution::new(values.iter().map(|v| v.0).collect(), format!("N={n}"))?;
        let table = stats::moment_table(&sample, 4, cfg.bootstrap_reps, ctx.aux_seed(n, 0))?;
        let moments = table
            .orders
            .iter()
            .zip(table.values.iter().zip(&table.std_errors))
            .map(|(&order, (&value, &se))| {
                let estimate = Estimate::new(value, se);
                let limit = spec.moment(order);
                MomentComparison { order, estimate, limit, z: estimate.z_score(limit) }
            })
            .collect();
        let ks = stats::ks_distance(&sample, &reference)?;
        let w1 = stats::wasserstein1(&sample, &reference)?;
        let ks_se = stats::ks_bootstrap_se(&sample, &reference, cfg.bootstrap_reps, ctx.aux_seed(n, 1));
        let w1_se = stats::w1_bootstrap_se(&sample, &reference, cfg.bootstrap_reps, ctx.aux_seed(n, 2));
        let mean_mcmc_std_error = (method == Method::Mcmc)
            .then(|| stats::mean(&values.iter().map(|v| v.1.unwrap_or(0.0)).collect::<Vec<_>>()));
        blocks.push(FluctuationBlock {
            n,
            method,
            replicas: cfg.replicas,
            moments,
            ks: Estimate::new(ks, ks_se),
            w1: Estimate::new(w1, w1_se),
            ks_critical_1pct: stats::ks_critical_value(0.01, sample.len(), reference.len()),
            mean_mcmc_std_error,
        });
    }

    let summary = summarize(&blocks, reference_size);
    Ok((Blocks::Fluctuation { blocks, summary }, rows))
}

fn summarize(blocks: &[FluctuationBlock], reference_size: usize) -> FluctuationSummary {
    let ns: Vec<f64> = blocks.iter().map(|b| b.n as f64).collect();
    let ks: Vec<f64> = blocks.iter().map(|b| b.ks.value).collect();
    let gap = |order: usize| -> Vec<f64> {
        blocks.iter().map(|b| {
            let m = &b.moments[order - 1];
            (m.estimate.value - m.limit).abs()
        })
        .collect()
    };
    let max_abs_odd_z = blocks
        .iter()
        .flat_map(|b| b.moments.iter().filter(|m| m.order % 2 == 1).filter_map(|m| m.z))
        .map(f64::abs)
        .fold(None, |acc: Option<f64>, z| Some(acc.map_or(z, |a| a.max(z))));
    FluctuationSummary {
        reference_size,
        spearman_ks_vs_n: stats::spearman(&ns, &ks),
        spearman_moment_gap_vs_n: [2, 4].iter().map(|&o| (o, stats::spearman(&ns, &gap(o)))).collect(),
        max_abs_odd_z,
    }
}
