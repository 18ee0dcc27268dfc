//! Cavity equation residuals, the standardized cavity field and moments of
//! `m_ii`.

use crate::gibbs::{Conditioning, Request};
use crate::seed::{derive_seed, rng_from_seed};
use crate::stats::{self, EmpiricalDistribution};

use super::report::{Blocks, CavityBlock, CavitySummary, SampleRow, StandardizedField};
use super::{Context, Result};

use rand::Rng;
use rand_distr::StandardNormal;

const MIN_REFERENCE: usize = 100_000;

struct Replica {
    residual: f64,
    field: f64,
    t_q: f64,
    m_ii: f64,
}

pub(super) fn run(ctx: &Context) -> Result<(Blocks, Vec<SampleRow>)> {
    let cfg = ctx.config;
    let (i, _) = cfg.pair0();
    let t = cfg.t;
    let predicted_mii = ctx.solution.sech_moment(2)?;
    let predicted_mii_squared = ctx.solution.mu;
    let reference_size = (10 * cfg.replicas).max(MIN_REFERENCE);
    let mut rng = rng_from_seed(derive_seed(cfg.master_seed, &[ctx.kind.stream(), u64::MAX]));
    let normal = EmpiricalDistribution::new(
        (0..reference_size).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        "normal",
    )?;

    let mut blocks = Vec::new();
    let mut rows = Vec::new();
    for n in ctx.grid() {
        ctx.require_exact(n)?;
        let params = ctx.params(n)?;
        let per: Vec<Replica> = ctx.map_replicas(|r| {
            let disorder = ctx.disorder(&params, n, r);
            let full = ctx.solver.report(&params, &disorder, &Conditioning::none(), &[] as &[Request])?;
            let cav = ctx.solver.cavity_moments(&params, &disorder, &[i], false)?;
            let (mut field, mut q) = (0.0, 0.0);
            for k in (0..n).filter(|&k| k != i) {
                let mk = cav.magnetization(k).expect("free");
                field += disorder.coupling(i, k) * mk;
                q += mk * mk;
            }
            let m_i = full.magnetization(i).expect("free");
            Ok(Replica {
                residual: m_i - (params.h + field).tanh(),
                field,
                t_q: t * q / n as f64,
                m_ii: 1.0 - m_i * m_i,
            })
        })?;

        let z: Vec<Option<f64>> = per.iter().map(|p| (p.t_q > 0.0).then(|| p.field / p.t_q.sqrt())).collect();
        for (r, p) in per.iter().enumerate() {
            rows.push(ctx.row("cavity_residual", n, r, p.residual, None));
        }
        for (r, zr) in z.iter().enumerate() {
            if let Some(v) = zr {
                rows.push(ctx.row("cavity_z", n, r, *v, None));
            }
        }
        for (r, p) in per.iter().enumerate() {
            rows.push(ctx.row("cavity_mii", n, r, p.m_ii, None));
        }

        let residuals: Vec<f64> = per.iter().map(|p| p.residual).collect();
        let pooled: Vec<f64> = z.iter().flatten().copied().collect();
        let degenerate_replicas = per.len() - pooled.len();
        let standardized_field = if pooled.is_empty() {
            None
        } else {
            let dist = EmpiricalDistribution::new(pooled.clone(), format!("Z N={n}"))?;
            Some(StandardizedField {
                mean: Context::mean_estimate(&pooled),
                variance: stats::variance(&pooled),
                ks: stats::ks_distance(&dist, &normal)?,
                ks_critical_1pct: stats::ks_critical_value(0.01, dist.len(), normal.len()),
            })
        };
        let fields: Vec<f64> = per.iter().map(|p| p.field).collect();
        let tq: Vec<f64> = per.iter().map(|p| p.t_q).collect();
        let mii: Vec<f64> = per.iter().map(|p| p.m_ii).collect();
        let mii2: Vec<f64> = mii.iter().map(|m| m * m).collect();
        blocks.push(CavityBlock {
            n,
            residual_rms: ctx.rms_estimate(&residuals, n, 0),
            standardized_field,
            degenerate_replicas,
            raw_field_variance: stats::variance(&fields),
            mean_t_q_cavity: stats::mean(&tq),
            mean_mii: Context::mean_estimate(&mii),
            predicted_mii,
            mean_mii_squared: Context::mean_estimate(&mii2),
            predicted_mii_squared,
        });
    }

    let ns: Vec<f64> = blocks.iter().map(|b| b.n as f64).collect();
    let rms: Vec<f64> = blocks.iter().map(|b| b.residual_rms.value).collect();
    let residual_loglog_slope =
        (ns.len() >= 2 && rms.iter().all(|&r| r > 0.0)).then(|| stats::loglog_slope(&ns, &rms).0);
    let summary = CavitySummary { spearman_residual_vs_n: stats::spearman(&ns, &rms), residual_loglog_slope };
    Ok((Blocks::Cavity { blocks, summary }, rows))
}
