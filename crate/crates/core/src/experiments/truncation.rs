//! Residuals of the truncated path expansion of `√N m_ij`.

use crate::gibbs::{Conditioning, Request};
use crate::stats;

use super::report::{Blocks, Comparison, SampleRow, TruncationBlock, TruncationSummary};
use super::{Context, Result};

pub(super) fn run(ctx: &Context) -> Result<(Blocks, Vec<SampleRow>)> {
    let cfg = ctx.config;
    let depth = cfg.depth;
    let (i, j) = cfg.pair0();
    let mut blocks = Vec::new();
    let mut rows = Vec::new();
    for n in ctx.grid() {
        ctx.require_exact(n)?;
        let params = ctx.params(n)?;
        let sqrt_n = (n as f64).sqrt();
        // Per replica: (√N m_ij, residual per depth, key residual).
        let per: Vec<(f64, Vec<f64>, f64)> = ctx.map_replicas(|r| {
            let disorder = ctx.disorder(&params, n, r);
            let rep = ctx.solver.report(&params, &disorder, &Conditioning::none(), &[Request::Pair(i, j)])?;
            let target = sqrt_n * rep.covariance(i, j).expect("requested");
            let bundle = ctx.bundle(&params, &disorder, depth)?;
            let mut partial = 0.0;
            let residuals: Vec<f64> = bundle
                .x_vector
                .iter()
                .map(|x| {
                    partial += x;
                    target - partial
                })
                .collect();
            let key = residuals[depth] - sqrt_n * bundle.remainder_a;
            Ok((target, residuals, key))
        })?;

        for m in 0..=depth {
            for (r, p) in per.iter().enumerate() {
                rows.push(ctx.row(format!("truncation_m{m}"), n, r, p.1[m], None));
            }
        }
        for (r, p) in per.iter().enumerate() {
            rows.push(ctx.row("truncation_key", n, r, p.2, None));
        }

        let rms_by_depth: Vec<_> = (0..=depth)
            .map(|m| {
                let col: Vec<f64> = per.iter().map(|p| p.1[m]).collect();
                ctx.rms_estimate(&col, n, m as u64)
            })
            .collect();
        let keys: Vec<f64> = per.iter().map(|p| p.2).collect();
        let targets: Vec<f64> = per.iter().map(|p| p.0).collect();
        let depth_monotonicity = rms_by_depth
            .windows(2)
            .enumerate()
            .map(|(m, w)| Comparison::expect_greater(format!("rms(m={m}) >= rms(m={})", m + 1), w[0], w[1]))
            .collect();
        blocks.push(TruncationBlock {
            n,
            key_residual_rms: ctx.rms_estimate(&keys, n, 1000),
            sqrt_n_mij_rms: ctx.rms_estimate(&targets, n, 1001),
            rms_by_depth,
            depth_monotonicity,
        });
    }

    let summary = summarize(ctx, &blocks);
    Ok((Blocks::Truncation { blocks, summary }, rows))
}

fn summarize(ctx: &Context, blocks: &[TruncationBlock]) -> TruncationSummary {
    let t = ctx.config.t;
    let (mut u, mut v, mut y) = (Vec::new(), Vec::new(), Vec::new());
    for b in blocks {
        for (m, e) in b.rms_by_depth.iter().enumerate() {
            u.push(1.0 / (b.n as f64).sqrt());
            v.push(t.powf(m as f64 / 2.0));
            y.push(e.value);
        }
    }
    let (fit_a, fit_b, fit_rss) = stats::nnls2(&u, &v, &y);
    let depth = ctx.config.depth;
    let floor_shrinks = blocks
        .windows(2)
        .map(|w| {
            Comparison::expect_greater(
                format!("rms_N={}(m={depth}) >= rms_N={}(m={depth})", w[0].n, w[1].n),
                w[0].rms_by_depth[depth],
                w[1].rms_by_depth[depth],
            )
        })
        .collect();
    TruncationSummary { fit_a, fit_b, fit_rss, floor_shrinks }
}
