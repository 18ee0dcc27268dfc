//! Empirical distributions, two-sample distances and moment tables with
//! bootstrap uncertainties.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::{derive_seed, rng_from_seed};

pub const DEFAULT_BOOTSTRAP_REPS: usize = 1000;
pub const MAX_MOMENT_ORDER: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("empty sample")]
    EmptySample,
    #[error("sample '{label}' contains a non-finite value at position {index}")]
    NonFinite { label: String, index: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, StatsError>;

/// A sorted sample of finite reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    samples: Vec<f64>,
    pub label: String,
}

impl EmpiricalDistribution {
    pub fn new(mut samples: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if let Some(index) = samples.iter().position(|x| !x.is_finite()) {
            return Err(StatsError::NonFinite { label, index });
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { samples, label })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Fraction of samples `<= x`.
    pub fn cdf(&self, x: f64) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.partition_point(|&s| s <= x) as f64 / self.samples.len() as f64
    }

    fn non_empty(&self) -> Result<&[f64]> {
        if self.samples.is_empty() {
            Err(StatsError::EmptySample)
        } else {
            Ok(&self.samples)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub orders: Vec<usize>,
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
}

impl MomentTable {
    pub fn get(&self, order: usize) -> Option<(f64, f64)> {
        self.orders.iter().position(|&o| o == order).map(|i| (self.values[i], self.std_errors[i]))
    }
}

/// Sup-distance between the two empirical CDFs.
pub fn ks_distance(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> Result<f64> {
    Ok(ks_sorted(a.non_empty()?, b.non_empty()?))
}

fn ks_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// `L¹` distance between quantile functions, integrated exactly over the
/// common refinement of the two step functions.
pub fn wasserstein1(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> Result<f64> {
    Ok(w1_sorted(a.non_empty()?, b.non_empty()?))
}

fn w1_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len() as u64, b.len() as u64);
    if n == m {
        return a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / n as f64;
    }
    // Breakpoints in units of 1/(n·m).
    let total = (n * m) as f64;
    let (mut i, mut j) = (0u64, 0u64);
    let mut prev = 0u64;
    let mut sum = 0.0;
    while i < n && j < m {
        let next_a = (i + 1) * m;
        let next_b = (j + 1) * n;
        let next = next_a.min(next_b);
        sum += (next - prev) as f64 * (a[i as usize] - b[j as usize]).abs();
        prev = next;
        if next_a == next {
            i += 1;
        }
        if next_b == next {
            j += 1;
        }
    }
    sum / total
}

/// Two-sample KS critical value `c(α)·√((n+m)/(n·m))` with
/// `c(α) = √(−ln(α/2)/2)`.
pub fn ks_critical_value(alpha: f64, n: usize, m: usize) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Raw moment of a sorted sample. Extremes are summed in pairs so that odd
/// moments of a sign-symmetric sample cancel exactly.
fn raw_moment_sorted(x: &[f64], order: i32) -> f64 {
    let n = x.len();
    let mut sum = 0.0;
    for k in 0..n / 2 {
        sum += x[k].powi(order) + x[n - 1 - k].powi(order);
    }
    if n % 2 == 1 {
        sum += x[n / 2].powi(order);
    }
    sum / n as f64
}

/// Raw moments `1..=max_order` with bootstrap standard errors; replicate `r`
/// draws from the seed derived from `(seed, r)`.
pub fn moment_table(
    a: &EmpiricalDistribution,
    max_order: usize,
    bootstrap_reps: usize,
    seed: u64,
) -> Result<MomentTable> {
    let x = a.non_empty()?;
    if max_order == 0 || max_order > MAX_MOMENT_ORDER {
        return Err(StatsError::InvalidArgument(format!("max_order {max_order} not in 1..={MAX_MOMENT_ORDER}")));
    }
    let orders: Vec<usize> = (1..=max_order).collect();
    let values: Vec<f64> = orders.iter().map(|&o| raw_moment_sorted(x, o as i32)).collect();
    let n = x.len();
    let reps: Vec<Vec<f64>> = (0..bootstrap_reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from_seed(derive_seed(seed, &[r as u64]));
            let mut sums = vec![0.0; max_order];
            for _ in 0..n {
                let v = x[rng.random_range(0..n)];
                let mut p = 1.0;
                for s in sums.iter_mut() {
                    p *= v;
                    *s += p;
                }
            }
            sums.iter().map(|s| s / n as f64).collect()
        })
        .collect();
    let std_errors = (0..max_order)
        .map(|k| {
            let col: Vec<f64> = reps.iter().map(|r| r[k]).collect();
            std_dev(&col)
        })
        .collect();
    Ok(MomentTable { orders, values, std_errors })
}

/// Bootstrap standard error of an arbitrary statistic.
pub fn bootstrap_se<F>(x: &[f64], reps: usize, seed: u64, stat: F) -> f64
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if x.is_empty() || reps < 2 {
        return 0.0;
    }
    let n = x.len();
    let values: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from_seed(derive_seed(seed, &[r as u64]));
            let resample: Vec<f64> = (0..n).map(|_| x[rng.random_range(0..n)]).collect();
            stat(&resample)
        })
        .collect();
    std_dev(&values)
}

/// Bootstrap standard error of the KS distance, resampling `a` only.
pub fn ks_bootstrap_se(a: &EmpiricalDistribution, reference: &EmpiricalDistribution, reps: usize, seed: u64) -> f64 {
    let b = reference.samples();
    bootstrap_se(a.samples(), reps, seed, |x| {
        let mut s = x.to_vec();
        s.sort_by(f64::total_cmp);
        ks_sorted(&s, b)
    })
}

/// Bootstrap standard error of the W1 distance, resampling `a` only.
pub fn w1_bootstrap_se(a: &EmpiricalDistribution, reference: &EmpiricalDistribution, reps: usize, seed: u64) -> f64 {
    let b = reference.samples();
    bootstrap_se(a.samples(), reps, seed, |x| {
        let mut s = x.to_vec();
        s.sort_by(f64::total_cmp);
        w1_sorted(&s, b)
    })
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

pub fn std_dev(x: &[f64]) -> f64 {
    variance(x).sqrt()
}

/// `√(mean(x²))`.
pub fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut k = 0;
    while k < idx.len() {
        let mut e = k;
        while e + 1 < idx.len() && x[idx[e + 1]] == x[idx[k]] {
            e += 1;
        }
        let avg = (k + e) as f64 / 2.0 + 1.0;
        for &i in &idx[k..=e] {
            r[i] = avg;
        }
        k = e + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, my) = (mean(&rx), mean(&ry));
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

/// Ordinary least squares `y ≈ a + b x`; returns `(a, b, se_b)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let sse: f64 = x.iter().zip(y).map(|(u, v)| (v - a - b * u).powi(2)).sum();
    let se_b = if n > 2.0 { (sse / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    (a, b, se_b)
}

/// Slope of `ln y` against `ln x` with its standard error.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (_, b, se) = linear_fit(&lx, &ly);
    (b, se)
}

/// Nonnegative least squares for `y ≈ a·u + b·v`; returns `(a, b, rss)`.
pub fn nnls2(u: &[f64], v: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let dot = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(a, b)| a * b).sum::<f64>();
    let rss = |a: f64, b: f64| u.iter().zip(v).zip(y).map(|((p, q), r)| (r - a * p - b * q).powi(2)).sum::<f64>();
    let (uu, vv, uv, uy, vy) = (dot(u, u), dot(v, v), dot(u, v), dot(u, y), dot(v, y));
    let det = uu * vv - uv * uv;
    if det.abs() > 1e-300 {
        let a = (vv * uy - uv * vy) / det;
        let b = (uu * vy - uv * uy) / det;
        if a >= 0.0 && b >= 0.0 {
            return (a, b, rss(a, b));
        }
    }
    let a_only = if uu > 0.0 { (uy / uu).max(0.0) } else { 0.0 };
    let b_only = if vv > 0.0 { (vy / vv).max(0.0) } else { 0.0 };
    let (ra, rb) = (rss(a_only, 0.0), rss(0.0, b_only));
    if ra <= rb {
        (a_only, 0.0, ra)
    } else {
        (0.0, b_only, rb)
    }
}
