//! Direct-sum reference implementation of conditional Gibbs moments.
//!
//! Loops over every configuration of the free spins, evaluates the full
//! Hamiltonian of the remaining system from scratch and accumulates plain
//! weighted sums. Deliberately naive: no Gray code, no incremental fields.

#![allow(dead_code)]

use std::collections::BTreeMap;

use skcov_core::gibbs::{Conditioning, Disorder, ModelParams};

pub struct Brute {
    pub log_z: f64,
    pub free: Vec<usize>,
    /// Gibbs means of all non-removed spins (clamped ones at their value).
    pub mean: BTreeMap<usize, f64>,
    pub second: BTreeMap<(usize, usize), f64>,
    pub third: BTreeMap<(usize, usize, usize), f64>,
}

impl Brute {
    pub fn magnetization(&self, i: usize) -> f64 {
        self.mean[&i]
    }

    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        self.second[&(i, j)] - self.mean[&i] * self.mean[&j]
    }

    /// Third joint cumulant.
    pub fn three_point(&self, i: usize, j: usize, k: usize) -> f64 {
        let e = |a: usize, b: usize| self.second[&(a, b)];
        let (mi, mj, mk) = (self.mean[&i], self.mean[&j], self.mean[&k]);
        self.third[&(i, j, k)] - mi * e(j, k) - mj * e(i, k) - mk * e(i, j) + 2.0 * mi * mj * mk
    }
}

/// `H(σ) = Σ_{i<j} g_ij σ_i σ_j + h Σ σ_i` over the non-removed vertices.
fn hamiltonian(params: &ModelParams, disorder: &Disorder, alive: &[usize], s: &[f64]) -> f64 {
    let mut e = 0.0;
    for (a, &u) in alive.iter().enumerate() {
        e += params.h * s[u];
        for &v in &alive[a + 1..] {
            e += disorder.coupling(u, v) * s[u] * s[v];
        }
    }
    e
}

pub fn brute(params: &ModelParams, disorder: &Disorder, cond: &Conditioning) -> Brute {
    let n = params.n;
    let alive: Vec<usize> = (0..n).filter(|v| !cond.removed().contains(v)).collect();
    let free: Vec<usize> = alive.iter().copied().filter(|v| !cond.clamped().contains_key(v)).collect();
    let mut s = vec![0.0; n];
    for (&v, sp) in cond.clamped() {
        s[v] = sp.value();
    }

    let energy_of = |s: &mut Vec<f64>, bits: u64| -> f64 {
        for (b, &v) in free.iter().enumerate() {
            s[v] = if bits >> b & 1 == 1 { 1.0 } else { -1.0 };
        }
        // Constant terms between clamped spins are not part of the
        // conditional measure.
        let mut e = hamiltonian(params, disorder, &alive, s);
        let clamped: Vec<usize> = cond.clamped().keys().copied().collect();
        for (a, &u) in clamped.iter().enumerate() {
            e -= params.h * s[u];
            for &v in &clamped[a + 1..] {
                e -= disorder.coupling(u, v) * s[u] * s[v];
            }
        }
        e
    };

    let states = 1u64 << free.len();
    let mut max_e = f64::NEG_INFINITY;
    for bits in 0..states {
        max_e = max_e.max(energy_of(&mut s, bits));
    }
    let mut z = 0.0;
    let mut m1 = vec![0.0; n];
    let mut m2 = vec![0.0; n * n];
    let mut m3 = vec![0.0; n * n * n];
    for bits in 0..states {
        let w = (energy_of(&mut s, bits) - max_e).exp();
        z += w;
        for &a in &alive {
            m1[a] += w * s[a];
            for &b in &alive {
                m2[a * n + b] += w * s[a] * s[b];
                for &c in &alive {
                    m3[(a * n + b) * n + c] += w * s[a] * s[b] * s[c];
                }
            }
        }
    }
    let mut out = Brute {
        log_z: z.ln() + max_e,
        free,
        mean: BTreeMap::new(),
        second: BTreeMap::new(),
        third: BTreeMap::new(),
    };
    for &a in &alive {
        out.mean.insert(a, m1[a] / z);
        for &b in &alive {
            out.second.insert((a, b), m2[a * n + b] / z);
            for &c in &alive {
                out.third.insert((a, b, c), m3[(a * n + b) * n + c] / z);
            }
        }
    }
    out
}

/// Relative-or-absolute closeness used throughout the oracle comparisons.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
