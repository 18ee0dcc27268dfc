//! Exact Gibbs measures of the SK Hamiltonian by full enumeration.
//!
//! The Hamiltonian is `H(σ) = Σ_{i<j} g_ij σ_i σ_j + h Σ_i σ_i` and the Gibbs
//! weight is `exp(H)`. A [`Conditioning`] clamps a set of spins to fixed
//! values (they then act on the remaining spins through an effective field)
//! and removes another set entirely (the cavity). All expectations are
//! computed exactly over the `2^K` configurations of the `K` free spins.
//!
//! Vertices are 0-based in this API.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::rng_from_seed;

/// Default upper bound on the number of enumerated free spins.
pub const DEFAULT_ENUMERATION_CAP: usize = 24;

/// Above this many free spins the Gray-code walk is split into
/// `2^CHUNK_BITS` sub-cubes merged in index order.
const CHUNK_THRESHOLD: usize = 16;
const CHUNK_BITS: usize = 4;

/// Weights are kept as `exp(E - shift)`; the shift is raised only when an
/// energy exceeds it by more than this margin.
const RESCALE_MARGIN: f64 = 50.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GibbsError {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("disorder has {disorder} spins but the model has {params}")]
    DimensionMismatch { params: usize, disorder: usize },
    #[error("couplings are not symmetric with zero diagonal at ({}, {})", .0 + 1, .1 + 1)]
    InvalidCouplings(usize, usize),
    #[error("invalid conditioning: {0}")]
    InvalidConditioning(String),
    #[error("{free} free spins exceed the enumeration cap of {cap}")]
    FreeSpinCountExceeded { free: usize, cap: usize },
    #[error("vertex {} is clamped or removed", .0 + 1)]
    IndexNotFree(usize),
    #[error("vertex {} is out of range for {n} spins", .index + 1)]
    IndexOutOfRange { index: usize, n: usize },
}

pub type Result<T> = std::result::Result<T, GibbsError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: usize,
    pub t: f64,
    pub h: f64,
}

impl ModelParams {
    pub fn new(n: usize, t: f64, h: f64) -> Result<Self> {
        let p = Self { n, t, h };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(GibbsError::InvalidParams("n must be at least 1".into()));
        }
        if !(self.t.is_finite() && self.t >= 0.0) {
            return Err(GibbsError::InvalidParams(format!("t = {} must be finite and >= 0", self.t)));
        }
        if !self.h.is_finite() {
            return Err(GibbsError::InvalidParams(format!("h = {} must be finite", self.h)));
        }
        Ok(())
    }

    pub fn with_n(self, n: usize) -> Self {
        Self { n, ..self }
    }
}

/// A symmetric coupling matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Disorder {
    n: usize,
    couplings: Vec<f64>,
    seed: Option<u64>,
}

impl Disorder {
    /// Draws `g_ij`, `i < j`, i.i.d. `N(0, t/n)` in row-major upper-triangle order.
    pub fn sample(params: &ModelParams, seed: u64) -> Self {
        let n = params.n;
        let scale = (params.t / n as f64).sqrt();
        let mut rng = rng_from_seed(seed);
        let mut couplings = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let z: f64 = rng.sample(StandardNormal);
                let g = scale * z;
                couplings[i * n + j] = g;
                couplings[j * n + i] = g;
            }
        }
        Self { n, couplings, seed: Some(seed) }
    }

    /// Builds a disorder from an explicit row-major `n × n` matrix.
    pub fn from_matrix(n: usize, couplings: Vec<f64>) -> Result<Self> {
        if couplings.len() != n * n {
            return Err(GibbsError::InvalidParams(format!(
                "expected {} coupling entries, got {}",
                n * n,
                couplings.len()
            )));
        }
        for i in 0..n {
            if couplings[i * n + i] != 0.0 {
                return Err(GibbsError::InvalidCouplings(i, i));
            }
            for j in (i + 1)..n {
                let g = couplings[i * n + j];
                if !g.is_finite() || g != couplings[j * n + i] {
                    return Err(GibbsError::InvalidCouplings(i, j));
                }
            }
        }
        Ok(Self { n, couplings, seed: None })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    #[inline]
    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        self.couplings[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.couplings[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.couplings
    }
}

pub fn sample_disorder(params: &ModelParams, seed: u64) -> Disorder {
    Disorder::sample(params, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub fn value(self) -> f64 {
        match self {
            Spin::Up => 1.0,
            Spin::Down => -1.0,
        }
    }
}

/// A clamped set `A` with spin values and a removed (cavity) set `B`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Conditioning {
    clamped: BTreeMap<usize, Spin>,
    removed: BTreeSet<usize>,
}

impl Conditioning {
    /// No clamped and no removed spins.
    pub fn none() -> Self {
        Self::default()
    }

    pub fn cavity<I: IntoIterator<Item = usize>>(removed: I) -> Self {
        Self { clamped: BTreeMap::new(), removed: removed.into_iter().collect() }
    }

    pub fn with_clamp(mut self, vertex: usize, spin: Spin) -> Self {
        self.clamped.insert(vertex, spin);
        self
    }

    pub fn with_removed(mut self, vertex: usize) -> Self {
        self.removed.insert(vertex);
        self
    }

    pub fn clamped(&self) -> &BTreeMap<usize, Spin> {
        &self.clamped
    }

    pub fn removed(&self) -> &BTreeSet<usize> {
        &self.removed
    }

    pub fn is_free(&self, v: usize) -> bool {
        !self.clamped.contains_key(&v) && !self.removed.contains(&v)
    }

    pub fn free_vertices(&self, n: usize) -> Vec<usize> {
        (0..n).filter(|&v| self.is_free(v)).collect()
    }

    /// Checks disjointness, ranges and that at least one spin stays free.
    pub fn validate(&self, n: usize) -> Result<()> {
        self.validate_sets(n)?;
        if self.clamped.len() + self.removed.len() + 1 > n {
            return Err(GibbsError::InvalidConditioning(
                "at least one spin must remain free".into(),
            ));
        }
        Ok(())
    }

    fn validate_sets(&self, n: usize) -> Result<()> {
        for &v in self.clamped.keys().chain(self.removed.iter()) {
            if v >= n {
                return Err(GibbsError::IndexOutOfRange { index: v, n });
            }
        }
        if let Some(v) = self.clamped.keys().find(|v| self.removed.contains(v)) {
            return Err(GibbsError::InvalidConditioning(format!(
                "vertex {} is both clamped and removed",
                v + 1
            )));
        }
        Ok(())
    }
}

/// Extra observables accumulated in a [`gibbs_report`] pass. Magnetizations
/// of all free spins are always reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Request {
    Pair(usize, usize),
    Triple(usize, usize, usize),
    AllPairs,
}

/// A scalar read off a conditional Gibbs measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observable {
    Constant(f64),
    Magnetization(usize),
    Covariance(usize, usize),
    ThreePoint(usize, usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsReport {
    pub log_z: f64,
    pub magnetizations: BTreeMap<usize, f64>,
    /// Connected two-point functions, stored under both `(i, j)` and `(j, i)`.
    pub pair_covariances: BTreeMap<(usize, usize), f64>,
    /// Third joint cumulants, keyed by the requested index order.
    pub three_point: BTreeMap<(usize, usize, usize), f64>,
}

impl GibbsReport {
    pub fn magnetization(&self, i: usize) -> Option<f64> {
        self.magnetizations.get(&i).copied()
    }

    pub fn covariance(&self, i: usize, j: usize) -> Option<f64> {
        self.pair_covariances.get(&(i, j)).copied()
    }

    pub fn three_point(&self, i: usize, j: usize, k: usize) -> Option<f64> {
        self.three_point.get(&(i, j, k)).copied()
    }
}

/// Dense moments of a cavity system, indexed by global vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct CavityMoments {
    n: usize,
    removed: Vec<bool>,
    pub log_z: f64,
    magnetizations: Vec<f64>,
    covariances: Option<Vec<f64>>,
}

impl CavityMoments {
    pub fn magnetization(&self, k: usize) -> Option<f64> {
        (!self.removed[k]).then(|| self.magnetizations[k])
    }

    /// `1 - m_k²`.
    pub fn diagonal(&self, k: usize) -> Option<f64> {
        self.magnetization(k).map(|m| 1.0 - m * m)
    }

    /// Connected two-point function; `None` if not accumulated or not free.
    pub fn covariance(&self, k: usize, l: usize) -> Option<f64> {
        if self.removed[k] || self.removed[l] {
            return None;
        }
        if k == l {
            return self.diagonal(k);
        }
        self.covariances.as_ref().map(|c| c[k * self.n + l])
    }
}

/// Enumeration front end carrying the free-spin cap.
#[derive(Debug, Clone, Copy)]
pub struct ExactSolver {
    pub cap: usize,
}

impl Default for ExactSolver {
    fn default() -> Self {
        Self { cap: DEFAULT_ENUMERATION_CAP }
    }
}

impl ExactSolver {
    pub fn with_cap(cap: usize) -> Self {
        Self { cap }
    }

    pub fn report(
        &self,
        params: &ModelParams,
        disorder: &Disorder,
        cond: &Conditioning,
        requests: &[Request],
    ) -> Result<GibbsReport> {
        check_model(params, disorder)?;
        cond.validate(params.n)?;
        self.report_unchecked(params, disorder, cond, requests)
    }

    /// As [`report`](Self::report) but allows zero free spins.
    fn report_unchecked(
        &self,
        params: &ModelParams,
        disorder: &Disorder,
        cond: &Conditioning,
        requests: &[Request],
    ) -> Result<GibbsReport> {
        let n = params.n;
        let check = |v: usize| -> Result<()> {
            if v >= n {
                Err(GibbsError::IndexOutOfRange { index: v, n })
            } else if !cond.is_free(v) {
                Err(GibbsError::IndexNotFree(v))
            } else {
                Ok(())
            }
        };
        for r in requests {
            match *r {
                Request::Pair(i, j) => {
                    check(i)?;
                    check(j)?;
                }
                Request::Triple(i, j, k) => {
                    check(i)?;
                    check(j)?;
                    check(k)?;
                }
                Request::AllPairs => {}
            }
        }

        let system = System::build(params, disorder, cond);
        if system.len() > self.cap {
            return Err(GibbsError::FreeSpinCountExceeded { free: system.len(), cap: self.cap });
        }
        let mut local = vec![usize::MAX; n];
        for (a, &v) in system.free.iter().enumerate() {
            local[v] = a;
        }

        let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
        let mut triples: BTreeSet<(usize, usize, usize)> = BTreeSet::new();
        let add_pair = |a: usize, b: usize, pairs: &mut BTreeSet<_>| {
            if a != b {
                pairs.insert((a.min(b), a.max(b)));
            }
        };
        for r in requests {
            match *r {
                Request::Pair(i, j) => add_pair(local[i], local[j], &mut pairs),
                Request::Triple(i, j, k) => {
                    let (a, b, c) = (local[i], local[j], local[k]);
                    add_pair(a, b, &mut pairs);
                    add_pair(a, c, &mut pairs);
                    add_pair(b, c, &mut pairs);
                    if a != b && b != c && a != c {
                        let mut s = [a, b, c];
                        s.sort_unstable();
                        triples.insert((s[0], s[1], s[2]));
                    }
                }
                Request::AllPairs => {
                    for a in 0..system.len() {
                        for b in (a + 1)..system.len() {
                            pairs.insert((a, b));
                        }
                    }
                }
            }
        }
        let pairs: Vec<(usize, usize)> = pairs.into_iter().collect();
        let triples: Vec<(usize, usize, usize)> = triples.into_iter().collect();
        let acc = system.enumerate(&pairs, &triples);
        let z = acc.z;
        let mag: Vec<f64> = acc.s1.iter().map(|s| s / z).collect();
        let pair_raw: BTreeMap<(usize, usize), f64> =
            pairs.iter().zip(&acc.s2).map(|(&p, s)| (p, s / z)).collect();
        let triple_raw: BTreeMap<(usize, usize, usize), f64> =
            triples.iter().zip(&acc.s3).map(|(&p, s)| (p, s / z)).collect();

        // Raw moment of a product of local spins, using σ² = 1.
        let raw = |idx: &[usize]| -> f64 {
            let mut v = idx.to_vec();
            v.sort_unstable();
            let mut reduced = Vec::with_capacity(3);
            let mut k = 0;
            while k < v.len() {
                if k + 1 < v.len() && v[k] == v[k + 1] {
                    k += 2;
                } else {
                    reduced.push(v[k]);
                    k += 1;
                }
            }
            match reduced.as_slice() {
                [] => 1.0,
                [a] => mag[*a],
                [a, b] => pair_raw[&(*a, *b)],
                [a, b, c] => triple_raw[&(*a, *b, *c)],
                _ => unreachable!("at most three indices"),
            }
        };

        let mut report = GibbsReport {
            log_z: z.ln() + acc.shift,
            magnetizations: system.free.iter().zip(&mag).map(|(&v, &m)| (v, m)).collect(),
            pair_covariances: BTreeMap::new(),
            three_point: BTreeMap::new(),
        };
        let comp = system.components();
        let put_pair = |report: &mut GibbsReport, i: usize, j: usize| {
            let (a, b) = (local[i], local[j]);
            let c = if a == b {
                1.0 - mag[a] * mag[a]
            } else if comp[a] != comp[b] {
                0.0
            } else {
                raw(&[a, b]) - mag[a] * mag[b]
            };
            report.pair_covariances.insert((i, j), c);
            report.pair_covariances.insert((j, i), c);
        };
        for r in requests {
            match *r {
                Request::Pair(i, j) => put_pair(&mut report, i, j),
                Request::AllPairs => {
                    for &i in &system.free {
                        for &j in &system.free {
                            if i <= j {
                                put_pair(&mut report, i, j);
                            }
                        }
                    }
                }
                Request::Triple(i, j, k) => {
                    let (a, b, c) = (local[i], local[j], local[k]);
                    let value = if comp[a] != comp[b] || comp[b] != comp[c] {
                        0.0
                    } else {
                        raw(&[a, b, c])
                        - mag[a] * raw(&[b, c])
                        - mag[b] * raw(&[a, c])
                        - mag[c] * raw(&[a, b])
                        + 2.0 * mag[a] * mag[b] * mag[c]
                    };
                    report.three_point.insert((i, j, k), value);
                }
            }
        }
        Ok(report)
    }

    /// Magnetizations (and optionally all pair covariances) of the cavity
    /// system with `removed` spins deleted, as dense arrays.
    pub fn cavity_moments(
        &self,
        params: &ModelParams,
        disorder: &Disorder,
        removed: &[usize],
        with_pairs: bool,
    ) -> Result<CavityMoments> {
        check_model(params, disorder)?;
        let n = params.n;
        let cond = Conditioning::cavity(removed.iter().copied());
        cond.validate(n)?;
        let system = System::build(params, disorder, &cond);
        let k = system.len();
        if k > self.cap {
            return Err(GibbsError::FreeSpinCountExceeded { free: k, cap: self.cap });
        }
        let pairs: Vec<(usize, usize)> = if with_pairs {
            (0..k).flat_map(|a| ((a + 1)..k).map(move |b| (a, b))).collect()
        } else {
            Vec::new()
        };
        let acc = system.enumerate(&pairs, &[]);
        let z = acc.z;
        let mut removed_mask = vec![true; n];
        let mut magnetizations = vec![0.0; n];
        for (a, &v) in system.free.iter().enumerate() {
            removed_mask[v] = false;
            magnetizations[v] = acc.s1[a] / z;
        }
        let covariances = with_pairs.then(|| {
            let comp = system.components();
            let mut c = vec![0.0; n * n];
            for (&(a, b), s) in pairs.iter().zip(&acc.s2) {
                let (i, j) = (system.free[a], system.free[b]);
                let v = if comp[a] == comp[b] { s / z - magnetizations[i] * magnetizations[j] } else { 0.0 };
                c[i * n + j] = v;
                c[j * n + i] = v;
            }
            for &i in &system.free {
                c[i * n + i] = 1.0 - magnetizations[i] * magnetizations[i];
            }
            c
        });
        Ok(CavityMoments {
            n,
            removed: removed_mask,
            log_z: z.ln() + acc.shift,
            magnetizations,
            covariances,
        })
    }

    /// Half-difference and half-sum of `observable` with `i` clamped to ±1.
    pub fn delta_epsilon(
        &self,
        params: &ModelParams,
        disorder: &Disorder,
        cond: &Conditioning,
        i: usize,
        observable: Observable,
    ) -> Result<(f64, f64)> {
        check_model(params, disorder)?;
        cond.validate(params.n)?;
        if i >= params.n {
            return Err(GibbsError::IndexOutOfRange { index: i, n: params.n });
        }
        if !cond.is_free(i) {
            return Err(GibbsError::IndexNotFree(i));
        }
        let up = self.evaluate_unchecked(params, disorder, &cond.clone().with_clamp(i, Spin::Up), observable)?;
        let down =
            self.evaluate_unchecked(params, disorder, &cond.clone().with_clamp(i, Spin::Down), observable)?;
        Ok((0.5 * (up - down), 0.5 * (up + down)))
    }

    /// Value of `observable` under `⟨·⟩^[A,B]`. Clamped spins are constants:
    /// their magnetization is the clamped value and their connected
    /// correlations vanish.
    pub fn evaluate(
        &self,
        params: &ModelParams,
        disorder: &Disorder,
        cond: &Conditioning,
        observable: Observable,
    ) -> Result<f64> {
        check_model(params, disorder)?;
        cond.validate(params.n)?;
        self.evaluate_unchecked(params, disorder, cond, observable)
    }

    fn evaluate_unchecked(
        &self,
        params: &ModelParams,
        disorder: &Disorder,
        cond: &Conditioning,
        observable: Observable,
    ) -> Result<f64> {
        cond.validate_sets(params.n)?;
        let n = params.n;
        let check = |v: usize| -> Result<()> {
            if v >= n {
                Err(GibbsError::IndexOutOfRange { index: v, n })
            } else if cond.removed().contains(&v) {
                Err(GibbsError::IndexNotFree(v))
            } else {
                Ok(())
            }
        };
        let clamped = |v: usize| cond.clamped().get(&v).copied();
        match observable {
            Observable::Constant(c) => Ok(c),
            Observable::Magnetization(v) => {
                check(v)?;
                if let Some(s) = clamped(v) {
                    return Ok(s.value());
                }
                let r = self.report_unchecked(params, disorder, cond, &[])?;
                Ok(r.magnetizations[&v])
            }
            Observable::Covariance(a, b) => {
                check(a)?;
                check(b)?;
                if clamped(a).is_some() || clamped(b).is_some() {
                    return Ok(0.0);
                }
                let r = self.report_unchecked(params, disorder, cond, &[Request::Pair(a, b)])?;
                Ok(r.pair_covariances[&(a, b)])
            }
            Observable::ThreePoint(a, b, c) => {
                check(a)?;
                check(b)?;
                check(c)?;
                if [a, b, c].iter().any(|&v| clamped(v).is_some()) {
                    return Ok(0.0);
                }
                let r = self.report_unchecked(params, disorder, cond, &[Request::Triple(a, b, c)])?;
                Ok(r.three_point[&(a, b, c)])
            }
        }
    }

    /// `(1/n) Σ_{k∉B} (m_k^(B))²` for the cavity system without `removed`.
    pub fn overlap_q(&self, params: &ModelParams, disorder: &Disorder, removed: &[usize]) -> Result<f64> {
        let moments = self.cavity_moments(params, disorder, removed, false)?;
        let sum: f64 = (0..params.n).filter_map(|k| moments.magnetization(k)).map(|m| m * m).sum();
        Ok(sum / params.n as f64)
    }
}

pub fn gibbs_report(
    params: &ModelParams,
    disorder: &Disorder,
    cond: &Conditioning,
    requests: &[Request],
) -> Result<GibbsReport> {
    ExactSolver::default().report(params, disorder, cond, requests)
}

pub fn delta_epsilon(
    params: &ModelParams,
    disorder: &Disorder,
    cond: &Conditioning,
    i: usize,
    observable: Observable,
) -> Result<(f64, f64)> {
    ExactSolver::default().delta_epsilon(params, disorder, cond, i, observable)
}

pub fn overlap_q(params: &ModelParams, disorder: &Disorder, removed: &[usize]) -> Result<f64> {
    ExactSolver::default().overlap_q(params, disorder, removed)
}

fn check_model(params: &ModelParams, disorder: &Disorder) -> Result<()> {
    params.validate()?;
    if params.n != disorder.n() {
        return Err(GibbsError::DimensionMismatch { params: params.n, disorder: disorder.n() });
    }
    Ok(())
}

/// The free-spin subsystem of a conditioning: effective fields and the
/// local coupling block.
struct System {
    free: Vec<usize>,
    field: Vec<f64>,
    coupling: Vec<f64>,
}

struct Accumulator {
    shift: f64,
    z: f64,
    s1: Vec<f64>,
    s2: Vec<f64>,
    s3: Vec<f64>,
}

impl Accumulator {
    fn rescale(&mut self, new_shift: f64) {
        let f = (self.shift - new_shift).exp();
        self.z *= f;
        for s in self.s1.iter_mut().chain(self.s2.iter_mut()).chain(self.s3.iter_mut()) {
            *s *= f;
        }
        self.shift = new_shift;
    }

    fn merge(parts: Vec<Accumulator>) -> Accumulator {
        let shift = parts.iter().map(|p| p.shift).fold(f64::NEG_INFINITY, f64::max);
        let mut it = parts.into_iter();
        let mut total = it.next().expect("at least one chunk");
        total.rescale(shift);
        for mut p in it {
            p.rescale(shift);
            total.z += p.z;
            for (a, b) in total.s1.iter_mut().zip(&p.s1) {
                *a += b;
            }
            for (a, b) in total.s2.iter_mut().zip(&p.s2) {
                *a += b;
            }
            for (a, b) in total.s3.iter_mut().zip(&p.s3) {
                *a += b;
            }
        }
        total
    }
}

impl System {
    fn build(params: &ModelParams, disorder: &Disorder, cond: &Conditioning) -> Self {
        let free = cond.free_vertices(params.n);
        let k = free.len();
        let field = free
            .iter()
            .map(|&i| {
                params.h
                    + cond
                        .clamped()
                        .iter()
                        .map(|(&j, s)| disorder.coupling(i, j) * s.value())
                        .sum::<f64>()
            })
            .collect();
        let mut coupling = vec![0.0; k * k];
        for (a, &i) in free.iter().enumerate() {
            for (b, &j) in free.iter().enumerate() {
                coupling[a * k + b] = disorder.coupling(i, j);
            }
        }
        Self { free, field, coupling }
    }

    fn len(&self) -> usize {
        self.free.len()
    }

    /// Connected-component label of each free spin in the graph of nonzero
    /// couplings. Spins in different components are independent.
    fn components(&self) -> Vec<usize> {
        let k = self.len();
        let mut label: Vec<usize> = (0..k).collect();
        fn root(label: &mut [usize], mut a: usize) -> usize {
            while label[a] != a {
                label[a] = label[label[a]];
                a = label[a];
            }
            a
        }
        for a in 0..k {
            for b in (a + 1)..k {
                if self.coupling[a * k + b] != 0.0 {
                    let (ra, rb) = (root(&mut label, a), root(&mut label, b));
                    label[ra.max(rb)] = ra.min(rb);
                }
            }
        }
        (0..k).map(|a| root(&mut label, a)).collect()
    }

    fn enumerate(&self, pairs: &[(usize, usize)], triples: &[(usize, usize, usize)]) -> Accumulator {
        let k = self.len();
        let top = if k >= CHUNK_THRESHOLD { CHUNK_BITS } else { 0 };
        let chunks: Vec<u64> = (0..(1u64 << top)).collect();
        let parts: Vec<Accumulator> = if top == 0 {
            vec![self.walk(0, k, pairs, triples)]
        } else {
            chunks.par_iter().map(|&c| self.walk(c, k - top, pairs, triples)).collect()
        };
        Accumulator::merge(parts)
    }

    /// Reflected Gray-code walk over the lowest `low` spins; the remaining
    /// high spins are fixed by the bits of `chunk`.
    fn walk(&self, chunk: u64, low: usize, pairs: &[(usize, usize)], triples: &[(usize, usize, usize)]) -> Accumulator {
        let k = self.len();
        let mut s: Vec<f64> = (0..k)
            .map(|a| if a >= low && (chunk >> (a - low)) & 1 == 1 { 1.0 } else { -1.0 })
            .collect();
        // Local fields L_a = h_a + Σ_b J_ab s_b.
        let mut lf: Vec<f64> = (0..k)
            .map(|a| self.field[a] + (0..k).map(|b| self.coupling[a * k + b] * s[b]).sum::<f64>())
            .collect();
        let mut energy: f64 = (0..k)
            .map(|a| {
                self.field[a] * s[a]
                    + ((a + 1)..k).map(|b| self.coupling[a * k + b] * s[a] * s[b]).sum::<f64>()
            })
            .sum();

        let mut acc = Accumulator {
            shift: energy,
            z: 0.0,
            s1: vec![0.0; k],
            s2: vec![0.0; pairs.len()],
            s3: vec![0.0; triples.len()],
        };
        let steps: u64 = 1u64 << low;
        for step in 0..steps {
            if step > 0 {
                let a = step.trailing_zeros() as usize;
                let old = s[a];
                energy -= 2.0 * old * lf[a];
                let delta = -2.0 * old;
                let row = &self.coupling[a * k..(a + 1) * k];
                for (l, &j) in lf.iter_mut().zip(row) {
                    *l += j * delta;
                }
                s[a] = -old;
            }
            if energy > acc.shift + RESCALE_MARGIN {
                acc.rescale(energy);
            }
            let w = (energy - acc.shift).exp();
            acc.z += w;
            for (sum, &sa) in acc.s1.iter_mut().zip(&s) {
                *sum += w * sa;
            }
            for (sum, &(a, b)) in acc.s2.iter_mut().zip(pairs) {
                *sum += w * s[a] * s[b];
            }
            for (sum, &(a, b, c)) in acc.s3.iter_mut().zip(triples) {
                *sum += w * s[a] * s[b] * s[c];
            }
        }
        acc
    }
}
