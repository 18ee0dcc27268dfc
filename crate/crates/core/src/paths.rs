//! Self-avoiding path expansion of the spin covariance `m_ij`.
//!
//! A path `γ = (i, k_1, …, k_n, j)` carries the weight
//!
//! ```text
//! w(γ) = g_{i k_1} m_{k_1 k_1}^{(i,j)} g_{k_1 k_2} m_{k_2 k_2}^{(i,k_1,j)} ⋯ m_{k_n k_n}^{(i,k_1,…,k_{n-1},j)} g_{k_n j}
//! ```
//!
//! where `m_kk^(B) = 1 − (m_k^(B))²` is the diagonal covariance of the
//! cavity system with the set `B` removed (`w = g_ij` for the bare edge).
//! `T_{n+1} = √N Σ_{|γ|=n+1} w(γ)` and `X_n = m_ii m_jj^(i) T_{n+1}`.
//!
//! The remainder `A_{M+1}` replaces the last segment
//! `m_{k_M k_M} g_{k_M k_{M+1}} m_{k_{M+1} k_{M+1}}` of each path of length
//! `M+2` by the cavity covariance `m_{k_M k_{M+1}}^{(i,k_1,…,k_{M-1},j)}`.
//! For `M = 0` it is `m_ii Σ_{k≠i,j} g_ik m_kj^(i)`.
//!
//! Cavity moments are memoized per disorder keyed by the sorted removed set,
//! which is all that a cavity weight depends on.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gibbs::{CavityMoments, Disorder, ExactSolver, GibbsError, ModelParams};

pub const DEFAULT_KEY_CAP: u64 = 200_000;
pub const DEFAULT_PATH_CAP: u64 = 100_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("invalid endpoints ({}, {}) for {n} vertices", .i + 1, .j + 1)]
    InvalidEndpoints { i: usize, j: usize, n: usize },
    #[error("interior length {len} needs at least {} vertices, have {n}", .len + 2)]
    InvalidLength { len: usize, n: usize },
    #[error("vertex {} is part of its own cavity or out of range", .0 + 1)]
    InvalidCavity(usize),
    #[error("budget exceeded: {paths} paths and {cavity_keys} cavity keys requested (key cap {key_cap}, path cap {path_cap})")]
    BudgetExceeded { paths: u64, cavity_keys: u64, key_cap: u64, path_cap: u64 },
    #[error(transparent)]
    Gibbs(#[from] GibbsError),
}

pub type Result<T> = std::result::Result<T, PathError>;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SelfAvoidingPath {
    pub start: usize,
    pub end: usize,
    pub interior: Vec<usize>,
}

impl SelfAvoidingPath {
    /// Number of edges.
    pub fn len(&self) -> usize {
        self.interior.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn vertices(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.start).chain(self.interior.iter().copied()).chain(std::iter::once(self.end))
    }
}

/// `(n−2)(n−3)⋯(n−1−len)`, the number of paths with `len` interior vertices.
pub fn path_count(n_vertices: usize, interior_len: usize) -> u64 {
    (0..interior_len).map(|l| n_vertices.saturating_sub(2 + l) as u64).product()
}

/// Streams all self-avoiding paths from `i` to `j` with `interior_len`
/// interior vertices in lexicographic order of the interior.
pub fn enumerate_paths(n_vertices: usize, i: usize, j: usize, interior_len: usize) -> Result<PathIter> {
    if i == j || i >= n_vertices || j >= n_vertices {
        return Err(PathError::InvalidEndpoints { i, j, n: n_vertices });
    }
    if n_vertices < interior_len + 2 {
        return Err(PathError::InvalidLength { len: interior_len, n: n_vertices });
    }
    let mut used = vec![false; n_vertices];
    used[i] = true;
    used[j] = true;
    Ok(PathIter { i, j, interior: Vec::with_capacity(interior_len), len: interior_len, used, state: IterState::Fresh })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum IterState {
    Fresh,
    Running,
    Done,
}

#[derive(Debug, Clone)]
pub struct PathIter {
    i: usize,
    j: usize,
    interior: Vec<usize>,
    len: usize,
    used: Vec<bool>,
    state: IterState,
}

impl PathIter {
    /// Fills positions `interior.len()..len` with the smallest unused vertices.
    fn fill(&mut self) {
        let mut c = 0;
        while self.interior.len() < self.len {
            while self.used[c] {
                c += 1;
            }
            self.used[c] = true;
            self.interior.push(c);
        }
    }

    fn advance(&mut self) -> bool {
        while let Some(last) = self.interior.pop() {
            self.used[last] = false;
            if let Some(next) = ((last + 1)..self.used.len()).find(|&c| !self.used[c]) {
                self.used[next] = true;
                self.interior.push(next);
                self.fill();
                return true;
            }
        }
        false
    }
}

impl Iterator for PathIter {
    type Item = SelfAvoidingPath;

    fn next(&mut self) -> Option<SelfAvoidingPath> {
        match self.state {
            IterState::Done => return None,
            IterState::Fresh => {
                self.fill();
                self.state = IterState::Running;
            }
            IterState::Running => {
                if !self.advance() {
                    self.state = IterState::Done;
                    return None;
                }
            }
        }
        Some(SelfAvoidingPath { start: self.i, end: self.j, interior: self.interior.clone() })
    }
}

/// Terms of the truncated path expansion for one disorder draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathTermBundle {
    /// `T_{n+1}`, `n = 0..=M`.
    pub t_terms: Vec<f64>,
    /// `X_n = m_ii · m_jj^(i) · T_{n+1}`.
    pub x_vector: Vec<f64>,
    /// `A_{M+1}` (not rescaled by `√N`).
    pub remainder_a: f64,
    /// `(m_ii, m_jj^(i))`.
    pub prefactor: (f64, f64),
}

#[derive(Debug, Default, Clone, Copy)]
struct KahanSum {
    sum: f64,
    c: f64,
}

impl KahanSum {
    fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }
}

type Cache = RwLock<HashMap<Vec<usize>, Arc<CavityMoments>>>;

/// Path-expansion evaluator bound to one disorder draw.
pub struct PathExpansion<'a> {
    params: ModelParams,
    disorder: &'a Disorder,
    solver: ExactSolver,
    memoize: bool,
    key_cap: u64,
    path_cap: u64,
    vertex_cache: Cache,
    pair_cache: Cache,
    enumerations: AtomicUsize,
}

impl<'a> PathExpansion<'a> {
    pub fn new(params: ModelParams, disorder: &'a Disorder) -> Self {
        Self {
            params,
            disorder,
            solver: ExactSolver::default(),
            memoize: true,
            key_cap: DEFAULT_KEY_CAP,
            path_cap: DEFAULT_PATH_CAP,
            vertex_cache: RwLock::new(HashMap::new()),
            pair_cache: RwLock::new(HashMap::new()),
            enumerations: AtomicUsize::new(0),
        }
    }

    pub fn with_memoization(mut self, on: bool) -> Self {
        self.memoize = on;
        self
    }

    pub fn with_solver(mut self, solver: ExactSolver) -> Self {
        self.solver = solver;
        self
    }

    pub fn with_budget(mut self, key_cap: u64, path_cap: u64) -> Self {
        self.key_cap = key_cap;
        self.path_cap = path_cap;
        self
    }

    /// Number of Gibbs enumerations performed so far.
    pub fn enumerations(&self) -> usize {
        self.enumerations.load(Ordering::Relaxed)
    }

    fn moments(&self, cavity: &[usize], pairs: bool) -> Result<Arc<CavityMoments>> {
        let mut key = cavity.to_vec();
        key.sort_unstable();
        let cache = if pairs { &self.pair_cache } else { &self.vertex_cache };
        if self.memoize {
            if let Some(m) = cache.read().expect("cache lock").get(&key) {
                return Ok(Arc::clone(m));
            }
        }
        let m = Arc::new(self.solver.cavity_moments(&self.params, self.disorder, &key, pairs)?);
        self.enumerations.fetch_add(1, Ordering::Relaxed);
        if self.memoize {
            let mut w = cache.write().expect("cache lock");
            return Ok(Arc::clone(w.entry(key).or_insert(m)));
        }
        Ok(m)
    }

    fn check_vertex(&self, k: usize, cavity: &[usize]) -> Result<()> {
        if k >= self.params.n || cavity.contains(&k) || cavity.iter().any(|&c| c >= self.params.n) {
            return Err(PathError::InvalidCavity(k));
        }
        Ok(())
    }

    /// `m_kk^(cavity) = 1 − (m_k^(cavity))²`.
    pub fn cavity_vertex_weight(&self, k: usize, cavity: &[usize]) -> Result<f64> {
        self.check_vertex(k, cavity)?;
        let m = self.moments(cavity, false)?;
        Ok(m.diagonal(k).expect("vertex is free"))
    }

    /// Connected covariance `m_kl^(cavity)`.
    pub fn cavity_covariance(&self, k: usize, l: usize, cavity: &[usize]) -> Result<f64> {
        self.check_vertex(k, cavity)?;
        self.check_vertex(l, cavity)?;
        let m = self.moments(cavity, true)?;
        Ok(m.covariance(k, l).expect("pair accumulated"))
    }

    /// `w(γ)` evaluated factor by factor.
    pub fn path_weight(&self, path: &SelfAvoidingPath) -> Result<f64> {
        let n = self.params.n;
        let mut seen = vec![false; n];
        for v in path.vertices() {
            if v >= n || seen[v] {
                return Err(PathError::InvalidEndpoints { i: path.start, j: path.end, n });
            }
            seen[v] = true;
        }
        let g = |a: usize, b: usize| self.disorder.coupling(a, b);
        if path.interior.is_empty() {
            return Ok(g(path.start, path.end));
        }
        let mut cavity = vec![path.start, path.end];
        let mut w = 1.0;
        let mut prev = path.start;
        for &k in &path.interior {
            w = w * g(prev, k) * self.cavity_vertex_weight(k, &cavity)?;
            cavity.push(k);
            prev = k;
        }
        Ok(w * g(prev, path.end))
    }

    /// Predicted `(paths, cavity keys)` for a bundle of depth `m`.
    pub fn cost(&self, m: usize) -> (u64, u64) {
        let n = self.params.n as u64;
        let free = n.saturating_sub(2);
        let paths: u64 = (0..=m + 1).map(|l| path_count(self.params.n, l)).sum();
        let mut keys: u64 = 2;
        for l in 1..=m as u64 {
            keys += binomial(free, l - 1) * free.saturating_sub(l - 1);
        }
        keys += if m == 0 {
            free
        } else {
            let rest = free.saturating_sub(m as u64 - 1);
            binomial(free, m as u64 - 1) * rest * rest.saturating_sub(1)
        };
        (paths, keys)
    }

    /// `T_{n+1}` for `n ≤ m`, the prefactor, `X^{(m)}` and `A_{m+1}`.
    pub fn compute_bundle(&self, i: usize, j: usize, m: usize) -> Result<PathTermBundle> {
        let n = self.params.n;
        if i == j || i >= n || j >= n {
            return Err(PathError::InvalidEndpoints { i, j, n });
        }
        if n < m + 3 {
            return Err(PathError::InvalidLength { len: m + 1, n });
        }
        let (paths, cavity_keys) = self.cost(m);
        if paths > self.path_cap || cavity_keys > self.key_cap {
            return Err(PathError::BudgetExceeded { paths, cavity_keys, key_cap: self.key_cap, path_cap: self.path_cap });
        }

        let full = self.moments(&[], false)?;
        let m_ii = full.diagonal(i).expect("free");
        let m_jj = self.cavity_vertex_weight(j, &[i])?;

        let mut sums = vec![KahanSum::default(); m + 1];
        let mut rem = KahanSum::default();
        if m == 0 {
            let cav = self.moments(&[i], true)?;
            for k in (0..n).filter(|&k| k != i && k != j) {
                rem.add(self.disorder.coupling(i, k) * cav.covariance(k, j).expect("free"));
            }
        }
        let mut used = vec![false; n];
        used[i] = true;
        used[j] = true;
        let mut cavity = vec![i, j];
        self.descend(j, m, i, 1.0, &mut used, &mut cavity, &mut sums, &mut rem)?;

        let sqrt_n = (n as f64).sqrt();
        let mut t_terms: Vec<f64> = sums.iter().map(|s| sqrt_n * s.sum).collect();
        t_terms[0] = sqrt_n * self.disorder.coupling(i, j);
        let x_vector = t_terms.iter().map(|&t| m_ii * m_jj * t).collect();
        let remainder_a = if m == 0 { m_ii * rem.sum } else { m_ii * m_jj * rem.sum };
        Ok(PathTermBundle { t_terms, x_vector, remainder_a, prefactor: (m_ii, m_jj) })
    }

    /// Depth-first walk over path prefixes. `cavity` is `[i, j, k_1, …, k_d]`
    /// and `prefix` the weight of `(i, k_1, …, k_d)` including the cavity
    /// factor of `k_d`.
    #[allow(clippy::too_many_arguments)]
    fn descend(
        &self,
        j: usize,
        m: usize,
        last: usize,
        prefix: f64,
        used: &mut [bool],
        cavity: &mut Vec<usize>,
        sums: &mut [KahanSum],
        rem: &mut KahanSum,
    ) -> Result<()> {
        let depth = cavity.len() - 2;
        let n = self.params.n;
        let g = |a: usize, b: usize| self.disorder.coupling(a, b);
        if depth > 0 {
            sums[depth].add(prefix * g(last, j));
        }
        if m >= 1 && depth == m - 1 {
            let cov = self.moments(cavity, true)?;
            for a in (0..n).filter(|&a| !used[a]) {
                let head = prefix * g(last, a);
                for b in (0..n).filter(|&b| !used[b] && b != a) {
                    rem.add(head * cov.covariance(a, b).expect("free") * g(b, j));
                }
            }
        }
        if depth < m {
            let weights = self.moments(cavity, false)?;
            for k in 0..n {
                if used[k] {
                    continue;
                }
                let w = prefix * g(last, k) * weights.diagonal(k).expect("free");
                used[k] = true;
                cavity.push(k);
                let r = self.descend(j, m, k, w, used, cavity, sums, rem);
                cavity.pop();
                used[k] = false;
                r?;
            }
        }
        Ok(())
    }
}

fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u64, |acc, r| acc * (n - r) / (r + 1))
}

pub fn cavity_vertex_weight(k: usize, cavity: &[usize], disorder: &Disorder, params: &ModelParams) -> Result<f64> {
    PathExpansion::new(*params, disorder).cavity_vertex_weight(k, cavity)
}

pub fn path_weight(path: &SelfAvoidingPath, disorder: &Disorder, params: &ModelParams) -> Result<f64> {
    PathExpansion::new(*params, disorder).path_weight(path)
}

pub fn compute_bundle(i: usize, j: usize, m: usize, disorder: &Disorder, params: &ModelParams) -> Result<PathTermBundle> {
    PathExpansion::new(*params, disorder).compute_bundle(i, j, m)
}
