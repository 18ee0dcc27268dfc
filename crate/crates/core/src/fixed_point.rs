//! Replica-symmetric fixed point `q = E tanh²(h + √(tq) Z)`, the companion
//! quantity `μ = E sech⁴(h + √(tq) Z)`, the AT value `tμ`, and the limit
//! law `V = √(t/(1−tμ)) Z₁ sech²(h+√(tq)Z₂) sech²(h+√(tq)Z₃)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{GaussHermite, QuadratureError};
use crate::seed::rng_from_seed;
use crate::stats::MomentTable;

pub const DEFAULT_ORDER: usize = 64;
pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 10_000;
/// Highest moment order supported by [`limit_moments`].
pub const MAX_MOMENT_ORDER: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FixedPointError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("fixed-point iteration did not converge after {iterations} steps (last change {last_change:e})")]
    NoConvergence { iterations: usize, last_change: f64 },
    #[error("AT condition violated: t·μ = {at_value} >= 1")]
    ATViolation { at_value: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

pub type Result<T> = std::result::Result<T, FixedPointError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub order: usize,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { order: DEFAULT_ORDER, max_iter: DEFAULT_MAX_ITER }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSolution {
    pub t: f64,
    pub h: f64,
    pub q: f64,
    pub mu: f64,
    /// `t·μ`; the limit law requires this to be below one.
    pub at_value: f64,
    /// `√(t/(1−tμ))`, absent when the AT condition fails.
    pub limit_scale: Option<f64>,
    pub iterations: usize,
    /// `|E tanh²(h+√(tq)Z) − q|` re-evaluated at twice the quadrature order.
    pub residual: f64,
    pub order: usize,
}

impl FixedPointSolution {
    pub fn at_holds(&self) -> bool {
        self.at_value < 1.0
    }

    /// `E sech^power(h + √(tq) Z)`.
    pub fn sech_moment(&self, power: i32) -> Result<f64> {
        let rule = GaussHermite::new(self.order)?;
        shifted_expectation(&rule, self.h, (self.t * self.q).sqrt(), |x| sech(x).powi(power))
    }
}

fn sech(x: f64) -> f64 {
    1.0 / x.cosh()
}

/// `E f(h + s Z)`; a degenerate shift is evaluated without quadrature.
fn shifted_expectation<F: Fn(f64) -> f64>(rule: &GaussHermite, h: f64, s: f64, f: F) -> Result<f64> {
    if s == 0.0 {
        let v = f(h);
        if !v.is_finite() {
            return Err(QuadratureError::NonFiniteFunctionValue { node: 0.0 }.into());
        }
        return Ok(v);
    }
    Ok(rule.expectation(|z| f(h + s * z))?)
}

pub fn solve_q(t: f64, h: f64, tol: f64) -> Result<FixedPointSolution> {
    solve_q_with(t, h, tol, &SolverOptions::default())
}

/// Plain fixed-point iteration from `q₀ = tanh²(h)` until successive
/// iterates differ by less than `tol`.
pub fn solve_q_with(t: f64, h: f64, tol: f64, opts: &SolverOptions) -> Result<FixedPointSolution> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(FixedPointError::InvalidParameter(format!("t = {t} must be finite and >= 0")));
    }
    if !h.is_finite() {
        return Err(FixedPointError::InvalidParameter(format!("h = {h} must be finite")));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(FixedPointError::InvalidParameter(format!("tol = {tol} must be > 0")));
    }
    let rule = GaussHermite::new(opts.order)?;
    let map = |rule: &GaussHermite, q: f64| shifted_expectation(rule, h, (t * q).sqrt(), |x| x.tanh().powi(2));

    let (q, iterations) = if h == 0.0 {
        (0.0, 0)
    } else {
        let mut q = h.tanh().powi(2);
        let mut it = 0;
        loop {
            if it >= opts.max_iter {
                let last_change = (map(&rule, q)? - q).abs();
                return Err(FixedPointError::NoConvergence { iterations: it, last_change });
            }
            let next = map(&rule, q)?.clamp(0.0, 1.0);
            it += 1;
            let change = (next - q).abs();
            q = next;
            if change < tol {
                break;
            }
        }
        (q, it)
    };

    let fine = GaussHermite::new(2 * opts.order)?;
    let residual = if h == 0.0 { 0.0 } else { (map(&fine, q)? - q).abs() };
    let mu = shifted_expectation(&rule, h, (t * q).sqrt(), |x| sech(x).powi(4))?;
    let at_value = t * mu;
    let limit_scale = (at_value < 1.0).then(|| (t / (1.0 - at_value)).sqrt());
    Ok(FixedPointSolution { t, h, q, mu, at_value, limit_scale, iterations, residual, order: opts.order })
}

/// A solved fixed point inside the AT region together with its cached even
/// limit moments `E V^{2k}`, `k = 1..=4`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitLawSpec {
    pub solution: FixedPointSolution,
    pub even_moments: [f64; 4],
}

impl LimitLawSpec {
    pub fn new(solution: FixedPointSolution) -> Result<Self> {
        let scale = solution.limit_scale.ok_or(FixedPointError::ATViolation { at_value: solution.at_value })?;
        let variance = scale * scale;
        let mut even_moments = [0.0; 4];
        for (idx, m) in even_moments.iter_mut().enumerate() {
            let k = idx as i32 + 1;
            let sech_part = solution.sech_moment(4 * k)?;
            *m = variance.powi(k) * double_factorial(2 * k - 1) * sech_part * sech_part;
        }
        Ok(Self { solution, even_moments })
    }

    pub fn scale(&self) -> f64 {
        self.solution.limit_scale.expect("validated at construction")
    }

    /// Raw moment `E V^order`, `order ≤ 8`.
    pub fn moment(&self, order: usize) -> f64 {
        match order {
            0 => 1.0,
            o if o % 2 == 1 => 0.0,
            o => self.even_moments[o / 2 - 1],
        }
    }
}

fn double_factorial(n: i32) -> f64 {
    (1..=n).rev().step_by(2).map(f64::from).product()
}

/// `count` i.i.d. draws of the limit law, three normals per draw.
pub fn limit_law_sample(spec: &LimitLawSpec, count: usize, seed: u64) -> Vec<f64> {
    let s = spec.solution;
    let scale = spec.scale();
    let shift = (s.t * s.q).sqrt();
    let mut rng = rng_from_seed(seed);
    (0..count)
        .map(|_| {
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let z3: f64 = rng.sample(StandardNormal);
            scale * z1 * sech(s.h + shift * z2).powi(2) * sech(s.h + shift * z3).powi(2)
        })
        .collect()
}

/// Raw moments `1..=max_order` of the limit law; odd moments are zero.
pub fn limit_moments(solution: &FixedPointSolution, max_order: usize) -> Result<MomentTable> {
    if max_order == 0 || max_order > MAX_MOMENT_ORDER {
        return Err(FixedPointError::InvalidParameter(format!(
            "max_order = {max_order} must lie in 1..={MAX_MOMENT_ORDER}"
        )));
    }
    let spec = LimitLawSpec::new(*solution)?;
    let orders: Vec<usize> = (1..=max_order).collect();
    let values = orders.iter().map(|&o| spec.moment(o)).collect();
    Ok(MomentTable { orders, values, std_errors: vec![0.0; max_order] })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_field_short_circuit() {
        let s = solve_q(0.3, 0.0, 1e-12).unwrap();
        assert_eq!(s.q, 0.0);
        assert_eq!(s.mu, 1.0);
        assert_eq!(s.at_value, 0.3);
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn zero_coupling_needs_no_averaging() {
        let s = solve_q(0.0, 0.7, 1e-12).unwrap();
        assert!((s.q - 0.7f64.tanh().powi(2)).abs() < 1e-15);
        assert!((s.mu - sech(0.7).powi(4)).abs() < 1e-15);
        assert_eq!(s.limit_scale, Some(0.0));
    }

    #[test]
    fn at_violation_is_reported_not_raised() {
        let s = solve_q(1.5, 0.0, 1e-12).unwrap();
        assert!(!s.at_holds());
        assert_eq!(s.limit_scale, None);
        assert!(matches!(LimitLawSpec::new(s), Err(FixedPointError::ATViolation { .. })));
        assert!(matches!(limit_moments(&s, 4), Err(FixedPointError::ATViolation { .. })));
    }

    #[test]
    fn iteration_cap_reports_no_convergence() {
        let opts = SolverOptions { order: 32, max_iter: 2 };
        assert!(matches!(
            solve_q_with(0.4, 0.3, 1e-14, &opts),
            Err(FixedPointError::NoConvergence { iterations: 2, .. })
        ));
    }

    #[test]
    fn zero_field_moments_are_gaussian() {
        let s = solve_q(0.2, 0.0, 1e-12).unwrap();
        let m = limit_moments(&s, 4).unwrap();
        let var = 0.2 / 0.8;
        assert!((m.values[1] - var).abs() < 1e-15);
        assert!((m.values[3] / (m.values[1] * m.values[1]) - 3.0).abs() < 1e-12);
        assert_eq!(m.values[0], 0.0);
        assert_eq!(m.values[2], 0.0);
    }

    #[test]
    fn second_moment_matches_closed_form() {
        let s = solve_q(0.2, 0.4, 1e-12).unwrap();
        let m = limit_moments(&s, 2).unwrap();
        let expected = s.t * s.mu * s.mu / (1.0 - s.t * s.mu);
        assert!((m.values[1] - expected).abs() < 1e-14);
    }

    #[test]
    fn sample_is_seeded() {
        let spec = LimitLawSpec::new(solve_q(0.2, 0.4, 1e-12).unwrap()).unwrap();
        assert_eq!(limit_law_sample(&spec, 100, 3), limit_law_sample(&spec, 100, 3));
        assert_ne!(limit_law_sample(&spec, 100, 3), limit_law_sample(&spec, 100, 4));
    }

    #[test]
    fn rejects_invalid_inputs() {
        assert!(solve_q(-0.1, 0.2, 1e-12).is_err());
        assert!(solve_q(0.1, f64::NAN, 1e-12).is_err());
        assert!(solve_q(0.1, 0.2, 0.0).is_err());
        let s = solve_q(0.1, 0.2, 1e-12).unwrap();
        assert!(limit_moments(&s, 9).is_err());
        assert!(limit_moments(&s, 0).is_err());
    }
}
