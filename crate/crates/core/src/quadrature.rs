//! Gauss–Hermite quadrature for expectations of a standard normal, built on
//! the `gauss-quad` rule for the weight `exp(-x²)`.

use std::num::NonZeroUsize;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("quadrature order must be at least 1")]
    ZeroOrder,
    #[error("integrand is not finite at node {node}")]
    NonFiniteFunctionValue { node: f64 },
}

/// Nodes and weights normalized so that `Σ w_k f(x_k) ≈ E f(Z)`, `Z ~ N(0, 1)`.
///
/// Exact for polynomials of degree up to `2·order − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(order: usize) -> Result<Self, QuadratureError> {
        let order = NonZeroUsize::new(order).ok_or(QuadratureError::ZeroOrder)?;
        let rule = gauss_quad::GaussHermite::new(order);
        let sqrt2 = std::f64::consts::SQRT_2;
        let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
        let mut pairs: Vec<(f64, f64)> = rule.iter().map(|&(x, w)| (sqrt2 * x, w * inv_sqrt_pi)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (mut nodes, mut weights): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        // Enforce the exact mirror symmetry of the rule.
        let n = nodes.len();
        for i in 0..n / 2 {
            let x = 0.5 * (nodes[n - 1 - i] - nodes[i]);
            let w = 0.5 * (weights[n - 1 - i] + weights[i]);
            (nodes[i], nodes[n - 1 - i]) = (-x, x);
            (weights[i], weights[n - 1 - i]) = (w, w);
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Ok(Self { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E f(Z)`.
    pub fn expectation<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64, QuadratureError> {
        let mut sum = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            let v = f(x);
            if !v.is_finite() {
                return Err(QuadratureError::NonFiniteFunctionValue { node: x });
            }
            sum += w * v;
        }
        Ok(sum)
    }
}

pub fn gauss_hermite_expectation<F: Fn(f64) -> f64>(f: F, order: usize) -> Result<f64, QuadratureError> {
    GaussHermite::new(order)?.expectation(f)
}
