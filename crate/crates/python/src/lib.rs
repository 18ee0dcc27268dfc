//! Python module `skcov`: fixed point, limit law, exact Gibbs moments, the
//! path expansion and the replica experiments. Vertex indices are 1-based.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use skcov_core::experiments::{run_experiment, ExperimentConfig, ExperimentKind};
use skcov_core::fixed_point::{self, LimitLawSpec, SolverOptions};
use skcov_core::gibbs::{Conditioning, Disorder, ExactSolver, ModelParams, Request};
use skcov_core::paths::PathExpansion;
use skcov_core::sampler::{glauber_estimate, McmcConfig, Target};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn zero_based(n: usize, i: usize) -> PyResult<usize> {
    if i == 0 || i > n {
        return Err(PyValueError::new_err(format!("index {i} is not in 1..={n}")));
    }
    Ok(i - 1)
}

/// Replica-symmetric fixed point as a dict.
#[pyfunction]
#[pyo3(signature = (t, h, tol = fixed_point::DEFAULT_TOL, order = fixed_point::DEFAULT_ORDER))]
fn solve_q<'py>(py: Python<'py>, t: f64, h: f64, tol: f64, order: usize) -> PyResult<Bound<'py, PyDict>> {
    let opts = SolverOptions { order, ..SolverOptions::default() };
    let s = fixed_point::solve_q_with(t, h, tol, &opts).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("q", s.q)?;
    d.set_item("mu", s.mu)?;
    d.set_item("at_value", s.at_value)?;
    d.set_item("limit_scale", s.limit_scale)?;
    d.set_item("iterations", s.iterations)?;
    d.set_item("residual", s.residual)?;
    Ok(d)
}

/// Raw limit-law moments of orders `1..=max_order`.
#[pyfunction]
#[pyo3(signature = (t, h, max_order = 4))]
fn limit_moments(t: f64, h: f64, max_order: usize) -> PyResult<Vec<f64>> {
    let s = fixed_point::solve_q(t, h, fixed_point::DEFAULT_TOL).map_err(value_err)?;
    Ok(fixed_point::limit_moments(&s, max_order).map_err(value_err)?.values)
}

#[pyfunction]
fn limit_sample(py: Python<'_>, t: f64, h: f64, count: usize, seed: u64) -> PyResult<Vec<f64>> {
    let s = fixed_point::solve_q(t, h, fixed_point::DEFAULT_TOL).map_err(value_err)?;
    let spec = LimitLawSpec::new(s).map_err(value_err)?;
    Ok(py.detach(|| fixed_point::limit_law_sample(&spec, count, seed)))
}

/// One seeded disorder draw of the SK model.
#[pyclass(module = "skcov")]
struct Model {
    params: ModelParams,
    disorder: Disorder,
}

#[pymethods]
impl Model {
    #[new]
    fn new(n: usize, t: f64, h: f64, seed: u64) -> PyResult<Self> {
        let params = ModelParams::new(n, t, h).map_err(value_err)?;
        Ok(Self { disorder: Disorder::sample(&params, seed), params })
    }

    #[getter]
    fn n(&self) -> usize {
        self.params.n
    }

    /// `g_ij`.
    fn coupling(&self, i: usize, j: usize) -> PyResult<f64> {
        let n = self.params.n;
        Ok(self.disorder.coupling(zero_based(n, i)?, zero_based(n, j)?))
    }

    fn log_z(&self, py: Python<'_>) -> PyResult<f64> {
        let r = py
            .detach(|| ExactSolver::default().report(&self.params, &self.disorder, &Conditioning::none(), &[]))
            .map_err(value_err)?;
        Ok(r.log_z)
    }

    /// Exact magnetizations `m_1, …, m_N`.
    fn magnetizations(&self, py: Python<'_>) -> PyResult<Vec<f64>> {
        let r = py
            .detach(|| ExactSolver::default().report(&self.params, &self.disorder, &Conditioning::none(), &[]))
            .map_err(value_err)?;
        Ok((0..self.params.n).map(|k| r.magnetization(k).expect("free")).collect())
    }

    /// Exact connected covariance `m_ij`.
    fn covariance(&self, py: Python<'_>, i: usize, j: usize) -> PyResult<f64> {
        let n = self.params.n;
        let (a, b) = (zero_based(n, i)?, zero_based(n, j)?);
        let r = py
            .detach(|| {
                ExactSolver::default().report(&self.params, &self.disorder, &Conditioning::none(), &[Request::Pair(a, b)])
            })
            .map_err(value_err)?;
        r.covariance(a, b).ok_or_else(|| value_err("pair not available"))
    }

    /// Path expansion terms: dict with `t_terms`, `x_vector`, `remainder_a`,
    /// `prefactor`.
    fn bundle<'py>(&self, py: Python<'py>, i: usize, j: usize, depth: usize) -> PyResult<Bound<'py, PyDict>> {
        let n = self.params.n;
        let (a, b) = (zero_based(n, i)?, zero_based(n, j)?);
        let bundle = py
            .detach(|| PathExpansion::new(self.params, &self.disorder).compute_bundle(a, b, depth))
            .map_err(value_err)?;
        let d = PyDict::new(py);
        d.set_item("t_terms", bundle.t_terms)?;
        d.set_item("x_vector", bundle.x_vector)?;
        d.set_item("remainder_a", bundle.remainder_a)?;
        d.set_item("prefactor", bundle.prefactor)?;
        Ok(d)
    }

    /// Heat-bath estimate of `m_ij` as `(mean, std_error)`.
    #[allow(clippy::too_many_arguments)]
    #[pyo3(signature = (i, j, sweeps = 20_000, burn_in = 2_000, chains = 4, seed = 0))]
    fn glauber_covariance(
        &self,
        py: Python<'_>,
        i: usize,
        j: usize,
        sweeps: usize,
        burn_in: usize,
        chains: usize,
        seed: u64,
    ) -> PyResult<(f64, f64)> {
        let n = self.params.n;
        let target = Target::Covariance(zero_based(n, i)?, zero_based(n, j)?);
        let cfg = McmcConfig { sweeps, burn_in, thinning: 1, chains, seed };
        let est = py
            .detach(|| glauber_estimate(&self.params, &self.disorder, &[target], &cfg))
            .map_err(value_err)?;
        let e = est[&target];
        Ok((e.mean, e.std_error))
    }
}

/// Runs an experiment from a TOML config string and returns the report as
/// JSON text.
#[pyfunction]
#[pyo3(signature = (kind, config = "", workers = None))]
fn run(py: Python<'_>, kind: &str, config: &str, workers: Option<usize>) -> PyResult<String> {
    let kind: ExperimentKind = kind.parse().map_err(value_err)?;
    let cfg = ExperimentConfig::from_toml_str(config).map_err(value_err)?;
    let out = py.detach(|| run_experiment(kind, &cfg, workers)).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    serde_json::to_string(&out.report).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn skcov(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(solve_q, m)?)?;
    m.add_function(wrap_pyfunction!(limit_moments, m)?)?;
    m.add_function(wrap_pyfunction!(limit_sample, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_class::<Model>()?;
    Ok(())
}
