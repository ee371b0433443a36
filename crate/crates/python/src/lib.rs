//! Python bindings for the `riskshare` core crate.

use nalgebra::DMatrix;
use pyo3::exceptions::{PyIndexError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use riskshare::cli::{self, ScenarioFile};
use riskshare::validation::{self, McConfig};
use riskshare::{Elasticity, MarketModel, TraderProfile};
use serde_json::Value;

fn to_py_err(e: riskshare::Error) -> PyErr {
    match e {
        riskshare::Error::TraderIndex { .. } => PyIndexError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

/// JSON value to Python objects; the "inf" token becomes `float("inf")`.
fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) if s == "inf" => f64::INFINITY.into_pyobject(py)?.into_any(),
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(xs) => {
            let items = xs.iter().map(|x| to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_any()
        }
        Value::Object(m) => {
            let d = PyDict::new(py);
            for (k, x) in m {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_any()
        }
    })
}

/// A market: security covariance plus one entry per trader.
#[pyclass(name = "Market", module = "riskshare")]
struct PyMarket {
    model: MarketModel,
}

impl PyMarket {
    fn build_report(&self) -> PyResult<Value> {
        let analysis = cli::run_analysis(&self.model).map_err(to_py_err)?;
        let scenario = ScenarioFile::from_model(&self.model);
        Ok(cli::report_document(&scenario, &self.model, &analysis))
    }

    fn section<'py>(&self, py: Python<'py>, key: &str) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.build_report()?[key])
    }
}

#[pymethods]
impl PyMarket {
    #[new]
    #[pyo3(signature = (securities_cov, cov_es, deltas, endowment_means=None, endowment_vars=None, total_endowment_var=None))]
    fn new(
        securities_cov: Vec<Vec<f64>>,
        cov_es: Vec<Vec<f64>>,
        deltas: Vec<f64>,
        endowment_means: Option<Vec<f64>>,
        endowment_vars: Option<Vec<f64>>,
        total_endowment_var: Option<f64>,
    ) -> PyResult<Self> {
        let n = deltas.len();
        let means = endowment_means.unwrap_or_else(|| vec![0.0; n]);
        let vars = endowment_vars.unwrap_or_else(|| vec![0.0; n]);
        if cov_es.len() != n || means.len() != n || vars.len() != n {
            return Err(PyValueError::new_err("per-trader sequences must have the same length"));
        }
        let k = securities_cov.len();
        if securities_cov.iter().any(|r| r.len() != k) {
            return Err(PyValueError::new_err("securities_cov must be square"));
        }
        let cov = DMatrix::from_fn(k, k, |r, c| securities_cov[r][c]);
        let traders = (0..n)
            .map(|i| TraderProfile::new(deltas[i], cov_es[i].clone()).with_endowment(means[i], vars[i]))
            .collect();
        let mut model = MarketModel::new(cov, traders);
        model.total_endowment_var = total_endowment_var;
        model.check().map_err(to_py_err)?;
        Ok(Self { model })
    }

    /// One security with the given betas (which must sum to one).
    #[staticmethod]
    #[pyo3(signature = (deltas, betas, market_var=1.0, aggregate_var=1.0))]
    fn with_betas(deltas: Vec<f64>, betas: Vec<f64>, market_var: f64, aggregate_var: f64) -> PyResult<Self> {
        let model = MarketModel::with_betas(&deltas, &betas, market_var, aggregate_var).map_err(to_py_err)?;
        Ok(Self { model })
    }

    /// Reads a scenario document.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let scenario = ScenarioFile::from_json(text).map_err(|e| PyValueError::new_err(e.message))?;
        let model = scenario.to_model().map_err(|e| PyValueError::new_err(e.message))?;
        model.check().map_err(to_py_err)?;
        Ok(Self { model })
    }

    fn to_json(&self) -> String {
        ScenarioFile::from_model(&self.model).to_json()
    }

    #[getter]
    fn num_traders(&self) -> usize {
        self.model.num_traders()
    }

    #[getter]
    fn num_securities(&self) -> usize {
        self.model.num_securities()
    }

    /// `a`, `beta`, `lambda`, aggregate variance and the trivial flag.
    fn exposures<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        self.section(py, "exposures")
    }

    fn competitive<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        self.section(py, "competitive")
    }

    /// Nash equilibrium; risk-neutral elasticities are `float("inf")`.
    fn nash<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        self.section(py, "nash")
    }

    /// Utility differences between the two equilibria, or None when unsolved.
    fn compare<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        self.section(py, "comparison")
    }

    /// The full report written by `riskshare analyze`.
    fn report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.build_report()?)
    }

    /// Best response of `trader` to the others' total elasticity.
    /// Returns `(theta, k, value, branch)`.
    fn best_response(&self, trader: usize, theta_rest: f64) -> PyResult<(f64, f64, f64, String)> {
        let e = self.model.exposures().map_err(to_py_err)?;
        let rest = Elasticity::new(theta_rest).map_err(to_py_err)?;
        let r = riskshare::best_response(&e, trader, rest).map_err(to_py_err)?;
        let branch = serde_json::to_value(r.branch).expect("branch serializes");
        Ok((r.theta.value(), r.k, r.value, branch.as_str().unwrap_or_default().to_string()))
    }

    /// Checks the equilibrium against the grid, iteration and Monte-Carlo
    /// oracles. Returns `(kind, [(name, status, detail), ...])`.
    #[pyo3(signature = (samples=1_000_000, seed=42))]
    fn validate(&self, samples: usize, seed: u64) -> PyResult<(String, Vec<(String, String, String)>)> {
        let opts = cli::ValidateOptions {
            samples,
            seed,
            tol_override: None,
        };
        let (s, checks) = cli::validate_model(&self.model, &opts).map_err(to_py_err)?;
        let rows = checks
            .into_iter()
            .map(|c| {
                let status = serde_json::to_value(c.status).expect("status serializes");
                (c.name, status.as_str().unwrap_or_default().to_string(), c.detail)
            })
            .collect();
        Ok((s.kind.name().to_string(), rows))
    }

    fn __repr__(&self) -> String {
        format!(
            "Market(traders={}, securities={})",
            self.model.num_traders(),
            self.model.num_securities()
        )
    }
}

/// Monte-Carlo estimate of `-delta log E[exp(-X / delta)]` for normal `X`.
/// Returns `(estimate, std_error, reliable)`.
#[pyfunction]
#[pyo3(signature = (mean, variance, delta, samples=1_000_000, seed=42))]
fn mc_certainty_equivalent(mean: f64, variance: f64, delta: f64, samples: usize, seed: u64) -> PyResult<(f64, f64, bool)> {
    let cfg = McConfig::new(samples, seed).map_err(to_py_err)?;
    let r = validation::mc_certainty_equivalent(mean, variance, delta, &cfg).map_err(to_py_err)?;
    Ok((r.estimate, r.std_error, r.reliable))
}

/// Closed-form certainty equivalent `mean - variance / (2 delta)`.
#[pyfunction]
fn certainty_equivalent(mean: f64, variance: f64, delta: f64) -> PyResult<f64> {
    riskshare::market::certainty_equivalent(mean, variance, delta).map_err(to_py_err)
}

#[pymodule(name = "riskshare")]
fn riskshare_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMarket>()?;
    m.add_function(wrap_pyfunction!(mc_certainty_equivalent, m)?)?;
    m.add_function(wrap_pyfunction!(certainty_equivalent, m)?)?;
    Ok(())
}
