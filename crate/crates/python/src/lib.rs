//! Python bindings for `supnorm-core`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use supnorm_core as core;
use supnorm_core::{ApproxOperator, DensitySpec, Grid, GridFunction, KernelSpec, Norm, SampleSet};

fn err(e: core::Error) -> PyErr {
    match e {
        core::Error::InvalidInput(_) | core::Error::Config(_) | core::Error::Domain(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    use serde_json::Value;
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (_, Some(u)) => u.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(a) => {
            let list = PyList::empty(py);
            for x in a {
                list.append(to_py(py, x)?)?;
            }
            list.into_any()
        }
        Value::Object(o) => {
            let d = PyDict::new(py);
            for (k, x) in o {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_any()
        }
    })
}

fn serialize<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let value = serde_json::to_value(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &value)
}

fn samples_of(values: Vec<f64>) -> SampleSet {
    SampleSet { values, seed: 0, source: "python".into() }
}

/// Catalog density by name, e.g. `"lipschitz-sine"` or `"laplace-2atom"`.
#[pyclass(name = "Density", frozen)]
struct PyDensity {
    spec: DensitySpec,
}

#[pymethods]
impl PyDensity {
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        Ok(Self { spec: DensitySpec::by_name(name).map_err(err)? })
    }

    #[getter]
    fn name(&self) -> String {
        self.spec.name.clone()
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.spec.alpha
    }

    #[getter]
    fn domain(&self) -> (f64, f64) {
        self.spec.domain
    }

    fn pdf(&self, x: f64) -> f64 {
        self.spec.pdf(x)
    }

    fn cdf(&self, x: f64) -> f64 {
        self.spec.cdf(x)
    }

    fn sample(&self, n: usize, seed: u64) -> PyResult<Vec<f64>> {
        Ok(self.spec.sample(n, seed).map_err(err)?.values)
    }

    fn __repr__(&self) -> String {
        format!("Density({:?})", self.spec.name)
    }
}

impl PyDensity {
    fn tabulate(&self, m: Option<usize>) -> PyResult<GridFunction> {
        let grid = match m {
            Some(m) => Grid::new(self.spec.domain.0, self.spec.domain.1, m).map_err(err)?,
            None if self.spec.domain == (0.0, 1.0) => Grid::unit(),
            None => self.spec.default_grid(),
        };
        Ok(self.spec.tabulate(&grid))
    }
}

/// Dirichlet posterior over dyadic histograms on `[0, 1]`.
#[pyclass(name = "HistogramPosterior", frozen)]
struct PyHistogram {
    inner: core::HistogramPosterior,
}

#[pymethods]
impl PyHistogram {
    #[staticmethod]
    fn fit(samples: Vec<f64>, j: u32) -> PyResult<Self> {
        Ok(Self { inner: core::HistogramPosterior::fit(&samples_of(samples), j).map_err(err)? })
    }

    #[staticmethod]
    fn from_counts(j: u32, counts: Vec<u64>) -> PyResult<Self> {
        Ok(Self { inner: core::HistogramPosterior::from_counts(j, counts).map_err(err)? })
    }

    #[getter]
    fn j(&self) -> u32 {
        self.inner.j()
    }

    fn bayes_weights(&self) -> Vec<f64> {
        self.inner.bayes_weights()
    }

    fn bayes_levels(&self) -> Vec<f64> {
        self.inner.bayes_levels()
    }

    /// Posterior draws of the bin probabilities.
    fn sample_weights(&self, m: usize, seed: u64) -> Vec<Vec<f64>> {
        self.inner.sample_weights(m, seed)
    }

    #[pyo3(signature = (truth, radius, m, seed))]
    fn posterior_supnorm_mass(&self, truth: &PyDensity, radius: f64, m: usize, seed: u64) -> PyResult<f64> {
        let p0 = truth.tabulate(None)?;
        self.inner.posterior_supnorm_mass(&p0, radius, m, seed).map_err(err)
    }

    /// `τ`-quantile of each of `m` posterior draws.
    fn posterior_quantiles(&self, tau: f64, m: usize, seed: u64) -> PyResult<Vec<f64>> {
        let draws = self.inner.sample_posterior(m, seed, &Grid::unit()).map_err(err)?;
        core::posterior_quantiles(&draws, tau).map_err(err)
    }
}

/// Largest admissible resolution level for `n` observations.
#[pyfunction]
fn choose_j(n: u64, alpha: f64) -> PyResult<u32> {
    core::choose_j(n, alpha).map_err(err)
}

#[pyfunction]
fn epsilon_rate(n: u64, alpha: f64) -> f64 {
    core::epsilon_rate(n, alpha)
}

#[pyfunction]
fn derive_seed(master: u64, stream: u64) -> u64 {
    core::derive_seed(master, stream)
}

/// Quantile of a density tabulated on a uniform grid over `[lo, hi]`.
#[pyfunction]
fn quantile(values: Vec<f64>, lo: f64, hi: f64, tau: f64) -> PyResult<f64> {
    let grid = Grid::new(lo, hi, values.len()).map_err(err)?;
    let p = GridFunction::new(grid, values).map_err(err)?;
    core::quantile(&core::cdf(&p).map_err(err)?, tau).map_err(err)
}

/// Goodness-of-fit test of `samples` against a catalog null.
#[pyfunction]
#[pyo3(signature = (samples, null, j, operator = "haar", norm = "sup", m0 = 3.0, eps = None))]
#[allow(clippy::too_many_arguments)]
fn gof_test<'py>(
    py: Python<'py>,
    samples: Vec<f64>,
    null: &PyDensity,
    j: u32,
    operator: &str,
    norm: &str,
    m0: f64,
    eps: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let n = samples.len() as f64;
    let eps = eps.unwrap_or_else(|| ((1u64 << j) as f64 * n.ln() / n).sqrt());
    let op = ApproxOperator::by_name(operator, j).map_err(err)?;
    let r: Norm = norm.parse().map_err(err)?;
    let cfg = core::TestConfig::new(r, op, m0, eps).map_err(err)?;
    let report = core::run_test(&samples_of(samples), &null.tabulate(None)?, &cfg).map_err(err)?;
    serialize(py, &report)
}

/// Smoothing-error limit table for a catalog density and kernel.
#[pyfunction]
fn lemma1_check<'py>(py: Python<'py>, density: &PyDensity, kernel: &str, beta: f64, deltas: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    let h: KernelSpec = kernel.parse().map_err(err)?;
    let table = core::lemma1_limit_check(&density.spec, &h, beta, &deltas).map_err(err)?;
    serialize(py, &table)
}

/// `(limit, target)` of the scaled moment functional of order `r`.
#[pyfunction]
fn moment_limit_check(kernel: &str, r: u32) -> PyResult<(f64, f64)> {
    let h: KernelSpec = kernel.parse().map_err(err)?;
    core::moment_limit_check(&h, r).map_err(err)
}

/// Runs a rate study from a JSON config string; returns `(records, fit)`.
#[pyfunction]
#[pyo3(signature = (config_json, quantile = false))]
fn rate_study<'py>(py: Python<'py>, config_json: &str, quantile: bool) -> PyResult<(Bound<'py, PyAny>, Bound<'py, PyAny>)> {
    let cfg: core::RateStudyConfig = serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let (records, fit) = if quantile { core::run_quantile_rate_study(&cfg) } else { core::run_rate_study(&cfg) }.map_err(err)?;
    Ok((serialize(py, &records)?, serialize(py, &fit)?))
}

#[pymodule]
fn supnorm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDensity>()?;
    m.add_class::<PyHistogram>()?;
    m.add_function(wrap_pyfunction!(choose_j, m)?)?;
    m.add_function(wrap_pyfunction!(epsilon_rate, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    m.add_function(wrap_pyfunction!(quantile, m)?)?;
    m.add_function(wrap_pyfunction!(gof_test, m)?)?;
    m.add_function(wrap_pyfunction!(lemma1_check, m)?)?;
    m.add_function(wrap_pyfunction!(moment_limit_check, m)?)?;
    m.add_function(wrap_pyfunction!(rate_study, m)?)?;
    Ok(())
}
