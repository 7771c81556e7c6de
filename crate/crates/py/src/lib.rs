//! Python bindings. Structured values cross the boundary as plain dicts and
//! lists, using the same JSON shapes as the config files and reports.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyString;
use serde::de::DeserializeOwned;
use serde::Serialize;

use mptcp_lab::dynamics::{self, ControllerKind, ControllerVariant, DynamicsConfig};
use mptcp_lab::equilibrium::{self, RateAllocation};
use mptcp_lab::experiment::{self, EnsembleSummary, ExperimentConfig, ReportFormat};
use mptcp_lab::net_model::{self, LinkId, Network, ScenarioSpec, Topology};
use mptcp_lab::stability::{self, StabilityConfig};
use mptcp_lab::traffic::{self, TrafficModel};
use mptcp_lab::utility::UtilitySpec;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(runtime_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Accepts a dict/list or a JSON string.
fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = if obj.is_instance_of::<PyString>() {
        obj.extract()?
    } else {
        obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?
    };
    serde_json::from_str(&text).map_err(value_err)
}

fn variant(name: &str) -> PyResult<ControllerVariant> {
    ControllerVariant::ALL
        .into_iter()
        .find(|v| v.name() == name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown controller variant {name:?}")))
}

fn allocation(net: &Network, rates: Vec<f64>) -> PyResult<RateAllocation> {
    if rates.len() != net.paths().len() {
        return Err(PyValueError::new_err(format!("expected {} rates, got {}", net.paths().len(), rates.len())));
    }
    Ok(RateAllocation::new(rates))
}

#[pyclass(name = "UtilitySpec", frozen)]
struct PyUtility(UtilitySpec);

#[pymethods]
impl PyUtility {
    #[new]
    #[pyo3(signature = (alpha, weight = 1.0, energy_weight = 0.0))]
    fn new(alpha: f64, weight: f64, energy_weight: f64) -> PyResult<Self> {
        UtilitySpec::new(alpha, weight, energy_weight).map(Self).map_err(value_err)
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.0.alpha
    }

    #[getter]
    fn weight(&self) -> f64 {
        self.0.weight
    }

    #[getter]
    fn energy_weight(&self) -> f64 {
        self.0.energy_weight
    }

    fn value(&self, x: f64) -> PyResult<f64> {
        self.0.value(x).map_err(value_err)
    }

    fn gradient(&self, x: f64) -> PyResult<f64> {
        self.0.gradient(x).map_err(value_err)
    }

    fn energy_value(&self, x: f64, e: f64) -> PyResult<f64> {
        self.0.energy_value(x, e).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!("UtilitySpec(alpha={}, weight={}, energy_weight={})", self.0.alpha, self.0.weight, self.0.energy_weight)
    }
}

#[pyclass(name = "Network", frozen)]
struct PyNetwork(Network);

#[pymethods]
impl PyNetwork {
    /// Builds from the `{"links": ..., "paths": ..., "sources": ...}` form.
    #[staticmethod]
    fn from_dict(obj: &Bound<'_, PyAny>) -> PyResult<Self> {
        from_py(obj).map(Self)
    }

    /// Generates a network from a topology dict such as
    /// `{"kind": "datacenter", "pods": 4, "link_capacity": 10.0}`.
    #[staticmethod]
    #[pyo3(signature = (topology, seed = 0))]
    fn scenario(topology: &Bound<'_, PyAny>, seed: u64) -> PyResult<Self> {
        let topology: Topology = from_py(topology)?;
        net_model::build_scenario(&ScenarioSpec::new(topology, seed)).map(Self).map_err(value_err)
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0)
    }

    #[getter]
    fn n_links(&self) -> usize {
        self.0.links().len()
    }

    #[getter]
    fn n_paths(&self) -> usize {
        self.0.paths().len()
    }

    #[getter]
    fn n_sources(&self) -> usize {
        self.0.sources().len()
    }

    fn total_capacity(&self) -> f64 {
        self.0.total_capacity()
    }

    fn is_multipath(&self) -> bool {
        self.0.is_multipath()
    }

    fn paths_through_link(&self, link: usize) -> PyResult<Vec<usize>> {
        let ids = self.0.paths_through_link(LinkId(link)).map_err(value_err)?;
        Ok(ids.iter().map(|p| p.0).collect())
    }

    fn link_loads(&self, rates: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(allocation(&self.0, rates)?.link_loads(&self.0))
    }

    fn source_totals(&self, rates: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(allocation(&self.0, rates)?.source_totals(&self.0))
    }

    fn __repr__(&self) -> String {
        format!("Network(links={}, paths={}, sources={})", self.n_links(), self.n_paths(), self.n_sources())
    }
}

#[pyfunction]
#[pyo3(signature = (net, tol = 1e-8))]
fn solve_baseline<'py>(py: Python<'py>, net: &PyNetwork, tol: f64) -> PyResult<Bound<'py, PyAny>> {
    let report = py.detach(|| equilibrium::solve_baseline(&net.0, tol)).map_err(runtime_err)?;
    to_py(py, &report)
}

#[pyfunction]
#[pyo3(signature = (net, eps = 0.01, tol = 1e-8))]
fn solve_multipath<'py>(py: Python<'py>, net: &PyNetwork, eps: f64, tol: f64) -> PyResult<Bound<'py, PyAny>> {
    let report = py.detach(|| equilibrium::solve_multipath(&net.0, eps, tol)).map_err(runtime_err)?;
    to_py(py, &report)
}

/// Integrates the fluid model. `variant` is `single_path`,
/// `uncoupled_multipath` or `coupled_multipath`.
#[pyfunction]
#[pyo3(signature = (net, variant, horizon, dt, gain = 1.0, tol = 1e-6, traffic = None, config = None))]
#[allow(clippy::too_many_arguments)]
fn integrate<'py>(
    py: Python<'py>,
    net: &PyNetwork,
    variant: &str,
    horizon: f64,
    dt: f64,
    gain: f64,
    tol: f64,
    traffic: Option<&Bound<'py, PyAny>>,
    config: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let kind = ControllerKind::new(self::variant(variant)?, gain).map_err(value_err)?;
    let traffic: TrafficModel = traffic.map(from_py).transpose()?.unwrap_or_default();
    let cfg: DynamicsConfig = config.map(from_py).transpose()?.unwrap_or_default();
    let traj = py
        .detach(|| dynamics::integrate_with(kind, &net.0, horizon, dt, tol, &traffic, &cfg))
        .map_err(runtime_err)?;
    to_py(py, &traj)
}

#[pyfunction]
#[pyo3(signature = (net, x_star, x_new, config = None))]
fn assess<'py>(
    py: Python<'py>,
    net: &PyNetwork,
    x_star: Vec<f64>,
    x_new: Vec<f64>,
    config: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg: StabilityConfig = config.map(from_py).transpose()?.unwrap_or_default();
    let report = stability::assess(&net.0, &allocation(&net.0, x_star)?, &allocation(&net.0, x_new)?, &cfg)
        .map_err(value_err)?;
    to_py(py, &report)
}

#[pyfunction]
fn euclidean_distance(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    stability::euclidean_distance(&a, &b).map_err(value_err)
}

#[pyfunction]
fn compute_burden(net: &PyNetwork, rates: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(stability::compute_burden(&net.0, &allocation(&net.0, rates)?).0)
}

#[pyfunction]
fn modulation(traffic: &Bound<'_, PyAny>, t: f64) -> PyResult<f64> {
    let model: TrafficModel = from_py(traffic)?;
    model.validate().map_err(value_err)?;
    Ok(traffic::modulation(&model, t))
}

#[pyfunction]
fn burst_schedule(traffic: &Bound<'_, PyAny>, horizon: f64, dt: f64) -> PyResult<Vec<f64>> {
    let model: TrafficModel = from_py(traffic)?;
    model.validate().map_err(value_err)?;
    traffic::burst_schedule(&model, horizon, dt).map_err(value_err)
}

#[pyfunction]
fn preset<'py>(py: Python<'py>, name: &str) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &experiment::preset(name).map_err(value_err)?)
}

#[pyfunction]
fn validate_config(config: &Bound<'_, PyAny>) -> PyResult<()> {
    let cfg: ExperimentConfig = from_py(config)?;
    cfg.validate().map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (config, seed = None))]
fn run_experiment<'py>(py: Python<'py>, config: &Bound<'py, PyAny>, seed: Option<u64>) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg: ExperimentConfig = from_py(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(value_err)?;
    let summary = py.detach(|| experiment::run_experiment(&cfg)).map_err(runtime_err)?;
    to_py(py, &summary)
}

/// Renders a summary returned by `run_experiment` as `csv` or `json` text.
#[pyfunction]
#[pyo3(signature = (summary, format = "json"))]
fn emit_report(summary: &Bound<'_, PyAny>, format: &str) -> PyResult<String> {
    let summary: EnsembleSummary = from_py(summary)?;
    let format = match format {
        "csv" => ReportFormat::Csv,
        "json" => ReportFormat::Json,
        other => return Err(PyValueError::new_err(format!("unknown format {other:?}"))),
    };
    let mut buf = Vec::new();
    experiment::emit_report(&summary, format, &mut buf).map_err(runtime_err)?;
    String::from_utf8(buf).map_err(runtime_err)
}

#[pymodule(name = "mptcp_lab")]
pub fn mptcp_lab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyUtility>()?;
    m.add_class::<PyNetwork>()?;
    m.add_function(wrap_pyfunction!(solve_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(solve_multipath, m)?)?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(assess, m)?)?;
    m.add_function(wrap_pyfunction!(euclidean_distance, m)?)?;
    m.add_function(wrap_pyfunction!(compute_burden, m)?)?;
    m.add_function(wrap_pyfunction!(modulation, m)?)?;
    m.add_function(wrap_pyfunction!(burst_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(preset, m)?)?;
    m.add_function(wrap_pyfunction!(validate_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(emit_report, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in ControllerVariant::ALL {
            assert_eq!(variant(v.name()).unwrap(), v);
        }
        assert!(variant("reno").is_err());
    }
}
