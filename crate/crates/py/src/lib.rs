//! Python bindings: scenarios, spectral quantities, steady states,
//! simulation and the verification suites.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use steadypop::model::Density;
use steadypop::operator_lab::{assemble_full, dominant_eigenvalue as dominant};
use steadypop::scenario::{self, catalog};
use steadypop::spectral::Characteristic;
use steadypop::{ratedsl, sim, steady, verify, Error};

create_exception!(
    steadypop,
    SteadypopError,
    PyException,
    "Base class of steadypop errors."
);
create_exception!(
    steadypop,
    InputError,
    SteadypopError,
    "Invalid scenario, grid or expression."
);
create_exception!(
    steadypop,
    SolverError,
    SteadypopError,
    "A numerical routine failed."
);

fn to_py(e: Error) -> PyErr {
    let msg = format!("[{}] {e}", e.code());
    if e.is_input_error() {
        InputError::new_err(msg)
    } else {
        SolverError::new_err(msg)
    }
}

fn json_to_py<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| SteadypopError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A validated model scenario.
#[pyclass(name = "Scenario", module = "steadypop", frozen)]
struct PyScenario {
    inner: steadypop::Scenario,
}

impl PyScenario {
    fn density(&self, values: Option<Vec<f64>>) -> PyResult<Density> {
        match values {
            None => self.inner.initial_density().map_err(to_py),
            Some(v) => Density::new(self.inner.grid, v).map_err(to_py),
        }
    }
}

#[pymethods]
impl PyScenario {
    /// Parses a scenario JSON document.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: scenario::from_json(text).map_err(to_py)?,
        })
    }

    /// Loads a bundled scenario by name.
    #[staticmethod]
    fn catalog(name: &str) -> PyResult<Self> {
        Ok(Self {
            inner: catalog::load(name).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn catalog_names() -> Vec<&'static str> {
        catalog::names().collect()
    }

    /// The same scenario on a grid with `cells` cells.
    fn with_cells(&self, cells: usize) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.with_cells(cells).map_err(to_py)?,
        })
    }

    #[getter]
    fn name(&self) -> Option<String> {
        self.inner.name.clone()
    }

    #[getter]
    fn kind(&self) -> String {
        format!("{:?}", self.inner.rates.kind)
    }

    #[getter]
    fn max_age(&self) -> f64 {
        self.inner.grid.max_age()
    }

    #[getter]
    fn cells(&self) -> usize {
        self.inner.grid.len()
    }

    #[getter]
    fn width(&self) -> f64 {
        self.inner.grid.width()
    }

    /// Cell midpoints.
    fn ages(&self) -> Vec<f64> {
        self.inner.grid.nodes().collect()
    }

    fn initial_density(&self) -> PyResult<Vec<f64>> {
        Ok(self.density(None)?.into_values())
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(name={:?}, kind={}, m={}, n={})",
            self.inner.name.as_deref().unwrap_or(""),
            self.kind(),
            self.max_age(),
            self.cells()
        )
    }
}

/// Result of the steady-state solver.
#[pyclass(name = "SteadyState", module = "steadypop", frozen, get_all)]
struct PySteadyState {
    density: Vec<f64>,
    ages: Vec<f64>,
    total: f64,
    alpha_star: f64,
    iterations: usize,
    l1_step_norms: Vec<f64>,
    residual_boundary: f64,
    residual_profile: f64,
    net_reproduction: f64,
    warnings: Vec<String>,
}

#[pymethods]
impl PySteadyState {
    fn __repr__(&self) -> String {
        format!(
            "SteadyState(total={}, iterations={}, residual_boundary={:e})",
            self.total, self.iterations, self.residual_boundary
        )
    }
}

/// `s(B_u)`, `R(u)`, the root bracket and the sign check for the environment
/// `u` (the scenario's initial density when omitted).
#[pyfunction]
#[pyo3(signature = (scenario, u=None))]
fn spectral_bound<'py>(
    py: Python<'py>,
    scenario: &PyScenario,
    u: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let u = scenario.density(u)?;
    let report = Characteristic::new(&u, &scenario.inner)
        .and_then(|ch| ch.report())
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("spectral_bound", report.spectral_bound)?;
    out.set_item("net_reproduction", report.net_reproduction)?;
    out.set_item("bracket", report.bracket)?;
    out.set_item("iterations", report.iterations)?;
    out.set_item("sign_consistent", report.sign_consistent)?;
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (scenario, u=None))]
fn net_reproduction(scenario: &PyScenario, u: Option<Vec<f64>>) -> PyResult<f64> {
    let u = scenario.density(u)?;
    steadypop::spectral::net_reproduction(&u, &scenario.inner).map_err(to_py)
}

/// Dominant eigenvalue of the discrete generator at `u`.
#[pyfunction]
#[pyo3(signature = (scenario, u=None))]
fn dominant_eigenvalue(scenario: &PyScenario, u: Option<Vec<f64>>) -> PyResult<f64> {
    let u = scenario.density(u)?;
    assemble_full(&u, &scenario.inner)
        .and_then(|g| dominant(&g))
        .map_err(to_py)
}

#[pyfunction]
fn solve_steady(py: Python<'_>, scenario: &PyScenario) -> PyResult<PySteadyState> {
    let s = &scenario.inner;
    let sol = py.detach(|| steady::solve_steady(s)).map_err(to_py)?;
    Ok(PySteadyState {
        ages: s.grid.nodes().collect(),
        total: sol.total(),
        alpha_star: sol.alpha_star,
        iterations: sol.iterations,
        l1_step_norms: sol.l1_step_norms,
        residual_boundary: sol.residual_boundary,
        residual_profile: sol.residual_profile,
        net_reproduction: sol.net_reproduction_at_solution,
        warnings: sol.warnings,
        density: sol.density.into_values(),
    })
}

/// Runs the unit-CFL scheme for `horizon` time units.
#[pyfunction]
#[pyo3(signature = (scenario, horizon, stride=1, initial=None))]
fn simulate<'py>(
    py: Python<'py>,
    scenario: &PyScenario,
    horizon: f64,
    stride: usize,
    initial: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let p0 = scenario.density(initial)?;
    let s = &scenario.inner;
    let run = py
        .detach(|| sim::simulate(s, &p0, horizon, stride))
        .map_err(to_py)?;
    let out = PyDict::new(py);
    let (times, totals): (Vec<f64>, Vec<f64>) = run.total_series.iter().copied().unzip();
    let births: Vec<f64> = run.birth_series.iter().map(|b| b.1).collect();
    out.set_item("times", times)?;
    out.set_item("totals", totals)?;
    out.set_item("birth_rates", births)?;
    let snapshots = PyList::empty(py);
    for (t, d) in &run.snapshots {
        snapshots.append((*t, d.values().to_vec()))?;
    }
    out.set_item("snapshots", snapshots)?;
    out.set_item("final", run.final_density.into_values())?;
    out.set_item("extinct", run.extinct)?;
    Ok(out)
}

/// Randomized invariant suites; random scenarios when `scenario` is omitted.
#[pyfunction]
#[pyo3(signature = (draws=100, seed=0, scenario=None))]
fn run_verify<'py>(
    py: Python<'py>,
    draws: usize,
    seed: u64,
    scenario: Option<&PyScenario>,
) -> PyResult<Bound<'py, PyAny>> {
    let report = py.detach(|| match scenario {
        Some(s) => verify::verify_scenario(&s.inner, draws, seed),
        None => verify::verify_random(draws, seed),
    });
    let value =
        serde_json::to_value(&report).map_err(|e| SteadypopError::new_err(e.to_string()))?;
    json_to_py(py, &value)
}

/// Canonical printed form of a rate expression.
#[pyfunction]
fn parse_expr(text: &str) -> PyResult<String> {
    ratedsl::parse(text)
        .map(|e| e.to_string())
        .map_err(|e| to_py(e.into()))
}

/// Evaluates a rate expression at age `a` and environment value `x`.
#[pyfunction]
#[pyo3(signature = (text, a, x=0.0))]
fn eval_expr(text: &str, a: f64, x: f64) -> PyResult<f64> {
    let expr = ratedsl::parse(text).map_err(|e| to_py(e.into()))?;
    expr.eval(a, x).map_err(|e| to_py(e.into()))
}

#[pymodule]
#[pyo3(name = "steadypop")]
fn steadypop_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("SteadypopError", py.get_type::<SteadypopError>())?;
    m.add("InputError", py.get_type::<InputError>())?;
    m.add("SolverError", py.get_type::<SolverError>())?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PySteadyState>()?;
    m.add_function(wrap_pyfunction!(spectral_bound, m)?)?;
    m.add_function(wrap_pyfunction!(net_reproduction, m)?)?;
    m.add_function(wrap_pyfunction!(dominant_eigenvalue, m)?)?;
    m.add_function(wrap_pyfunction!(solve_steady, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add("verify", wrap_pyfunction!(run_verify, m)?)?;
    m.add_function(wrap_pyfunction!(parse_expr, m)?)?;
    m.add_function(wrap_pyfunction!(eval_expr, m)?)?;
    Ok(())
}
