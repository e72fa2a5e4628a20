//! Python bindings. Structured results (frames, reports, sweep rows) are
//! returned as plain dicts and lists.

use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use sovsim_core::config::Parsed;
use sovsim_core::metrics::{p_irr_homogeneous, traceability_bound_with, FrameOptions};
use sovsim_core::sweeps::{self, SimulatedCurve, SweepError, Workers};
use sovsim_core::verification::{Harness, PropertyId, VerifyError};
use sovsim_core::{dynamics, io, ConfigError, SimError, Strictness, ValidationError};

create_exception!(
    sovsim,
    NoBracketError,
    PyRuntimeError,
    "The search interval does not bracket the target rate."
);

fn config_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn sim_err(e: SimError) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn sweep_err(e: SweepError) -> PyErr {
    match e {
        SweepError::NoBracket { .. } | SweepError::NonMonotone { .. } => {
            NoBracketError::new_err(e.to_string())
        }
        SweepError::Sim(e) => sim_err(e),
        other => config_err(other),
    }
}

fn verify_err(e: VerifyError) -> PyErr {
    match e {
        VerifyError::Workers(e) => sweep_err(e),
        other => config_err(other),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// A simulation state at one step.
#[pyclass(module = "sovsim", frozen)]
struct State(sovsim_core::SystemState);

#[pymethods]
impl State {
    /// Parses a complete configuration in the TOML config format.
    #[staticmethod]
    fn from_config(text: &str) -> PyResult<Self> {
        sovsim_core::load_config(text)
            .map(State)
            .map_err(config_err)
    }

    /// A random but valid system drawn with the default parameter ranges.
    #[staticmethod]
    fn generate(seed: u64, n_human: usize, n_ai: usize) -> PyResult<Self> {
        sovsim_core::generate_random_system(
            seed,
            n_human,
            n_ai,
            &sovsim_core::ParameterRanges::default(),
        )
        .map(State)
        .map_err(config_err)
    }

    fn to_config(&self) -> String {
        sovsim_core::save_config(&self.0)
    }

    #[getter]
    fn step(&self) -> u64 {
        self.0.step
    }

    #[getter]
    fn shares(&self) -> Vec<f64> {
        self.0.shares()
    }

    #[getter]
    fn lambdas(&self) -> Vec<f64> {
        self.0.nodes.iter().map(|n| n.lambda).collect()
    }

    #[getter]
    fn frictions(&self) -> Vec<f64> {
        self.0.nodes.iter().map(|n| n.friction).collect()
    }

    #[getter]
    fn is_ai(&self) -> Vec<bool> {
        self.0.nodes.iter().map(|n| n.is_ai()).collect()
    }

    /// The next state.
    fn advance(&self) -> PyResult<State> {
        dynamics::advance(&self.0)
            .map(|(s, _)| State(s))
            .map_err(sim_err)
    }

    /// Metrics for this state as a dict.
    fn metrics(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(
            py,
            &sovsim_core::compute_frame(&self.0, FrameOptions::default()),
        )
    }

    fn __repr__(&self) -> String {
        format!("State(step={}, nodes={})", self.0.step, self.0.nodes.len())
    }
}

/// A parsed scenario file; `build` draws a jittered state from it.
#[pyclass(module = "sovsim", frozen)]
struct Scenario(sovsim_core::Scenario);

#[pymethods]
impl Scenario {
    #[new]
    #[pyo3(signature = (text, lenient = false))]
    fn new(text: &str, lenient: bool) -> PyResult<Self> {
        let strictness = if lenient {
            Strictness::Lenient
        } else {
            Strictness::Strict
        };
        let Parsed { scenario, .. } =
            sovsim_core::Scenario::parse(text, strictness).map_err(config_err)?;
        Ok(Scenario(scenario))
    }

    #[staticmethod]
    #[pyo3(signature = (path, lenient = false))]
    fn from_file(path: &str, lenient: bool) -> PyResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read config {path}: {e}")))?;
        Scenario::new(&text, lenient)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.system.seed
    }

    #[getter]
    fn steps(&self) -> u64 {
        self.0.system.steps
    }

    #[pyo3(signature = (seed = None))]
    fn build(&self, seed: Option<u64>) -> PyResult<State> {
        self.0
            .build(seed.unwrap_or(self.0.system.seed))
            .map(State)
            .map_err(|e: ValidationError| config_err(e))
    }

    /// A copy with one numeric parameter replaced, e.g.
    /// `economy.friction_decay`.
    fn with_parameter(&self, path: &str, value: f64) -> PyResult<Scenario> {
        self.0
            .with_parameter(path, value)
            .map(Scenario)
            .map_err(|e: ConfigError| config_err(e))
    }

    fn to_toml(&self) -> String {
        self.0.to_toml()
    }
}

/// Frames for steps `0..=steps` as a list of dicts.
#[pyfunction]
fn run_trajectory(py: Python<'_>, state: &State, steps: u64) -> PyResult<Py<PyAny>> {
    let s = state.0.clone();
    let frames = py
        .detach(move || sweeps::run_trajectory(&s, steps))
        .map_err(sim_err)?;
    to_py(py, &frames)
}

/// The trajectory as CSV text, identical to the `run` command's output.
#[pyfunction]
fn trajectory_csv(py: Python<'_>, state: &State, steps: u64) -> PyResult<String> {
    let s = state.0.clone();
    let frames = py
        .detach(move || sweeps::run_trajectory(&s, steps))
        .map_err(sim_err)?;
    Ok(io::trajectory_csv(&frames))
}

/// Checks one property ("P1".."P5", "T1") and returns its report.
#[pyfunction]
#[pyo3(signature = (property, trials = 100, seed = 0, scenario = None, threads = 0))]
fn verify(
    py: Python<'_>,
    property: &str,
    trials: usize,
    seed: u64,
    scenario: Option<&Scenario>,
    threads: usize,
) -> PyResult<Py<PyAny>> {
    let id: PropertyId = property.parse().map_err(config_err)?;
    let mut harness = Harness::new(seed).with_workers(Workers::new(threads));
    if let Some(s) = scenario {
        harness = harness.with_scenario(s.0.clone());
    }
    let report = py.detach(|| harness.run(id, trials)).map_err(verify_err)?;
    to_py(py, &report)
}

/// Grid sweep; `grid` uses the CLI syntax `lo:hi:count[:log]`.
#[pyfunction]
#[pyo3(signature = (scenario, param, grid, runs = 20, steps = None, seed = None, threads = 0))]
#[allow(clippy::too_many_arguments)]
fn sweep(
    py: Python<'_>,
    scenario: &Scenario,
    param: &str,
    grid: &str,
    runs: usize,
    steps: Option<u64>,
    seed: Option<u64>,
    threads: usize,
) -> PyResult<Py<PyAny>> {
    let spec = sweeps::SweepSpec {
        parameter_path: param.to_string(),
        grid: sweeps::Grid::parse(grid).map_err(sweep_err)?,
        runs_per_point: runs,
        horizon: steps.unwrap_or(scenario.0.system.steps),
        base_seed: seed.unwrap_or(scenario.0.system.seed),
    };
    let rows = py
        .detach(|| sweeps::grid_sweep(&spec, &scenario.0, Workers::new(threads)))
        .map_err(sweep_err)?;
    to_py(py, &rows)
}

/// Bisects for the parameter value where the transfer rate crosses `target`.
#[pyfunction]
#[pyo3(signature = (scenario, param, lo, hi, tol = 1e-3, runs = 20, target = 0.5, steps = None, seed = None, threads = 0))]
#[allow(clippy::too_many_arguments)]
fn threshold(
    py: Python<'_>,
    scenario: &Scenario,
    param: &str,
    lo: f64,
    hi: f64,
    tol: f64,
    runs: usize,
    target: f64,
    steps: Option<u64>,
    seed: Option<u64>,
    threads: usize,
) -> PyResult<Py<PyAny>> {
    scenario.0.with_parameter(param, lo).map_err(config_err)?;
    let curve = SimulatedCurve {
        scenario: &scenario.0,
        parameter_path: param.to_string(),
        runs,
        horizon: steps.unwrap_or(scenario.0.system.steps),
        base_seed: seed.unwrap_or(scenario.0.system.seed),
        workers: Workers::new(threads),
    };
    let result = py
        .detach(|| sweeps::bisect_threshold(&curve, param, lo, hi, target, tol))
        .map_err(sweep_err)?;
    to_py(py, &result)
}

/// Probability that at least one of `n` independent actions with loss
/// probability `p` is irreversible.
#[pyfunction]
fn p_irr(p: f64, n: u64) -> f64 {
    p_irr_homogeneous(p, n)
}

#[pyfunction]
#[pyo3(signature = (density, beta = 1.0, gamma = 1.0))]
fn traceability_bound(density: f64, beta: f64, gamma: f64) -> f64 {
    traceability_bound_with(density, beta, gamma)
}

#[pymodule]
fn sovsim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<State>()?;
    m.add_class::<Scenario>()?;
    m.add("NoBracketError", m.py().get_type::<NoBracketError>())?;
    m.add_function(wrap_pyfunction!(run_trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(trajectory_csv, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(threshold, m)?)?;
    m.add_function(wrap_pyfunction!(p_irr, m)?)?;
    m.add_function(wrap_pyfunction!(traceability_bound, m)?)?;
    Ok(())
}
