//! Python bindings for the `msgne` solver.

use std::path::PathBuf;

use msgne::error::Error;
use msgne::experiment::{self, parse_algorithm_list, ExperimentConfig, GameSource, GENERATORS};
use msgne::game::{compile, io, GmiGame, MsGnep};
use msgne::network::CommGraph;
use msgne::regularizers::{self, LegendreKind};
use msgne::solvers::SolveConfig;
use msgne::verify;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Dimension { .. } | Error::Domain(_) | Error::Disconnected => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn json_loads(py: Python<'_>, text: &str) -> PyResult<PyObject> {
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn legendre(name: &str) -> PyResult<LegendreKind> {
    match name {
        "euclidean" => Ok(LegendreKind::Euclidean),
        "gibbs_shannon" | "entropy" => Ok(LegendreKind::GibbsShannon),
        other => Err(PyValueError::new_err(format!(
            "unknown regularizer {other:?} (expected euclidean or gibbs_shannon)"
        ))),
    }
}

/// A mixed-strategy generalized game, kept both as a document and compiled.
#[pyclass(module = "msgne_py", frozen)]
struct Game {
    text: String,
    compiled: MsGnep,
}

impl Game {
    fn from_game(game: &GmiGame) -> PyResult<Self> {
        Ok(Self {
            text: io::game_to_string(game).map_err(to_py)?,
            compiled: compile(game).map_err(to_py)?,
        })
    }
}

#[pymethods]
impl Game {
    /// Builds a builtin instance from `name[:key=value,...]`.
    #[staticmethod]
    #[pyo3(signature = (spec, seed = 0))]
    fn generate(spec: &str, seed: u64) -> PyResult<Self> {
        Self::from_game(&experiment::generate(spec, seed).map_err(to_py)?)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Self::from_game(&io::game_from_str(text).map_err(to_py)?)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Self::from_game(&io::game_from_path(&path).map_err(to_py)?)
    }

    fn to_json(&self) -> String {
        self.text.clone()
    }

    #[getter]
    fn n_agents(&self) -> usize {
        self.compiled.n_agents()
    }

    /// Pure-action counts per agent.
    #[getter]
    fn m(&self) -> Vec<usize> {
        self.compiled.agents.iter().map(|a| a.m()).collect()
    }

    /// Continuous dimensions per agent.
    #[getter]
    fn n(&self) -> Vec<usize> {
        self.compiled.agents.iter().map(|a| a.n()).collect()
    }

    #[getter]
    fn n_coupling(&self) -> usize {
        self.compiled.n_rho()
    }

    fn uniform_strategies(&self) -> Vec<f64> {
        self.compiled.uniform_strategies()
    }

    /// Largest unilateral gain over pure deviations at the stacked strategy `x`.
    fn exploitability(&self, x: Vec<f64>) -> PyResult<f64> {
        verify::exploitability(&self.compiled, &x).map_err(to_py)
    }

    /// Most probable pure action of every agent, ties to the lowest index.
    fn round_to_pure(&self, x: Vec<f64>) -> PyResult<Vec<Vec<i64>>> {
        verify::round_to_pure(&self.compiled, &x).map_err(to_py)
    }

    /// Runs one algorithm, or compares several given as a comma-separated list,
    /// and returns the report as a dict.
    #[allow(clippy::too_many_arguments)]
    #[pyo3(signature = (
        algorithm = "bforb",
        graph = None,
        seed = 0,
        epsilon = 1e-5,
        max_iters = 100_000,
        regularizer = "gibbs_shannon",
        gamma = None,
        zeta = None,
        initial = None,
        trace = None,
    ))]
    fn solve(
        &self,
        py: Python<'_>,
        algorithm: &str,
        graph: Option<String>,
        seed: u64,
        epsilon: f64,
        max_iters: usize,
        regularizer: &str,
        gamma: Option<Vec<f64>>,
        zeta: Option<f64>,
        initial: Option<Vec<f64>>,
        trace: Option<PathBuf>,
    ) -> PyResult<PyObject> {
        let cfg = ExperimentConfig {
            game: GameSource::Inline(self.text.clone()),
            algorithms: parse_algorithm_list(algorithm).map_err(to_py)?,
            graph,
            seed,
            solve: SolveConfig {
                gamma,
                zeta,
                epsilon,
                max_iters,
                regularizer: legendre(regularizer)?,
                initial,
                ..SolveConfig::default()
            },
            trace,
            report: None,
        };
        // the solve holds no Python objects, so other threads may run meanwhile
        let json = py
            .allow_threads(|| experiment::run(&cfg).and_then(|o| o.to_json()))
            .map_err(to_py)?;
        json_loads(py, &json)
    }

    fn __repr__(&self) -> String {
        format!(
            "Game(n_agents={}, m={:?}, n={:?}, n_coupling={})",
            self.compiled.n_agents(),
            self.m(),
            self.n(),
            self.compiled.n_rho()
        )
    }
}

/// One entropic mirror step `x ∝ x · exp(−γ d)` on the simplex.
#[pyfunction]
fn mirror_step_simplex(x: Vec<f64>, d: Vec<f64>, gamma: f64) -> PyResult<Vec<f64>> {
    regularizers::mirror_step_simplex(&x, &d, gamma).map_err(to_py)
}

/// `(‖L‖₂ bound, Laplacian rows)` of a graph descriptor on `n` nodes.
#[pyfunction]
#[pyo3(signature = (descriptor, n, seed = 0))]
fn graph_laplacian(descriptor: &str, n: usize, seed: u64) -> PyResult<(f64, Vec<Vec<f64>>)> {
    let g = CommGraph::from_descriptor(descriptor, n, seed).map_err(to_py)?;
    let l = g.laplacian();
    let rows = (0..l.nrows()).map(|i| l.row(i).iter().copied().collect()).collect();
    Ok((g.consensus_lipschitz(), rows))
}

#[pyfunction]
fn generators() -> Vec<&'static str> {
    GENERATORS.to_vec()
}

#[pymodule]
fn msgne_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Game>()?;
    m.add_function(wrap_pyfunction!(mirror_step_simplex, m)?)?;
    m.add_function(wrap_pyfunction!(graph_laplacian, m)?)?;
    m.add_function(wrap_pyfunction!(generators, m)?)?;
    m.add("EXIT_CONVERGED", experiment::EXIT_CONVERGED)?;
    m.add("EXIT_MAX_ITERS", experiment::EXIT_MAX_ITERS)?;
    m.add("EXIT_DIVERGED", experiment::EXIT_DIVERGED)?;
    Ok(())
}
