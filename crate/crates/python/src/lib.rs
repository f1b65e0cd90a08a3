//! Python module `dynred`.

use std::path::Path;

use dynred_cli::config::parse_config_for;
use dynred_cli::jobs::{build_report, JobError};
use dynred_core::experiments::EXPERIMENTS;
use dynred_core::op::{density_from_pure, ComplexMat};
use dynred_core::semigroup::{self, TwoLevelParams};
use dynred_core::unraveling::{self, InitialState};
use dynred_core::{DensityOp, Error, PureState, C64};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::StepUnderflow { .. }
        | Error::TooManySteps(_)
        | Error::InvariantViolation { .. }
        | Error::Trajectory { .. }
        | Error::ImaginaryResidue(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn job_to_py(e: JobError) -> PyErr {
    match e {
        JobError::Config(c) => PyValueError::new_err(c.to_string()),
        JobError::Runtime(r) => to_py(r),
    }
}

/// Two-level model parameters `(omega, lam, A)` with `|A| = 1`.
#[pyclass(name = "TwoLevelParams", module = "dynred", frozen)]
struct PyParams(TwoLevelParams);

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (omega, lam, coupling = C64::new(0.0, 1.0)))]
    fn new(omega: f64, lam: f64, coupling: C64) -> PyResult<Self> {
        TwoLevelParams::new(omega, lam, coupling).map(Self).map_err(to_py)
    }

    /// `omega = eps * lam`
    #[staticmethod]
    #[pyo3(signature = (eps, lam, coupling = C64::new(0.0, 1.0)))]
    fn from_eps(eps: f64, lam: f64, coupling: C64) -> PyResult<Self> {
        TwoLevelParams::from_eps(eps, lam, coupling).map(Self).map_err(to_py)
    }

    #[getter]
    fn omega(&self) -> f64 {
        self.0.omega()
    }

    #[getter]
    fn lam(&self) -> f64 {
        self.0.lam()
    }

    #[getter]
    fn coupling(&self) -> C64 {
        self.0.coupling()
    }

    #[getter]
    fn eps(&self) -> f64 {
        self.0.eps()
    }

    #[getter]
    fn delta(&self) -> C64 {
        self.0.delta()
    }

    #[getter]
    fn slow_rate(&self) -> f64 {
        self.0.slow_rate()
    }

    #[getter]
    fn fast_rate(&self) -> f64 {
        self.0.fast_rate()
    }

    /// `(t_min, t_max)` of the plateau.
    fn regime_window(&self) -> PyResult<(f64, f64)> {
        semigroup::regime_window(&self.0).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        let a = self.0.coupling();
        format!("TwoLevelParams(omega={}, lam={}, coupling=({}{:+}j))", self.0.omega(), self.0.lam(), a.re, a.im)
    }
}

/// Density operator. Construct from a square nested list of complex numbers.
#[pyclass(name = "DensityOp", module = "dynred", frozen, from_py_object)]
#[derive(Clone)]
struct PyDensity(DensityOp);

#[pymethods]
impl PyDensity {
    #[new]
    fn new(rows: Vec<Vec<C64>>) -> PyResult<Self> {
        let m = ComplexMat::from_rows(&rows).map_err(to_py)?;
        DensityOp::new(m).map(Self).map_err(to_py)
    }

    /// `[[r, beta], [conj(beta), 1 - r]]`
    #[staticmethod]
    fn from_bloch(r: f64, beta: C64) -> PyResult<Self> {
        DensityOp::from_bloch(r, beta).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn maximally_mixed(dim: usize) -> Self {
        Self(DensityOp::maximally_mixed(dim))
    }

    /// `|psi><psi|` for normalized amplitudes.
    #[staticmethod]
    fn pure(amplitudes: Vec<C64>) -> PyResult<Self> {
        PureState::new(amplitudes).map(|p| Self(density_from_pure(&p))).map_err(to_py)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn r(&self) -> f64 {
        self.0.r()
    }

    #[getter]
    fn beta(&self) -> C64 {
        self.0.beta()
    }

    #[getter]
    fn purity(&self) -> f64 {
        self.0.purity()
    }

    fn matrix(&self) -> Vec<Vec<C64>> {
        let m = self.0.mat();
        (0..m.dim()).map(|i| (0..m.dim()).map(|j| m.get(i, j)).collect()).collect()
    }

    /// Frobenius distance.
    fn distance(&self, other: &PyDensity) -> f64 {
        self.0.mat().distance(other.0.mat())
    }

    fn __repr__(&self) -> String {
        format!("DensityOp(dim={}, r={:.12}, purity={:.12})", self.0.dim(), self.0.r(), self.0.purity())
    }
}

#[derive(FromPyObject)]
enum Initial {
    Mixed(PyDensity),
    Pure(Vec<C64>),
}

/// Monte-Carlo ensemble summary.
#[pyclass(name = "EnsembleStats", module = "dynred", frozen, get_all)]
struct PyEnsemble {
    n_traj: usize,
    t_grid: Vec<f64>,
    mean_r: Vec<f64>,
    stderr_r: Vec<f64>,
    mean_beta: Vec<C64>,
    outcome_labels: Vec<String>,
    outcome_freq: Vec<f64>,
    first_jumps: Vec<Option<f64>>,
    jump_counts: Vec<usize>,
}

/// Integrates the master equation; returns one state per time.
#[pyfunction]
fn evolve_master(py: Python<'_>, rho0: &PyDensity, params: &PyParams, times: Vec<f64>) -> PyResult<Vec<PyDensity>> {
    let spec = params.0.reduction();
    let rho = rho0.0.clone();
    let ev = py.detach(move || semigroup::evolve_master(&rho, &spec, &times)).map_err(to_py)?;
    Ok(ev.states.into_iter().map(PyDensity).collect())
}

/// Closed-form `(r, beta)` at time `t`.
#[pyfunction]
fn analytic_two_level(r0: f64, beta0: C64, params: &PyParams, t: f64) -> PyResult<(f64, C64)> {
    semigroup::analytic_two_level(r0, beta0, &params.0, t).map_err(to_py)
}

/// First-order plateau value of `r` for the superposition (`pure=True`) or
/// the mixture.
#[pyfunction]
#[pyo3(signature = (params, a, b, pure = true))]
fn first_order_r(params: &PyParams, a: C64, b: C64, pure: bool) -> PyResult<f64> {
    semigroup::first_order_r(&params.0, a, b, pure).map_err(to_py)
}

#[pyfunction]
fn steady_state(params: &PyParams) -> PyResult<PyDensity> {
    semigroup::steady_state(&params.0.reduction()).map(PyDensity).map_err(to_py)
}

/// Jump-process ensemble. `initial` is a list of amplitudes or a DensityOp.
#[pyfunction]
#[pyo3(signature = (initial, params, times, n_traj, master_seed = 0))]
fn run_ensemble(
    py: Python<'_>,
    initial: Initial,
    params: &PyParams,
    times: Vec<f64>,
    n_traj: usize,
    master_seed: u64,
) -> PyResult<PyEnsemble> {
    let init = match initial {
        Initial::Pure(a) => InitialState::Pure(PureState::new(a).map_err(to_py)?),
        Initial::Mixed(d) => InitialState::Mixed(d.0),
    };
    let spec = params.0.reduction();
    let ens = py.detach(move || unraveling::run_ensemble(&init, &spec, &times, n_traj, master_seed)).map_err(to_py)?;
    Ok(PyEnsemble {
        n_traj: ens.n_traj,
        mean_r: ens.mean_rho.iter().map(DensityOp::r).collect(),
        stderr_r: ens.std_err.iter().map(|s| s.get(0, 0).re).collect(),
        mean_beta: ens.mean_rho.iter().map(DensityOp::beta).collect(),
        t_grid: ens.t_grid,
        outcome_labels: ens.outcome_labels,
        outcome_freq: ens.outcome_freq,
        first_jumps: ens.first_jumps,
        jump_counts: ens.jump_counts,
    })
}

/// `(name, description)` of every named scenario.
#[pyfunction]
fn list_experiments() -> Vec<(&'static str, &'static str)> {
    EXPERIMENTS.to_vec()
}

/// Fully resolved TOML configuration for `job`.
#[pyfunction]
#[pyo3(signature = (text = "", job = None))]
fn resolve_config(text: &str, job: Option<&str>) -> PyResult<String> {
    parse_config_for(text, job).map(|c| c.to_toml()).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Runs a named scenario; returns `(passed, report_json)`. With `out_dir`
/// the report and its CSV series are also written there.
#[pyfunction]
#[pyo3(signature = (name, config = "", out_dir = None))]
fn run_experiment(py: Python<'_>, name: &str, config: &str, out_dir: Option<&str>) -> PyResult<(bool, String)> {
    let cfg = parse_config_for(config, Some(name)).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let name = name.to_string();
    let mut rep = py.detach(move || build_report(&name, &cfg)).map_err(job_to_py)?;
    if let Some(dir) = out_dir {
        rep.write(Path::new(dir)).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    }
    Ok((rep.passed(), rep.to_json()))
}

#[pymodule]
fn dynred(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("RNG_ALGORITHM", unraveling::RNG_ALGORITHM)?;
    m.add_class::<PyParams>()?;
    m.add_class::<PyDensity>()?;
    m.add_class::<PyEnsemble>()?;
    m.add_function(wrap_pyfunction!(evolve_master, m)?)?;
    m.add_function(wrap_pyfunction!(analytic_two_level, m)?)?;
    m.add_function(wrap_pyfunction!(first_order_r, m)?)?;
    m.add_function(wrap_pyfunction!(steady_state, m)?)?;
    m.add_function(wrap_pyfunction!(run_ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(list_experiments, m)?)?;
    m.add_function(wrap_pyfunction!(resolve_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
