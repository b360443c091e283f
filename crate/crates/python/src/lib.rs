//! Python module `gpseg`: grids, state pairs, the energy functionals, both
//! flows, minimax levels, sweeps and the invariant checks.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyString};

use gpseg::flows::{self, FlowConfig, FlowTrace};
use gpseg::functionals::{self as fx, SignedField, StatePair};
use gpseg::grid::{Field, Grid};
use gpseg::minimax::{self, Beta, MinimaxConfig};
use gpseg::sweep::{self, SweepConfig};

fn err(e: gpseg::Error) -> PyErr {
    let msg = format!("{}: {e}", e.kind());
    if e.exit_code() == 2 {
        PyValueError::new_err(msg)
    } else {
        PyRuntimeError::new_err(msg)
    }
}

fn beta_arg(b: &Bound<'_, PyAny>) -> PyResult<Beta> {
    if let Ok(s) = b.cast::<PyString>() {
        let s = s.to_str()?;
        return Beta::parse(s).ok_or_else(|| PyValueError::new_err(format!("bad coupling `{s}`")));
    }
    let v: f64 = b.extract()?;
    Beta::parse(&v.to_string()).ok_or_else(|| PyValueError::new_err(format!("bad coupling {v}")))
}

fn json<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "Grid", module = "gpseg", frozen, from_py_object)]
#[derive(Clone)]
struct PyGrid(Grid);

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (n, length = 1.0, dim = 1, length_y = None))]
    fn new(n: usize, length: f64, dim: usize, length_y: Option<f64>) -> PyResult<Self> {
        let g = match dim {
            1 => Grid::interval(n, length),
            _ => Grid::new(dim, n, &[length, length_y.unwrap_or(length)]),
        };
        g.map(PyGrid).map_err(err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn h(&self) -> f64 {
        self.0.h(0)
    }

    #[getter]
    fn measure(&self) -> f64 {
        self.0.measure()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// Node coordinates along `axis`.
    #[pyo3(signature = (axis = 0))]
    fn coords(&self, axis: usize) -> Vec<f64> {
        (0..self.0.n()).map(|i| self.0.coord(axis, i)).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Grid(dim={}, n={}, lengths={:?})",
            self.0.dim(),
            self.0.n(),
            self.0.lengths()
        )
    }
}

#[pyclass(name = "StatePair", module = "gpseg", frozen, from_py_object)]
#[derive(Clone)]
struct PyStatePair(StatePair);

#[pymethods]
impl PyStatePair {
    /// Normalizes the positive parts of `u` and `v` to unit mass.
    #[new]
    fn new(grid: &PyGrid, u: Vec<f64>, v: Vec<f64>) -> PyResult<Self> {
        let u = Field::new(grid.0, u).map_err(err)?;
        let v = Field::new(grid.0, v).map_err(err)?;
        StatePair::normalized(&u, &v).map(PyStatePair).map_err(err)
    }

    #[staticmethod]
    fn two_bump(grid: &PyGrid) -> Self {
        PyStatePair(gpseg::sampling::two_bump_pair(grid.0))
    }

    #[getter]
    fn u(&self) -> Vec<f64> {
        self.0.u().values().to_vec()
    }

    #[getter]
    fn v(&self) -> Vec<f64> {
        self.0.v().values().to_vec()
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(*self.0.grid())
    }

    fn masses(&self) -> (f64, f64) {
        self.0.masses()
    }

    fn swapped(&self) -> Self {
        PyStatePair(self.0.swapped())
    }

    fn energy(&self, beta: f64) -> f64 {
        fx::energy_beta(&self.0, beta)
    }

    fn multipliers(&self, beta: f64) -> (f64, f64) {
        let m = fx::multipliers(&self.0, beta);
        (m.lambda, m.mu)
    }

    fn residual(&self, beta: f64) -> f64 {
        fx::residual_beta(&self.0, beta)
    }

    fn gradient(&self, beta: f64) -> (Vec<f64>, Vec<f64>) {
        let (a, b) = fx::gradient_beta(&self.0, beta);
        (a.into_values(), b.into_values())
    }

    fn segregation(&self) -> f64 {
        sweep::segregation_integral(&self.0)
    }

    fn distance(&self, other: &PyStatePair) -> f64 {
        flows::pair_distance(&self.0, &other.0)
    }

    fn quotient_distance(&self, other: &PyStatePair) -> f64 {
        flows::quotient_distance(&self.0, &other.0)
    }
}

fn signed(grid: &PyGrid, w: Vec<f64>) -> PyResult<SignedField> {
    SignedField::new(Field::new(grid.0, w).map_err(err)?).map_err(err)
}

/// `J*(w)` for a sign-changing `w` with unit-mass sign parts.
#[pyfunction]
fn energy_star(grid: &PyGrid, w: Vec<f64>) -> PyResult<f64> {
    Ok(fx::energy_star(&signed(grid, w)?))
}

/// `(λ̃, μ̃, det A)` for a sign-changing `w`.
#[pyfunction]
fn tilde_multipliers(grid: &PyGrid, w: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    let t = fx::tilde_multipliers(&signed(grid, w)?).map_err(err)?;
    Ok((t.lambda_tilde, t.mu_tilde, t.det_a))
}

#[pyfunction]
fn residual_infty(grid: &PyGrid, w: Vec<f64>) -> PyResult<f64> {
    fx::residual_infty(&signed(grid, w)?).map_err(err)
}

fn flow_config(
    beta: Beta,
    dt_init: Option<f64>,
    residual_tol: Option<f64>,
    max_steps: Option<usize>,
) -> FlowConfig {
    let mut cfg = if beta.is_infinite() {
        FlowConfig::infty_default()
    } else {
        FlowConfig::beta_default()
    };
    if let Some(v) = dt_init {
        cfg.dt_init = v;
    }
    if let Some(v) = residual_tol {
        cfg.residual_tol = v;
    }
    if let Some(v) = max_steps {
        cfg.max_steps = v;
    }
    cfg
}

fn trace_dict<'py>(py: Python<'py>, t: &FlowTrace) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    let col = |f: fn(&flows::TraceEntry) -> f64| t.entries.iter().map(f).collect::<Vec<f64>>();
    d.set_item("time", col(|e| e.time))?;
    d.set_item("dt", col(|e| e.dt))?;
    d.set_item("energy", col(|e| e.energy))?;
    d.set_item("residual", col(|e| e.residual))?;
    d.set_item("lambda", col(|e| e.lambda))?;
    d.set_item("mu", col(|e| e.mu))?;
    d.set_item("converged", t.converged)?;
    d.set_item("steps", t.accepted_steps())?;
    Ok(d)
}

/// Relaxes a pair under the β-flow; returns `(state, trace)`.
#[pyfunction]
#[pyo3(signature = (state, beta, dt_init = None, residual_tol = None, max_steps = None))]
fn relax_beta<'py>(
    py: Python<'py>,
    state: &PyStatePair,
    beta: f64,
    dt_init: Option<f64>,
    residual_tol: Option<f64>,
    max_steps: Option<usize>,
) -> PyResult<(PyStatePair, Bound<'py, PyDict>)> {
    let cfg = flow_config(Beta::Finite(beta), dt_init, residual_tol, max_steps);
    let (s, t) = py
        .detach(|| flows::relax_beta(&state.0, beta, &cfg))
        .map_err(err)?;
    Ok((PyStatePair(s), trace_dict(py, &t)?))
}

/// Relaxes `w` under the limit flow; returns `(w, trace)`.
#[pyfunction]
#[pyo3(signature = (grid, w, dt_init = None, residual_tol = None, max_steps = None))]
fn relax_infty<'py>(
    py: Python<'py>,
    grid: &PyGrid,
    w: Vec<f64>,
    dt_init: Option<f64>,
    residual_tol: Option<f64>,
    max_steps: Option<usize>,
) -> PyResult<(Vec<f64>, Bound<'py, PyDict>)> {
    let w = signed(grid, w)?;
    let cfg = flow_config(Beta::Infinite, dt_init, residual_tol, max_steps);
    let (w, t) = py.detach(|| flows::relax_infty(&w, &cfg)).map_err(err)?;
    Ok((w.into_field().into_values(), trace_dict(py, &t)?))
}

/// Minimax level estimate and its extracted critical point.
#[pyfunction]
#[pyo3(signature = (grid, k, beta, m = None, seed = 0))]
fn minimax_level<'py>(
    py: Python<'py>,
    grid: &PyGrid,
    k: usize,
    beta: &Bound<'py, PyAny>,
    m: Option<usize>,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let beta = beta_arg(beta)?;
    let cfg = MinimaxConfig {
        seed,
        ..MinimaxConfig::for_beta(beta)
    };
    let m = m.unwrap_or_else(|| minimax::default_sample_size(k));
    let g = grid.0;
    let (est, crit) = py
        .detach(|| {
            let basis = minimax::build_phi_basis(&g, k)?;
            let (est, fam) = minimax::minimax_level(k, beta, &basis, m, &cfg)?;
            let crit = minimax::extract_critical(&est, &fam, &cfg)?;
            Ok::<_, gpseg::Error>((est, crit))
        })
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("level", est.value)?;
    d.set_item("history", est.history.clone())?;
    d.set_item("argmax", est.argmax)?;
    d.set_item("residual", crit.residual())?;
    d.set_item("stationary", crit.is_stationary())?;
    d.set_item("multipliers", crit.lambda_mu())?;
    d.set_item("state", PyStatePair(crit.pair()))?;
    Ok(d)
}

/// Runs a β-sweep; returns the nested report as Python objects.
#[pyfunction]
#[pyo3(signature = (grid, betas, k = 1))]
fn run_sweep<'py>(
    py: Python<'py>,
    grid: &PyGrid,
    betas: Vec<f64>,
    k: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let g = grid.0;
    let report = py
        .detach(|| sweep::run_sweep(k, &betas, &g, &SweepConfig::default()))
        .map_err(err)?;
    let diag = sweep::limit_point_check(&report, SweepConfig::default().limit_tol);
    let mut v = report.to_json(false).map_err(err)?;
    v["limit_point"] =
        serde_json::to_value(&diag).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    v["csv"] = serde_json::Value::String(report.to_csv(None));
    json(py, &v)
}

/// The invariant suites: list of `(suite, check, passed, detail)`.
#[pyfunction]
#[pyo3(signature = (seed = 0, samples = 20))]
fn run_checks(py: Python<'_>, seed: u64, samples: usize) -> Vec<(String, String, bool, String)> {
    py.detach(|| gpseg::checks::run_checks(seed, samples))
        .into_iter()
        .map(|r| (r.suite.to_string(), r.name.to_string(), r.passed, r.detail))
        .collect()
}

/// Parses a `key = value` config; returns its hash.
#[pyfunction]
fn config_hash(text: &str) -> PyResult<String> {
    gpseg::config::RunConfig::parse(text)
        .map(|c| c.hash())
        .map_err(err)
}

#[pymodule(name = "gpseg")]
fn gpseg_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyStatePair>()?;
    m.add_function(wrap_pyfunction!(energy_star, m)?)?;
    m.add_function(wrap_pyfunction!(tilde_multipliers, m)?)?;
    m.add_function(wrap_pyfunction!(residual_infty, m)?)?;
    m.add_function(wrap_pyfunction!(relax_beta, m)?)?;
    m.add_function(wrap_pyfunction!(relax_infty, m)?)?;
    m.add_function(wrap_pyfunction!(minimax_level, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(run_checks, m)?)?;
    m.add_function(wrap_pyfunction!(config_hash, m)?)?;
    Ok(())
}
