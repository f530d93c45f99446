//! Python bindings: run configs, systems, reach results, checks, coverage and
//! envelopes.

use std::path::PathBuf;

use nfl_reach::backreach::{run_backreach, BackreachResult};
use nfl_reach::cli::{CliError, LoadedConfig};
use nfl_reach::geometry::{Interval, Polytope};
use nfl_reach::nfl::NeuralFeedbackLoop;
use nfl_reach::pwl::{build_envelope, PwlEnvelope, ScalarFn};
use nfl_reach::verify::{check_goal_reaching, estimate_coverage, Verdict};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

create_exception!(nfl_reach, ReachError, PyException);

fn reach_err(e: impl std::fmt::Display) -> PyErr {
    ReachError::new_err(e.to_string())
}

fn cli_err(e: CliError) -> PyErr {
    match e {
        CliError::Config(m) => PyValueError::new_err(m),
        CliError::Compute(m) => ReachError::new_err(m),
    }
}

/// A run configuration file with its system, goal and reach settings.
#[pyclass(name = "RunConfig", module = "nfl_reach")]
struct PyRunConfig {
    inner: LoadedConfig,
}

#[pymethods]
impl PyRunConfig {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        LoadedConfig::load(&path).map(|inner| PyRunConfig { inner }).map_err(cli_err)
    }

    fn system(&self) -> PyResult<PySystem> {
        self.inner.system().map(|inner| PySystem { inner }).map_err(cli_err)
    }

    /// Overrides `k` and `n_samp` when given.
    #[pyo3(signature = (k=None, n_samp=None))]
    fn reach(&self, py: Python<'_>, k: Option<usize>, n_samp: Option<usize>) -> PyResult<PyBackreachResult> {
        let nfl = self.inner.system().map_err(cli_err)?;
        let goal = self.inner.goal().map_err(cli_err)?;
        let mut cfg = self.inner.config.reach.clone();
        cfg.k = k.unwrap_or(cfg.k);
        cfg.n_samp = n_samp.unwrap_or(cfg.n_samp);
        let (result, _) = py.detach(|| run_backreach(&nfl, &goal, &cfg)).map_err(reach_err)?;
        Ok(PyBackreachResult { inner: result })
    }

    /// Coverage report as a dict; step fractions are `None` when undefined.
    #[pyo3(signature = (result, samples=None, seed=None))]
    fn coverage(
        &self,
        py: Python<'_>,
        result: &PyBackreachResult,
        samples: Option<usize>,
        seed: Option<u64>,
    ) -> PyResult<Py<PyAny>> {
        let nfl = self.inner.system().map_err(cli_err)?;
        let goal = self.inner.goal().map_err(cli_err)?;
        let n = samples.unwrap_or(self.inner.config.coverage.samples);
        let s = seed.unwrap_or(self.inner.config.coverage.seed);
        let report = py.detach(|| estimate_coverage(&nfl, &goal, &result.inner, n, s)).map_err(reach_err)?;
        json_to_py(py, &serde_json::to_string(&report).expect("report serializes"))
    }
}

/// Closed-loop system.
#[pyclass(name = "System", module = "nfl_reach")]
struct PySystem {
    inner: NeuralFeedbackLoop,
}

#[pymethods]
impl PySystem {
    #[getter]
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    fn control(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_dim(&x)?;
        Ok(self.inner.controller.forward(&x))
    }

    fn step(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_dim(&x)?;
        Ok(self.inner.step(&x))
    }

    fn simulate(&self, x: Vec<f64>, t: usize) -> PyResult<Vec<f64>> {
        self.check_dim(&x)?;
        Ok(self.inner.simulate(&x, t))
    }
}

impl PySystem {
    fn check_dim(&self, x: &[f64]) -> PyResult<()> {
        if x.len() != self.inner.state_dim() {
            return Err(PyValueError::new_err(format!("expected a {}-vector", self.inner.state_dim())));
        }
        Ok(())
    }
}

/// Ball unions for steps 1..k.
#[pyclass(name = "BackreachResult", module = "nfl_reach")]
struct PyBackreachResult {
    inner: BackreachResult,
}

#[pymethods]
impl PyBackreachResult {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        BackreachResult::from_json(text).map(|inner| PyBackreachResult { inner }).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        nfl_reach::cli::load_result(&path).map(|inner| PyBackreachResult { inner }).map_err(cli_err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn config_hash(&self) -> String {
        self.inner.config_hash.clone()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps.len()
    }

    /// `(t, center, radius, norm)` for every stored ball.
    fn balls(&self) -> Vec<(usize, Vec<f64>, f64, String)> {
        self.inner.balls().map(|(t, b)| (t, b.center.clone(), b.radius, b.norm.as_str().to_string())).collect()
    }

    /// Goal-reaching check for the start set `{x | a x <= b}`. Returns
    /// `(True, None)` for a subset and `(False, witness)` otherwise.
    fn check(&self, py: Python<'_>, a: Vec<Vec<f64>>, b: Vec<f64>) -> PyResult<(bool, Option<Vec<f64>>)> {
        let start = Polytope::new(a, b).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let cfg = &self.inner.config;
        let v = py
            .detach(|| check_goal_reaching(&start, &self.inner, &cfg.solver, &cfg.backend))
            .map_err(reach_err)?;
        Ok(match v.verdict {
            Verdict::Subset => (true, None),
            Verdict::NotSubset { witness } => (false, Some(witness)),
        })
    }
}

/// Certified lower/upper piecewise-linear bounds of a scalar function.
#[pyclass(name = "Envelope", module = "nfl_reach")]
struct PyEnvelope {
    inner: PwlEnvelope,
}

#[pymethods]
impl PyEnvelope {
    #[getter]
    fn knots(&self) -> Vec<f64> {
        self.inner.knots().to_vec()
    }

    #[getter]
    fn lower(&self) -> Vec<f64> {
        self.inner.lower.values.clone()
    }

    #[getter]
    fn upper(&self) -> Vec<f64> {
        self.inner.upper.values.clone()
    }

    #[getter]
    fn certified_rel_error(&self) -> f64 {
        self.inner.certified_rel_error
    }

    fn bounds_at(&self, x: f64) -> PyResult<(f64, f64)> {
        let d = self.inner.domain;
        if !(x >= d.lo && x <= d.hi) {
            return Err(PyValueError::new_err(format!("{x} is outside [{}, {}]", d.lo, d.hi)));
        }
        let iv = self.inner.bounds_at(x);
        Ok((iv.lo, iv.hi))
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }
}

/// Envelope of `sin` or `cos` on `[lo, hi]` with relative error at most `rel_tol`.
#[pyfunction(name = "build_envelope")]
fn py_build_envelope(func: &str, lo: f64, hi: f64, rel_tol: f64) -> PyResult<PyEnvelope> {
    let f = match func {
        "sin" => ScalarFn::Sin,
        "cos" => ScalarFn::Cos,
        other => return Err(PyValueError::new_err(format!("unknown function {other:?}; expected sin or cos"))),
    };
    build_envelope(&f, Interval::new(lo, hi), rel_tol)
        .map(|inner| PyEnvelope { inner })
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn json_to_py(py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
    let json = py.import("json")?;
    Ok(json.call_method1("loads", (text,))?.unbind())
}

#[pymodule]
#[pyo3(name = "nfl_reach")]
fn nfl_reach_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PySystem>()?;
    m.add_class::<PyBackreachResult>()?;
    m.add_class::<PyEnvelope>()?;
    m.add_function(wrap_pyfunction!(py_build_envelope, m)?)?;
    m.add("ReachError", m.py().get_type::<ReachError>())?;
    Ok(())
}
