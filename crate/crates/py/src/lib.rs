//! Python bindings: jump laws, Green functions, walk simulation, the
//! variational constants, tail estimates and the config runner.
//!
//! Reports come back as plain dicts built from their serialized form.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::Serialize;
use serde_json::Value;

use silt_core::config::ExperimentConfig;
use silt_core::gaussian::{default_battery, eisenbaum_test};
use silt_core::green::{green_free, green_torus, heat_kernel_torus};
use silt_core::ldp::{
    classify_regime, estimate_naive, estimate_tilted, sample_silt, DeviationSchedule, WalkModel,
    WindowGuards,
};
use silt_core::model::{ModelParams, TorusLaw as CoreTorusLaw};
use silt_core::variational::{solve_kappa, solve_rho, solve_rho1, SolverOptions};
use silt_core::{JumpLaw as CoreJumpLaw, Site};

fn err(e: silt_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(u)) => u.into_pyobject(py)?.into_any(),
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

fn report<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let value = serde_json::to_value(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_py(py, &value)
}

fn params(d: usize, alpha: f64, q: f64) -> PyResult<ModelParams> {
    ModelParams::new(d, alpha, q).map_err(err)
}

/// Power-law jump law on `Z^d`, enumerated up to radius `cutoff`.
#[pyclass]
struct JumpLaw {
    inner: CoreJumpLaw,
}

#[pymethods]
impl JumpLaw {
    #[new]
    #[pyo3(signature = (d, alpha, q = 2.0, cutoff = 4096))]
    fn new(d: usize, alpha: f64, q: f64, cutoff: usize) -> PyResult<Self> {
        Ok(JumpLaw {
            inner: CoreJumpLaw::new(params(d, alpha, q)?, cutoff).map_err(err)?,
        })
    }

    #[getter]
    fn c(&self) -> f64 {
        self.inner.c
    }

    #[getter]
    fn tail_mass(&self) -> f64 {
        self.inner.tail_mass
    }

    #[getter]
    fn regime(&self) -> &'static str {
        self.inner.params.regime.as_str()
    }

    fn mu(&self, z: Vec<i64>) -> f64 {
        self.inner.mu(Site::from_slice(&z))
    }

    fn psi(&self, theta: Vec<f64>) -> f64 {
        self.inner.psi(&theta)
    }

    /// Free Green function `G(0, x)` with the two-method discrepancy.
    fn green(&self, py: Python<'_>, x: Vec<i64>) -> PyResult<Py<PyAny>> {
        let e = green_free(&self.inner, Site::from_slice(&x)).map_err(err)?;
        Ok(report(py, &e)?.unbind())
    }

    fn describe(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        Ok(report(py, &self.inner.describe())?.unbind())
    }

    /// `κ(q; L)` on the box `[0, L]^d`.
    #[pyo3(signature = (l, starts = 8))]
    fn kappa(&self, py: Python<'_>, l: usize, starts: usize) -> PyResult<Py<PyAny>> {
        let opts = SolverOptions { starts, ..SolverOptions::default() };
        let r = solve_kappa(&self.inner, self.inner.params.q, l, &opts).map_err(err)?;
        Ok(report(py, &r)?.unbind())
    }

    /// `ρ(q; L)` on the box `[0, L]^d`.
    #[pyo3(signature = (l, starts = 8))]
    fn rho(&self, py: Python<'_>, l: usize, starts: usize) -> PyResult<Py<PyAny>> {
        let opts = SolverOptions { starts, ..SolverOptions::default() };
        let r = solve_rho(&self.inner, self.inner.params.q, l, &opts).map_err(err)?;
        Ok(report(py, &r)?.unbind())
    }

    /// Samples of `I_T` for `n` free walks.
    fn silt_sample(&self, t: f64, n: usize, seed: u64) -> PyResult<Vec<f64>> {
        let s = sample_silt(WalkModel::Free(&self.inner), t, self.inner.params.q, n, seed).map_err(err)?;
        Ok(s.values)
    }

    /// `P[I_T >= b^q]` by plain Monte Carlo or confinement tilting.
    #[pyo3(signature = (t, b, n, seed, method = "naive", ball_radius = 1.0))]
    fn tail(
        &self,
        py: Python<'_>,
        t: f64,
        b: f64,
        n: usize,
        seed: u64,
        method: &str,
        ball_radius: f64,
    ) -> PyResult<Py<PyAny>> {
        let sch = DeviationSchedule::new(t, b, self.inner.params.q, 1.0, WindowGuards::default()).map_err(err)?;
        let walk = WalkModel::Free(&self.inner);
        let e = match method {
            "naive" => estimate_naive(walk, &sch, n, seed),
            "tilted" => estimate_tilted(walk, &sch, ball_radius, n, seed),
            other => return Err(PyValueError::new_err(format!("unknown method `{other}`"))),
        }
        .map_err(err)?;
        Ok(report(py, &e)?.unbind())
    }
}

/// Exact torus projection of the jump law.
#[pyclass]
struct TorusLaw {
    inner: CoreTorusLaw,
}

#[pymethods]
impl TorusLaw {
    #[new]
    #[pyo3(signature = (d, alpha, side, q = 2.0))]
    fn new(d: usize, alpha: f64, side: usize, q: f64) -> PyResult<Self> {
        Ok(TorusLaw {
            inner: CoreTorusLaw::from_params(params(d, alpha, q)?, side, 0).map_err(err)?,
        })
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights.clone()
    }

    #[getter]
    fn symbol(&self) -> Vec<f64> {
        self.inner.symbol.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Row `G_{R,λ}(0, ·)` in site-index order.
    fn green(&self, lambda: f64) -> PyResult<Vec<f64>> {
        Ok(green_torus(&self.inner, lambda).map_err(err)?.values)
    }

    fn heat(&self, t: f64) -> PyResult<Vec<f64>> {
        Ok(heat_kernel_torus(&self.inner, t).map_err(err)?.values)
    }

    #[pyo3(signature = (lambda, starts = 8))]
    fn rho1(&self, py: Python<'_>, lambda: f64, starts: usize) -> PyResult<Py<PyAny>> {
        let g = green_torus(&self.inner, lambda).map_err(err)?;
        let opts = SolverOptions { starts, ..SolverOptions::default() };
        let r = solve_rho1(&g, self.inner.params.q, &opts).map_err(err)?;
        Ok(report(py, &r)?.unbind())
    }

    /// Two-sample isomorphism test on the default functional battery.
    #[pyo3(signature = (lambda, s, n, seed, z_max = 4.0))]
    fn eisenbaum(&self, py: Python<'_>, lambda: f64, s: f64, n: usize, seed: u64, z_max: f64) -> PyResult<Py<PyAny>> {
        let p = self.inner.params;
        let battery = default_battery(p.d, self.inner.side(), p.q);
        let r = eisenbaum_test(&self.inner, lambda, s, &battery, n, seed, z_max).map_err(err)?;
        Ok(report(py, &r)?.unbind())
    }

    fn silt_sample(&self, t: f64, n: usize, seed: u64) -> PyResult<Vec<f64>> {
        let s = sample_silt(WalkModel::Torus(&self.inner), t, self.inner.params.q, n, seed).map_err(err)?;
        Ok(s.values)
    }
}

#[pyfunction]
#[pyo3(signature = (d, alpha, q, t = 1e4, b = 1e2))]
fn regime(py: Python<'_>, d: usize, alpha: f64, q: f64, t: f64, b: f64) -> PyResult<Py<PyAny>> {
    let r = classify_regime(&params(d, alpha, q)?, t, b).map_err(err)?;
    Ok(report(py, &r)?.unbind())
}

/// Run a TOML experiment config; returns the run manifest.
#[pyfunction]
#[pyo3(signature = (config, workers = None))]
fn run_config(py: Python<'_>, config: &str, workers: Option<usize>) -> PyResult<Py<PyAny>> {
    let cfg = ExperimentConfig::from_toml(config).map_err(err)?;
    let outcome = py.detach(|| silt_core::runner::run(&cfg, workers)).map_err(err)?;
    Ok(report(py, &outcome.manifest)?.unbind())
}

#[pymodule]
fn siltlab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<JumpLaw>()?;
    m.add_class::<TorusLaw>()?;
    m.add_function(wrap_pyfunction!(regime, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add("__version__", silt_core::runner::VERSION)?;
    Ok(())
}
