//! Python module `kinklab_py`. Keyword arguments are configuration keys
//! (`delta`, `L`, `h`, `epsilon`, `T`, ...) with the same meaning and
//! defaults as in a config file; results come back as dicts.

use kinklab::config::RunConfig;
use kinklab::diagnostics::coercivity_for;
use kinklab::pipeline::{self, Problem};
use kinklab::{profiles, Grid};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

fn py_err(e: kinklab::Error) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn config(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<RunConfig> {
    let mut pairs = Vec::new();
    if let Some(kw) = kwargs {
        for (k, v) in kw.iter() {
            pairs.push((k.extract::<String>()?, v.str()?.to_string()));
        }
    }
    RunConfig::load(None, &pairs).map_err(py_err)
}

fn to_py(py: Python<'_>, v: &Value) -> PyResult<Py<PyAny>> {
    Ok(match v {
        Value::Null => py.None(),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any().unbind(),
        Value::Number(n) => match (n.as_i64(), n.as_f64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any().unbind(),
            (None, Some(f)) => f.into_pyobject(py)?.into_any().unbind(),
            _ => py.None(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any().unbind(),
        Value::Array(a) => {
            let items = a.iter().map(|x| to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_any().unbind()
        }
        Value::Object(o) => {
            let d = PyDict::new(py);
            for (k, x) in o {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_any().unbind()
        }
    })
}

fn json_dict(py: Python<'_>, value: &impl serde::Serialize) -> PyResult<Py<PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &v)
}

/// Constant-speed golden-rule constants on `[-L, L]` with spacing `h`.
#[pyfunction]
#[pyo3(signature = (half_length = 40.0, h = 0.005))]
fn constants(py: Python<'_>, half_length: f64, h: f64) -> PyResult<Py<PyAny>> {
    let r = py.detach(|| pipeline::reproduce_constants(half_length, h)).map_err(py_err)?;
    json_dict(py, &r)
}

/// Stationary kink: grid, `K`, `H_delta` and the construction report.
#[pyfunction]
#[pyo3(signature = (**kwargs))]
fn kink(py: Python<'_>, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Py<PyAny>> {
    let cfg = config(kwargs)?;
    let p = py.detach(|| Problem::build(&cfg)).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("y", p.grid().nodes())?;
    d.set_item("K", p.kink.k.values().to_vec())?;
    d.set_item("H_delta", p.kink.h_delta.values().to_vec())?;
    d.set_item("report", json_dict(py, &p.kink.report(cfg.delta))?)?;
    Ok(d.into_any().unbind())
}

/// Spectral summary (eigenvalues, golden-rule constants, residuals).
#[pyfunction]
#[pyo3(signature = (oracle = true, **kwargs))]
fn spectrum(py: Python<'_>, oracle: bool, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Py<PyAny>> {
    let cfg = config(kwargs)?;
    let summary = py
        .detach(|| {
            let p = Problem::build(&cfg)?;
            p.spectral(oracle)?.summary(&p.drift.p)
        })
        .map_err(py_err)?;
    json_dict(py, &summary)
}

/// Coercivity constants `kappa_B`, `kappa_D`.
#[pyfunction]
#[pyo3(signature = (**kwargs))]
fn coercivity(py: Python<'_>, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Py<PyAny>> {
    let cfg = config(kwargs)?;
    let r = py
        .detach(|| {
            let p = Problem::build(&cfg)?;
            coercivity_for(&p.kink, &p.drift, cfg.seed)
        })
        .map_err(py_err)?;
    json_dict(py, &r)
}

/// Simulation report; no files are written.
#[pyfunction]
#[pyo3(signature = (**kwargs))]
fn simulate(py: Python<'_>, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Py<PyAny>> {
    let cfg = config(kwargs)?;
    let r = py
        .detach(|| {
            let p = Problem::build(&cfg)?;
            let s = p.spectral(false)?;
            Ok::<_, kinklab::Error>(pipeline::simulate(&p, &s, None)?.report())
        })
        .map_err(py_err)?;
    json_dict(py, &r)
}

/// Closed-form profile `name` sampled on `[-L, L]`; complex profiles
/// return `re` and `im`.
#[pyfunction]
#[pyo3(signature = (name, half_length = 40.0, h = 0.005))]
fn profile(py: Python<'_>, name: &str, half_length: f64, h: f64) -> PyResult<Py<PyAny>> {
    let g = Grid::symmetric(half_length, h).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("y", g.nodes())?;
    match profiles::special(name, g).map_err(py_err)? {
        profiles::Special::Real(f) => d.set_item("values", f.values().to_vec())?,
        profiles::Special::Complex(k) => {
            d.set_item("re", k.values().iter().map(|z| z.re).collect::<Vec<_>>())?;
            d.set_item("im", k.values().iter().map(|z| z.im).collect::<Vec<_>>())?;
        }
    }
    Ok(d.into_any().unbind())
}

#[pymodule]
fn kinklab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(constants, m)?)?;
    m.add_function(wrap_pyfunction!(kink, m)?)?;
    m.add_function(wrap_pyfunction!(spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(coercivity, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(profile, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
