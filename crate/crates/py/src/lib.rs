//! Python bindings for the simulator: timer math, setup listing, and a
//! `Scenario` class that loads a spec file, applies overrides, and runs
//! matrix cells to plain dictionaries.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyList, PyString};
use serde_json::Value;

use gnsim_core::geo::GeoPosition;
use gnsim_core::router::SetupProfile;
use gnsim_core::scenario::ScenarioSpec;
use gnsim_core::{cbf, geo, runner};

/// Contention timer in milliseconds for a forwarding metric of `metric_m`
/// meters, under the default 100 ms / 1 ms / 1000 m parameters.
#[pyfunction]
fn cbf_timer_ms(metric_m: f64) -> f64 {
    cbf::cbf_timer_ms(metric_m)
}

/// Slotted contention timer: `(timeout_ms, slot)` for a metric of
/// `metric_m` meters under the default parameters.
#[pyfunction]
fn scbf_timer_ms(metric_m: f64) -> (f64, u32) {
    cbf::scbf_timer_ms(metric_m)
}

/// Distance progress (meters) a candidate at `candidate` makes toward
/// `center` relative to a sender at `sender`; positive means closer.
#[pyfunction]
fn progress_toward(sender: (f64, f64), candidate: (f64, f64), center: (f64, f64)) -> f64 {
    let p = |t: (f64, f64)| GeoPosition { x: t.0, y: t.1 };
    geo::progress_toward(p(sender), p(candidate), p(center))
}

/// Planar distance in meters between two `(x, y)` points.
#[pyfunction]
fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    let p = |t: (f64, f64)| GeoPosition { x: t.0, y: t.1 };
    geo::planar_distance(p(a), p(b))
}

/// Identifiers of the built-in forwarding setups, in definition order.
#[pyfunction]
fn list_setups() -> Vec<&'static str> {
    SetupProfile::all().iter().map(|s| s.id).collect()
}

fn json_to_py(py: Python<'_>, v: &Value) -> PyResult<Py<PyAny>> {
    Ok(match v {
        Value::Null => py.None(),
        Value::Bool(b) => PyBool::new(py, *b).to_owned().into_any().unbind(),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any().unbind()
            } else if let Some(u) = n.as_u64() {
                u.into_pyobject(py)?.into_any().unbind()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any().unbind()
            }
        }
        Value::String(s) => PyString::new(py, s).into_any().unbind(),
        Value::Array(a) => {
            let list = PyList::empty(py);
            for item in a {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any().unbind()
        }
        Value::Object(o) => {
            let d = PyDict::new(py);
            for (k, val) in o {
                d.set_item(k, json_to_py(py, val)?)?;
            }
            d.into_any().unbind()
        }
    })
}

/// A parsed scenario file plus overrides; expands into matrix cells that can
/// be run individually.
#[pyclass]
struct Scenario {
    spec: ScenarioSpec,
}

#[pymethods]
impl Scenario {
    /// Load a scenario file (includes are resolved relative to it).
    #[new]
    fn new(path: &str) -> PyResult<Self> {
        let spec = ScenarioSpec::load(std::path::Path::new(path))
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Scenario { spec })
    }

    /// Override one scenario key, e.g. `set("densities", "10")`.
    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.spec.set(key, value).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// Full validation pass; raises `ValueError` with the offending key path.
    fn validate(&self) -> PyResult<()> {
        self.spec.validate().map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// Identifiers of all matrix cells this scenario expands to.
    fn cell_ids(&self) -> Vec<String> {
        self.spec.cells().iter().map(|c| c.id()).collect()
    }

    /// Run one cell to completion and return its summary metrics as a dict
    /// (same content as the cell's `summary.json`).
    fn run_cell(&self, py: Python<'_>, cell_id: &str) -> PyResult<Py<PyAny>> {
        let cells = self.spec.cells();
        let cell = cells
            .iter()
            .find(|c| c.id() == cell_id)
            .ok_or_else(|| PyValueError::new_err(format!("no such cell: {cell_id}")))?;
        let metrics = py
            .detach(|| runner::run_cell(&self.spec, cell))
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let value =
            serde_json::to_value(&metrics).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        json_to_py(py, &value)
    }

    fn __repr__(&self) -> String {
        format!("Scenario(name={:?}, cells={})", self.spec.name, self.spec.cells().len())
    }
}

#[pymodule]
fn gnsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(cbf_timer_ms, m)?)?;
    m.add_function(wrap_pyfunction!(scbf_timer_ms, m)?)?;
    m.add_function(wrap_pyfunction!(progress_toward, m)?)?;
    m.add_function(wrap_pyfunction!(distance, m)?)?;
    m.add_function(wrap_pyfunction!(list_setups, m)?)?;
    m.add_class::<Scenario>()?;
    Ok(())
}
