//! Python module `volac`: potential certificates, radial ground states, the
//! Morse bookkeeping and the experiment runner.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use volac_core::domain::GridDomain;
use volac_core::radial::{minimize_radial, support_radius, RadialGrid, RadialOptions};
use volac_core::spectral::morse_relation_check;
use volac_core::{certify, Potential};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Certificate of a potential spec such as `"kind=quartic a1=1 a2=2"`, as a
/// JSON string.
#[pyfunction]
fn certificate(spec: &str) -> PyResult<String> {
    let p = Potential::from_spec(spec, None).map_err(value_err)?;
    let c = certify(&p).map_err(value_err)?;
    serde_json::to_string(&c).map_err(value_err)
}

/// Radial minimiser at mass `gamma`: energy, multiplier, mass and support radius.
#[pyfunction]
#[pyo3(signature = (spec, gamma, dim = 2, h = 0.02))]
fn radial<'py>(py: Python<'py>, spec: &str, gamma: f64, dim: usize, h: f64) -> PyResult<Bound<'py, PyDict>> {
    let p = Potential::from_spec(spec, None).map_err(value_err)?;
    let c = certify(&p).map_err(value_err)?;
    let grid = RadialGrid::for_gamma(&c, dim, gamma, h).map_err(value_err)?;
    let prof = py
        .detach(|| minimize_radial(&p, &c, gamma, &grid, &RadialOptions::default()))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let d = PyDict::new(py);
    d.set_item("energy", prof.energy)?;
    d.set_item("lambda", prof.lambda)?;
    d.set_item("mass", prof.mass)?;
    d.set_item("support_radius", support_radius(&prof, 1e-8).radius)?;
    d.set_item("values", prof.values)?;
    Ok(d)
}

/// Morse relation for `indices` on the domain described by `domain_spec`:
/// `(consistent, q, remainder)`.
#[pyfunction]
fn morse_check(indices: Vec<usize>, domain_spec: &str) -> PyResult<(bool, Vec<i64>, i64)> {
    let d = GridDomain::from_spec(domain_spec).map_err(value_err)?;
    let topo = d.topology().map_err(value_err)?;
    let v = morse_relation_check(&indices, &topo);
    Ok((v.consistent, v.q, v.remainder))
}

/// Runs the TOML experiment at `path` and returns the manifest path.
#[pyfunction]
fn run_config(py: Python<'_>, path: PathBuf) -> PyResult<PathBuf> {
    let cfg = volac_cli::ExperimentConfig::load(&path).map_err(value_err)?;
    match py.detach(|| volac_cli::run(&cfg)) {
        Ok(r) => Ok(r.manifest_path),
        Err(e @ volac_cli::RunError::Numerical(_)) => Err(PyRuntimeError::new_err(e.to_string())),
        Err(e) => Err(value_err(e)),
    }
}

#[pymodule]
fn volac(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(certificate, m)?)?;
    m.add_function(wrap_pyfunction!(radial, m)?)?;
    m.add_function(wrap_pyfunction!(morse_check, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
