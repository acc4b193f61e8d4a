//! Python module `hpl`: delay checks, horizons, tensor containers, datasets,
//! operator inference, closed-loop runs and margin reports.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use hpl_core::bench::{gen_dataset as core_gen_dataset, verify_dataset as core_verify_dataset, DatasetConfig};
use hpl_core::config::{Config, HorizonMethod};
use hpl_core::container::{ContainerError, Tensor, TensorContainer, TensorData};
use hpl_core::delay::{check_assumptions as core_check, Delay, DelayParams};
use hpl_core::horizon::Scheme;
use hpl_core::margins::compute_margins;
use hpl_core::neural::OperatorWeights;
use hpl_core::scenario::{compute_horizon, HorizonRequest, RunError, Scenario};

fn run_err(e: RunError) -> PyErr {
    match e.exit_code() {
        1 | 2 => PyValueError::new_err(e.to_string()),
        4 => PyOSError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn container_err(e: ContainerError) -> PyErr {
    match e {
        ContainerError::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_method(name: &str) -> PyResult<HorizonMethod> {
    Ok(match name {
        "oracle" => HorizonMethod::Oracle,
        "euler" => HorizonMethod::Euler,
        "rk4" => HorizonMethod::Rk4,
        "fno" => HorizonMethod::Fno,
        "windowed" => HorizonMethod::Windowed,
        other => return Err(PyValueError::new_err(format!("unknown method {other:?}"))),
    })
}

fn params(p: [f64; 5]) -> DelayParams {
    DelayParams::from_row(&p)
}

/// `D(t)` at each `t` for parameters `(a, b, alpha, omega, varphi)`.
#[pyfunction]
fn delay_value(p: [f64; 5], t: Vec<f64>) -> Vec<f64> {
    let d = params(p);
    t.iter().map(|&x| d.value(x)).collect()
}

/// Assumption constants of one delay over `[0, t_end]`.
#[pyfunction]
#[pyo3(signature = (p, t_end = 12.0, grid_step = 1e-3))]
fn check_assumptions<'py>(py: Python<'py>, p: [f64; 5], t_end: f64, grid_step: f64) -> PyResult<Bound<'py, PyDict>> {
    if !(t_end > 0.0 && grid_step > 0.0) {
        return Err(PyValueError::new_err("t_end and grid_step must be positive"));
    }
    let r = core_check(&params(p), t_end, grid_step);
    let d = PyDict::new(py);
    d.set_item("pi0_star", r.pi0_star)?;
    d.set_item("pi1_star", r.pi1_star)?;
    d.set_item("pi2_star", r.pi2_star)?;
    d.set_item("pi3_star", r.pi3_star)?;
    d.set_item("valid", r.valid)?;
    d.set_item("first_violation_time", r.first_violation_time)?;
    Ok(d)
}

/// Horizon of one delay as `(grid, psi, residual)`.
#[pyfunction]
#[pyo3(signature = (p, method = "oracle", h = 1e-3, t_end = 12.0, window_h = 1.0, weights = None))]
fn horizon(
    p: [f64; 5],
    method: &str,
    h: f64,
    t_end: f64,
    window_h: f64,
    weights: Option<&str>,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let method = parse_method(method)?;
    let w = weights
        .map(OperatorWeights::load)
        .transpose()
        .map_err(|e| run_err(e.into()))?;
    let d = params(p);
    let s = compute_horizon(
        &d,
        &HorizonRequest {
            method,
            h,
            t_end,
            window_h,
            window_scheme: Scheme::Euler,
            weights: w.as_ref(),
        },
    )
    .map_err(run_err)?;
    let r = s.residuals(&d);
    Ok((s.grid, s.values, r))
}

/// Contents of a tensor container: `(metadata_json, {name: (dims, values, dtype)})`.
#[pyfunction]
fn read_container(path: &str) -> PyResult<(String, BTreeMap<String, (Vec<usize>, Vec<f64>, &'static str)>)> {
    let c = TensorContainer::load(path).map_err(container_err)?;
    let tensors = c
        .tensors()
        .iter()
        .map(|t| {
            let dtype = match t.data {
                TensorData::F32(_) => "f32",
                TensorData::F64(_) => "f64",
            };
            (t.name.clone(), (t.dims.clone(), t.data.to_f64(), dtype))
        })
        .collect();
    Ok((c.metadata.to_string(), tensors))
}

/// Write a container. Tensors are `(name, dims, values, dtype)` with dtype
/// `"f32"` or `"f64"`, stored in the given order.
#[pyfunction]
fn write_container(path: &str, metadata_json: &str, tensors: Vec<(String, Vec<usize>, Vec<f64>, String)>) -> PyResult<()> {
    let meta: serde_json::Value =
        serde_json::from_str(metadata_json).map_err(|e| PyValueError::new_err(format!("metadata: {e}")))?;
    let mut c = TensorContainer::new(meta);
    for (name, dims, values, dtype) in tensors {
        let data = match dtype.as_str() {
            "f64" => TensorData::F64(values),
            "f32" => TensorData::F32(values.into_iter().map(|x| x as f32).collect()),
            other => return Err(PyValueError::new_err(format!("tensor {name:?}: unknown dtype {other:?}"))),
        };
        c.push(Tensor::new(name, dims, data).map_err(container_err)?).map_err(container_err)?;
    }
    c.save(path).map_err(container_err)
}

/// Generate an oracle dataset and save it; returns the largest stored residual.
#[pyfunction]
#[pyo3(signature = (path, n_samples, seed = 0, resolution = 1024, horizon = 12.0, dt = 1e-3))]
fn gen_dataset(path: &str, n_samples: usize, seed: u64, resolution: usize, horizon: f64, dt: f64) -> PyResult<f64> {
    let cfg = DatasetConfig {
        n_samples,
        seed,
        resolution,
        horizon,
        dt,
        ..DatasetConfig::default()
    };
    let c = core_gen_dataset(&cfg).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let check = core_verify_dataset(&c).map_err(|e| PyValueError::new_err(e.to_string()))?;
    c.save(path).map_err(container_err)?;
    Ok(check.max_residual)
}

/// Largest consistency residual of the ψ rows in a dataset file.
#[pyfunction]
fn verify_dataset(path: &str) -> PyResult<f64> {
    let c = TensorContainer::load(path).map_err(container_err)?;
    Ok(core_verify_dataset(&c).map_err(|e| PyValueError::new_err(e.to_string()))?.max_residual)
}

/// One forward pass of the operator stored at `weights_path`.
#[pyfunction]
fn fno_forward(weights_path: &str, d_values: Vec<f64>) -> PyResult<Vec<f64>> {
    let w = OperatorWeights::load(weights_path).map_err(|e| run_err(e.into()))?;
    w.forward(&d_values).map_err(|e| run_err(e.into()))
}

/// Closed-loop run of a config file. Returns `gamma_ratio`, `m_fit`,
/// `c_fit`, `t` and `gamma`.
#[pyfunction]
#[pyo3(signature = (config_path, method = None, eps = None))]
fn simulate<'py>(py: Python<'py>, config_path: &str, method: Option<&str>, eps: Option<f64>) -> PyResult<Bound<'py, PyDict>> {
    let cfg = Config::load(config_path).map_err(|e| run_err(e.into()))?;
    let scenario = Scenario::from_config(&cfg).map_err(run_err)?;
    let method = method.map(parse_method).transpose()?.unwrap_or(cfg.horizon.method);
    let w = match (method, &cfg.horizon.weights_path) {
        (HorizonMethod::Fno, Some(p)) => Some(OperatorWeights::load(p).map_err(|e| run_err(e.into()))?),
        _ => None,
    };
    let req = HorizonRequest {
        method,
        h: cfg.horizon.h,
        t_end: cfg.sim.t_end,
        window_h: cfg.horizon.window_h,
        window_scheme: cfg.horizon.window_scheme,
        weights: w.as_ref(),
    };
    let out = py
        .detach(|| scenario.run(&req, eps.unwrap_or(cfg.horizon.eps)))
        .map_err(run_err)?;
    let d = PyDict::new(py);
    d.set_item("gamma_ratio", out.gamma_ratio)?;
    d.set_item("m_fit", out.fit.as_ref().map(|f| f.m_fit).ok())?;
    d.set_item("c_fit", out.fit.as_ref().map(|f| f.c_fit).ok())?;
    d.set_item("t", out.trace.times())?;
    d.set_item("gamma", out.trace.gamma())?;
    d.set_item("noncausal_lookups", out.trace.noncausal_lookups)?;
    Ok(d)
}

/// Text margin report for a config file.
#[pyfunction]
fn margins(config_path: &str) -> PyResult<String> {
    let cfg = Config::load(config_path).map_err(|e| run_err(e.into()))?;
    let s = Scenario::from_config(&cfg).map_err(run_err)?;
    let report = if s.d2 == DelayParams::constant(0.0) {
        s.report1
    } else {
        s.report1.combine(&s.report2)
    };
    let (q, r) = cfg.margins.weights(s.spec.n()).map_err(|e| run_err(e.into()))?;
    let m = compute_margins(&s.spec, &report, &q, &r).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(m.to_text())
}

#[pymodule]
fn hpl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(delay_value, m)?)?;
    m.add_function(wrap_pyfunction!(check_assumptions, m)?)?;
    m.add_function(wrap_pyfunction!(horizon, m)?)?;
    m.add_function(wrap_pyfunction!(read_container, m)?)?;
    m.add_function(wrap_pyfunction!(write_container, m)?)?;
    m.add_function(wrap_pyfunction!(gen_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(verify_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(fno_forward, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(margins, m)?)?;
    Ok(())
}
