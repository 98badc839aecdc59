//! Python bindings.
use std::collections::BTreeMap;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

use kernelcost::ir::{parse_kernel_with, KernelIR};
use kernelcost::model::{self, read_measurements, write_measurements, ModelWeights};
use kernelcost::pipeline::{evaluate_records, fit_records};
use kernelcost::props::{extract_properties_with, DEFAULT_CAP};
use kernelcost::sim::{run_campaign, SimDevice, R9_FURY_WEIGHTS};
use kernelcost::suite::{Role, Suite, DEFAULT_PROFILE};
use kernelcost::{Binding, GroupConfig};

create_exception!(
    kernelcost,
    KernelCostError,
    PyException,
    "Error raised by kernelcost, prefixed with its code."
);

fn err(e: kernelcost::Error) -> PyErr {
    let msg = e.to_string();
    if msg.starts_with("E_") {
        KernelCostError::new_err(msg)
    } else {
        KernelCostError::new_err(format!("{}: {msg}", e.code()))
    }
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_u64(), n.as_i64()) {
            (Some(u), _) => u.into_pyobject(py)?.into_any(),
            (_, Some(i)) => i.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn binding(b: Option<BTreeMap<String, i64>>) -> Option<Binding> {
    b.map(|m| m.into_iter().collect())
}

fn group(g: Option<&str>) -> PyResult<Option<GroupConfig>> {
    g.map(str::parse).transpose().map_err(err)
}

fn suite(dir: Option<&str>) -> PyResult<Suite> {
    match dir {
        Some(d) => Suite::from_dir(d.as_ref()).map_err(err),
        None => Suite::from_env().map_err(err),
    }
}

/// A parsed, validated kernel.
#[pyclass(frozen, module = "kernelcost")]
struct Kernel {
    ir: KernelIR,
}

#[pymethods]
impl Kernel {
    /// Parses kernel source; `group` (`"256"` or `"16x16"`) sets the group-size constants.
    #[new]
    #[pyo3(signature = (source, group = None))]
    fn new(source: &str, group: Option<&str>) -> PyResult<Self> {
        let overrides = self::group(group)?
            .map(|g| g.overrides())
            .unwrap_or_default();
        Ok(Kernel {
            ir: parse_kernel_with(source, &overrides).map_err(err)?,
        })
    }

    /// A kernel of the bundled suite, or of the directory in `KERNELCOST_SUITE_DIR`.
    #[staticmethod]
    #[pyo3(signature = (id, group = None))]
    fn from_suite(id: &str, group: Option<&str>) -> PyResult<Self> {
        let s = suite(None)?;
        let g = match self::group(group)? {
            Some(g) => g,
            None => s.groups_for(id, DEFAULT_PROFILE).map_err(err)?[0],
        };
        Ok(Kernel {
            ir: s.instantiate(id, g).map_err(err)?,
        })
    }

    #[getter]
    fn name(&self) -> &str {
        &self.ir.name
    }

    #[getter]
    fn params(&self) -> Vec<String> {
        self.ir.param_names().map(str::to_string).collect()
    }

    /// Property report: integer counts with a binding, expression strings without.
    #[pyo3(signature = (binding = None, cap = DEFAULT_CAP))]
    fn count<'py>(
        &self,
        py: Python<'py>,
        binding: Option<BTreeMap<String, i64>>,
        cap: u64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let b = self::binding(binding);
        let pv = extract_properties_with(&self.ir, b.as_ref(), cap).map_err(err)?;
        to_py(py, &pv.to_report())
    }

    fn __repr__(&self) -> String {
        format!("Kernel({:?})", self.ir.name)
    }
}

/// Per-property weights of one device.
#[pyclass(frozen, module = "kernelcost")]
struct Weights {
    inner: ModelWeights,
}

#[pymethods]
impl Weights {
    /// The AMD R9 Fury weights.
    #[staticmethod]
    fn r9_fury() -> PyResult<Self> {
        Ok(Weights {
            inner: ModelWeights::from_pairs("R9Fury", R9_FURY_WEIGHTS).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| err(e.into()))?;
        Ok(Weights {
            inner: ModelWeights::from_json(&v).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| err(e.into()))?;
        Self::from_json(&text)
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.inner.to_json()).expect("weights serialize")
    }

    #[getter]
    fn device(&self) -> &str {
        &self.inner.device
    }

    fn get(&self, key: &str) -> Option<f64> {
        self.inner.get(key)
    }

    /// Predicted seconds and the nonzero per-property contributions.
    #[pyo3(signature = (kernel, binding, cap = DEFAULT_CAP))]
    fn predict(
        &self,
        kernel: &Kernel,
        binding: BTreeMap<String, i64>,
        cap: u64,
    ) -> PyResult<(f64, Vec<(String, f64)>)> {
        let b: Binding = binding.into_iter().collect();
        let pv = extract_properties_with(&kernel.ir, Some(&b), cap).map_err(err)?;
        let p = model::predict(&self.inner, &pv).map_err(err)?;
        Ok((p.seconds, p.breakdown))
    }

    fn __repr__(&self) -> String {
        format!("Weights(device={:?})", self.inner.device)
    }
}

/// Simulated measurement CSV for a suite role on a device profile. `sigma` and
/// `seed` override the device file's values.
#[pyfunction]
#[pyo3(signature = (role = "measurement", profile = DEFAULT_PROFILE, sigma = None, seed = None, device = None))]
fn simulate(
    role: &str,
    profile: &str,
    sigma: Option<f64>,
    seed: Option<u64>,
    device: Option<&str>,
) -> PyResult<String> {
    let role = match role {
        "measurement" => Role::Measurement,
        "test" => Role::Test,
        other => {
            return Err(KernelCostError::new_err(format!(
                "E_FORMAT: unknown role `{other}`"
            )))
        }
    };
    let mut dev = match device {
        Some(p) => SimDevice::load(p.as_ref()).map_err(err)?,
        None => SimDevice::r9_fury(),
    };
    dev.sigma = sigma.unwrap_or(dev.sigma);
    dev.seed = seed.unwrap_or(dev.seed);
    if !(dev.sigma >= 0.0 && dev.sigma.is_finite()) {
        return Err(KernelCostError::new_err(format!(
            "E_FORMAT: sigma must be finite and >= 0, got {}",
            dev.sigma
        )));
    }
    let s = suite(None)?;
    let cases = s.cases(role, profile).map_err(err)?;
    let (records, errors) = run_campaign(&dev, &s, &cases, |_, _| {});
    if let Some(e) = errors.into_iter().next() {
        return Err(err(e.error));
    }
    let mut buf = Vec::new();
    write_measurements(&mut buf, &records).map_err(err)?;
    Ok(String::from_utf8(buf).expect("csv is utf-8"))
}

/// Fits weights to measurement CSV text; raw-run files are reduced first.
#[pyfunction]
#[pyo3(signature = (csv, device = "device", kernels = None, cap = DEFAULT_CAP))]
fn fit(csv: &str, device: &str, kernels: Option<&str>, cap: u64) -> PyResult<Weights> {
    let s = suite(kernels)?;
    let records = read_measurements(csv.as_bytes()).map_err(err)?;
    let (inner, _, _) = fit_records(&s, &records, device, cap).map_err(err)?;
    Ok(Weights { inner })
}

/// Per-kernel and cross-kernel geometric-mean relative errors.
#[pyfunction]
#[pyo3(signature = (weights, csv, kernels = None, cap = DEFAULT_CAP))]
fn evaluate<'py>(
    py: Python<'py>,
    weights: &Weights,
    csv: &str,
    kernels: Option<&str>,
    cap: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let s = suite(kernels)?;
    let records = read_measurements(csv.as_bytes()).map_err(err)?;
    let report = evaluate_records(&s, &weights.inner, &records, cap).map_err(err)?;
    to_py(py, &report.to_json())
}

#[pyfunction]
fn geometric_mean_error(pairs: Vec<(f64, f64)>) -> PyResult<f64> {
    model::geometric_mean_error(&pairs).map_err(err)
}

/// Ids of the suite kernels, optionally of one role.
#[pyfunction]
#[pyo3(signature = (role = None))]
fn suite_kernels(role: Option<&str>) -> PyResult<Vec<String>> {
    let s = suite(None)?;
    Ok(s.kernels()
        .iter()
        .filter(|k| match role {
            Some("measurement") => k.role == Role::Measurement,
            Some("test") => k.role == Role::Test,
            _ => true,
        })
        .map(|k| k.id.clone())
        .collect())
}

#[pymodule]
#[pyo3(name = "kernelcost")]
fn kernelcost_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("KernelCostError", m.py().get_type::<KernelCostError>())?;
    m.add("SCHEMA_VERSION", kernelcost::props::SCHEMA_VERSION)?;
    m.add_class::<Kernel>()?;
    m.add_class::<Weights>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(geometric_mean_error, m)?)?;
    m.add_function(wrap_pyfunction!(suite_kernels, m)?)?;
    Ok(())
}
