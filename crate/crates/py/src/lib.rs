// SPDX-License-Identifier: Apache-2.0

//! Python bindings: `offload_sim.Simulator`, `OffloadReport` and the
//! multicast and analytic helpers.

use std::collections::BTreeSet;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use offload_core::analytic;
use offload_core::config::SystemConfig;
use offload_core::experiment::{self, ExperimentPlan, Setup, POWERS_OF_TWO};
use offload_core::kernels::ProblemSize;
use offload_core::mcast::{self, MulticastAddress};
use offload_core::offload::{Mode, Phase};
use offload_core::Error;

create_exception!(offload_sim, OffloadError, PyException);
create_exception!(offload_sim, ConfigError, OffloadError);
create_exception!(offload_sim, SimulationError, OffloadError);

fn err(e: Error) -> PyErr {
    if e.is_config() {
        ConfigError::new_err(e.to_string())
    } else {
        SimulationError::new_err(e.to_string())
    }
}

fn to_py<T: serde::Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (s,))?.unbind())
}

fn size_arg(v: &Bound<'_, PyAny>) -> PyResult<ProblemSize> {
    let s = match v.extract::<u64>() {
        Ok(n) => n.to_string(),
        Err(_) => v.extract::<String>()?,
    };
    s.parse().map_err(err)
}

fn mode_arg(s: &str) -> PyResult<Mode> {
    s.parse().map_err(err)
}

fn phase_arg(s: &str) -> PyResult<Phase> {
    Phase::ALL
        .into_iter()
        .find(|p| p.label().eq_ignore_ascii_case(s))
        .ok_or_else(|| PyValueError::new_err(format!("unknown phase `{s}`")))
}

fn overrides(cfg: &mut SystemConfig, table: &Bound<'_, PyDict>) -> PyResult<()> {
    let mut lines = String::new();
    for (k, v) in table.iter() {
        let key: String = k.extract()?;
        let value = match v.extract::<i64>() {
            Ok(i) => i.to_string(),
            Err(_) => format!("{:?}", v.extract::<f64>()?),
        };
        lines.push_str(&format!("{key} = {value}\n"));
    }
    cfg.apply_calibration_str(&lines).map_err(err)
}

/// Result of one simulated offload.
#[pyclass(frozen, module = "offload_sim")]
struct OffloadReport {
    inner: offload_core::offload::OffloadReport,
}

#[pymethods]
impl OffloadReport {
    #[getter]
    fn total(&self) -> u64 {
        self.inner.total
    }

    #[getter]
    fn mode(&self) -> &'static str {
        self.inner.mode.as_str()
    }

    #[getter]
    fn kernel(&self) -> &str {
        &self.inner.kernel
    }

    #[getter]
    fn n_clusters(&self) -> usize {
        self.inner.n_clusters
    }

    /// `(cluster, phase, start, end)` for every phase that ran.
    #[getter]
    fn intervals(&self) -> Vec<(usize, &'static str, u64, u64)> {
        self.inner
            .intervals
            .iter()
            .map(|i| (i.cluster, i.phase.label(), i.start, i.end))
            .collect()
    }

    fn duration(&self, cluster: usize, phase: &str) -> PyResult<Option<u64>> {
        Ok(self.inner.duration(cluster, phase_arg(phase)?))
    }

    /// `(min, max, mean)` of a phase across clusters.
    fn stats(&self, phase: &str) -> PyResult<Option<(u64, u64, f64)>> {
        Ok(self.inner.stats(phase_arg(phase)?).map(|s| (s.min, s.max, s.mean)))
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.record())
    }

    fn __repr__(&self) -> String {
        format!(
            "OffloadReport({} {} {} n={} total={})",
            self.inner.mode, self.inner.kernel, self.inner.size, self.inner.n_clusters, self.inner.total
        )
    }
}

/// A configured system: topology, calibration and kernel registry.
#[pyclass(frozen, module = "offload_sim")]
struct Simulator {
    config: SystemConfig,
    setup: Setup,
}

#[pymethods]
impl Simulator {
    /// `config` is TOML text of a system file; `calibration` maps flat
    /// calibration or topology keys to numbers.
    #[new]
    #[pyo3(signature = (config=None, calibration=None))]
    fn new(config: Option<&str>, calibration: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut cfg = match config {
            Some(s) => SystemConfig::from_toml_str(s).map_err(err)?,
            None => SystemConfig::default(),
        };
        if let Some(t) = calibration {
            overrides(&mut cfg, t)?;
        }
        let setup = Setup::new(&cfg).map_err(err)?;
        Ok(Self { config: cfg, setup })
    }

    #[getter]
    fn n_clusters(&self) -> usize {
        self.setup.topology.n_clusters()
    }

    #[getter]
    fn topology(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.config.topology)
    }

    #[getter]
    fn calibration(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.config.calibration)
    }

    fn kernels(&self) -> Vec<String> {
        self.setup.kernels.names().map(str::to_string).collect()
    }

    #[pyo3(signature = (kernel, size, n_clusters, mode="extended"))]
    fn run(
        &self,
        py: Python<'_>,
        kernel: &str,
        size: &Bound<'_, PyAny>,
        n_clusters: usize,
        mode: &str,
    ) -> PyResult<OffloadReport> {
        let (size, mode) = (size_arg(size)?, mode_arg(mode)?);
        py.detach(|| self.setup.run(kernel, size, n_clusters, mode))
            .map(|inner| OffloadReport { inner })
            .map_err(err)
    }

    /// Sweep records as dicts, in grid order.
    #[pyo3(signature = (kernels, sizes, clusters=None, modes=None, weak=false))]
    fn sweep(
        &self,
        py: Python<'_>,
        kernels: Vec<String>,
        sizes: Vec<Bound<'_, PyAny>>,
        clusters: Option<Vec<usize>>,
        modes: Option<Vec<String>>,
        weak: bool,
    ) -> PyResult<Py<PyAny>> {
        let plan = self.plan(kernels, sizes, clusters, modes, weak)?;
        let recs = py.detach(|| experiment::sweep(&self.setup, &plan)).map_err(err)?;
        to_py(py, &recs)
    }

    /// Extended-mode simulation against the runtime model.
    #[pyo3(signature = (kernel, sizes=None, clusters=None))]
    fn validate(
        &self,
        py: Python<'_>,
        kernel: &str,
        sizes: Option<Vec<Bound<'_, PyAny>>>,
        clusters: Option<Vec<usize>>,
    ) -> PyResult<Py<PyAny>> {
        let mut plan = match sizes {
            Some(s) => self.plan(vec![kernel.into()], s, None, Some(vec!["extended".into()]), false)?,
            None => match kernel.to_ascii_lowercase().as_str() {
                "axpy" => experiment::axpy_validation_plan(),
                "atax" => experiment::atax_validation_plan(),
                other => return Err(err(Error::ModelUnavailable(other.into()))),
            },
        };
        if let Some(c) = clusters {
            plan.clusters = c;
        }
        let table = py.detach(|| experiment::validate(&self.setup, &plan)).map_err(err)?;
        to_py(py, &table)
    }

    /// Master ports a request reaches; `mask` bits are don't-cares.
    #[pyo3(signature = (addr, mask=0))]
    fn route(&self, addr: u64, mask: u64) -> PyResult<Vec<usize>> {
        let ports = mcast::route(MulticastAddress::new(addr, mask), &self.setup.topology.address_map()).map_err(err)?;
        Ok(ports.into_iter().collect())
    }

    fn cluster_base(&self, cluster: usize) -> PyResult<u64> {
        let t = &self.setup.topology;
        if cluster >= t.n_clusters() {
            return Err(err(Error::Index { what: "cluster", index: cluster, limit: t.n_clusters() }));
        }
        Ok(t.cluster_base_flat(cluster))
    }
}

impl Simulator {
    fn plan(
        &self,
        kernels: Vec<String>,
        sizes: Vec<Bound<'_, PyAny>>,
        clusters: Option<Vec<usize>>,
        modes: Option<Vec<String>>,
        weak: bool,
    ) -> PyResult<ExperimentPlan> {
        let sizes = sizes.iter().map(size_arg).collect::<PyResult<Vec<_>>>()?;
        let modes = match modes {
            Some(m) => m.iter().map(|s| mode_arg(s)).collect::<PyResult<Vec<_>>>()?,
            None => Mode::ALL.to_vec(),
        };
        let names: Vec<&str> = kernels.iter().map(String::as_str).collect();
        let plan = ExperimentPlan::new(&names, &sizes, &clusters.unwrap_or_else(|| POWERS_OF_TWO.to_vec()), &modes);
        Ok(if weak { plan.weak() } else { plan })
    }
}

/// All addresses matched by `(addr, mask)`.
#[pyfunction]
#[pyo3(signature = (addr, mask, limit=1 << 16))]
fn expand(addr: u64, mask: u64, limit: usize) -> PyResult<Vec<u64>> {
    Ok(mcast::expand(MulticastAddress::new(addr, mask), limit).map_err(err)?.into_iter().collect())
}

/// `(addr, mask)` of an address set that forms a cube.
#[pyfunction]
fn encode(addresses: Vec<u64>) -> PyResult<(u64, u64)> {
    let m = mcast::encode(&addresses.into_iter().collect::<BTreeSet<_>>()).map_err(err)?;
    Ok((m.addr, m.mask))
}

#[pyfunction]
fn axpy_total(n_clusters: f64, n: f64) -> f64 {
    analytic::axpy_total(n_clusters, n)
}

#[pyfunction]
fn atax_total(n_clusters: f64, n: f64, m: f64) -> f64 {
    analytic::atax_total(n_clusters, n, m)
}

/// Per-phase model prediction as a dict.
#[pyfunction]
fn estimate(py: Python<'_>, kernel: &str, n_clusters: usize, size: &Bound<'_, PyAny>) -> PyResult<Py<PyAny>> {
    let e = analytic::estimate(kernel, n_clusters, &size_arg(size)?).map_err(err)?;
    to_py(py, &e)
}

#[pyfunction]
fn speedup_metrics(py: Python<'_>, base: f64, ideal: f64, extended: f64) -> PyResult<Py<PyAny>> {
    to_py(py, &analytic::speedup_metrics(base, ideal, extended).map_err(err)?)
}

#[pymodule]
fn offload_sim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("OffloadError", py.get_type::<OffloadError>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("SimulationError", py.get_type::<SimulationError>())?;
    m.add_class::<Simulator>()?;
    m.add_class::<OffloadReport>()?;
    m.add_function(wrap_pyfunction!(expand, m)?)?;
    m.add_function(wrap_pyfunction!(encode, m)?)?;
    m.add_function(wrap_pyfunction!(axpy_total, m)?)?;
    m.add_function(wrap_pyfunction!(atax_total, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(speedup_metrics, m)?)?;
    Ok(())
}
