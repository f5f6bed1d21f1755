use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict};

use ridematch_core::audit::audit;
use ridematch_core::config::{load_config, scenario_from_map, scenario_to_text};
use ridematch_core::fleet::VehicleSummary;
use ridematch_core::matching::{self, CostMatrix};
use ridematch_core::metrics;
use ridematch_core::network::{GridSpec, RoadNetwork};
use ridematch_core::simcore::{self, SimOutput};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Shared road network with free-flow shortest paths.
#[pyclass(name = "RoadNetwork", frozen)]
struct PyRoadNetwork {
    inner: RoadNetwork,
}

#[pymethods]
impl PyRoadNetwork {
    #[staticmethod]
    #[pyo3(signature = (rows, cols, block_m = 200.0, speed_mps = 10.0))]
    fn grid(rows: usize, cols: usize, block_m: f64, speed_mps: f64) -> PyResult<Self> {
        let inner = RoadNetwork::grid(GridSpec {
            rows,
            cols,
            block_m,
            speed_mps,
        })
        .map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: RoadNetwork::from_file(&path).map_err(err)?,
        })
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn link_count(&self) -> usize {
        self.inner.link_count()
    }

    fn travel_time(&self, from: u32, to: u32) -> PyResult<f64> {
        Ok(self.inner.shortest_path(from, to).map_err(err)?.travel_time)
    }

    /// (link ids, travel time s, distance m)
    fn shortest_path(&self, from: u32, to: u32) -> PyResult<(Vec<u32>, f64, f64)> {
        let p = self.inner.shortest_path(from, to).map_err(err)?;
        Ok((p.links, p.travel_time, p.distance))
    }

    fn k_hop_neighbors(&self, node: u32, k: u32) -> PyResult<Vec<u32>> {
        Ok(self
            .inner
            .k_hop_neighbors(node, k)
            .map_err(err)?
            .into_iter()
            .collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "RoadNetwork(nodes={}, links={})",
            self.inner.node_count(),
            self.inner.link_count()
        )
    }
}

/// A simulation scenario built from the same keys as a config file.
#[pyclass(name = "Scenario", frozen)]
struct PyScenario {
    inner: simcore::Scenario,
}

#[pymethods]
impl PyScenario {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut map = BTreeMap::new();
        if let Some(kw) = kwargs {
            for (k, v) in kw.iter() {
                let key: String = k.extract()?;
                let val = if v.is_instance_of::<PyBool>() {
                    v.extract::<bool>()?.to_string()
                } else {
                    v.str()?.to_string()
                };
                map.insert(key, val);
            }
        }
        let base = std::env::current_dir().map_err(err)?;
        Ok(Self {
            inner: scenario_from_map(&map, &base).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_config(path: PathBuf) -> PyResult<Self> {
        let (map, base) = load_config(&path).map_err(err)?;
        Ok(Self {
            inner: scenario_from_map(&map, &base).map_err(err)?,
        })
    }

    fn to_text(&self) -> String {
        scenario_to_text(&self.inner)
    }

    fn run(&self, py: Python<'_>) -> PyResult<PyRunResult> {
        let sc = self.inner.clone();
        let out = py.detach(|| simcore::run(&sc)).map_err(err)?;
        Ok(PyRunResult { scenario: sc, out })
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(mode={}, search_level={}, fleet_size={}, seed={})",
            self.inner.mode, self.inner.search_level, self.inner.fleet_size, self.inner.seed
        )
    }
}

/// Output of one simulation run.
#[pyclass(name = "RunResult", frozen)]
struct PyRunResult {
    scenario: simcore::Scenario,
    out: SimOutput,
}

#[pymethods]
impl PyRunResult {
    /// Flat metrics report as a dict.
    fn report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        let value = serde_json::to_value(self.out.report).map_err(err)?;
        for (k, v) in value.as_object().into_iter().flatten() {
            match v {
                serde_json::Value::Bool(b) => d.set_item(k, *b)?,
                serde_json::Value::Number(n) if n.is_u64() => d.set_item(k, n.as_u64())?,
                serde_json::Value::Number(n) => d.set_item(k, n.as_f64())?,
                _ => d.set_item(k, py.None())?,
            }
        }
        Ok(d)
    }

    fn report_json(&self) -> String {
        self.out.report.to_json()
    }

    /// (time, request, vehicle) per assignment, in commit order.
    fn assignments(&self) -> Vec<(f64, Option<u32>, Option<u32>)> {
        self.out
            .assignment_log()
            .into_iter()
            .map(|e| (e.time, e.request, e.vehicle))
            .collect()
    }

    #[getter]
    fn event_count(&self) -> usize {
        self.out.events.len()
    }

    #[getter]
    fn message_count(&self) -> usize {
        self.out.messages.len()
    }

    #[getter]
    fn round_count(&self) -> usize {
        self.out.rounds.len()
    }

    /// Replays the logs and returns one string per violated guarantee.
    fn audit(&self) -> Vec<String> {
        let vs: Vec<VehicleSummary> = self.out.vehicles.iter().map(VehicleSummary::from).collect();
        audit(
            &self.out.events,
            &self.out.messages,
            &self.out.initial_requests,
            &vs,
            &self.scenario.constraints(),
            self.out.report.truncated,
        )
        .violations
        .iter()
        .map(ToString::to_string)
        .collect()
    }

    /// Writes the CSV logs and reports into `dir`.
    fn write(&self, dir: PathBuf) -> PyResult<()> {
        ridematch_core::logs::write_outputs(&self.out, &dir).map_err(err)
    }
}

#[pyfunction]
fn amdahl_speedup(beta: f64, k: u32) -> PyResult<f64> {
    metrics::amdahl_speedup(beta, k).map_err(err)
}

/// Min-cost assignment; `None` entries are infeasible. Returns (row -> col, total cost).
#[pyfunction]
fn hungarian(rows: Vec<Vec<Option<f64>>>) -> (Vec<Option<usize>>, f64) {
    let a = matching::hungarian(&CostMatrix::from_rows(rows));
    (a.row_to_col, a.total_cost)
}

/// Max-weight matching on a general graph given as (u, v, weight) edges.
#[pyfunction]
fn max_weight_matching(n: usize, edges: Vec<(usize, usize, f64)>) -> Vec<(usize, usize)> {
    matching::max_weight_matching(n, &edges)
}

#[pymodule]
fn ridematch(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRoadNetwork>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyRunResult>()?;
    m.add_function(wrap_pyfunction!(amdahl_speedup, m)?)?;
    m.add_function(wrap_pyfunction!(hungarian, m)?)?;
    m.add_function(wrap_pyfunction!(max_weight_matching, m)?)?;
    Ok(())
}
