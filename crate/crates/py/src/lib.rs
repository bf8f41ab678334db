//! Python bindings: scenario configs, the step-wise simulator, episode
//! runs with any policy, training and the PPO math helpers.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ocs_core::domain::{Hyperparams, ScenarioConfig};
use ocs_core::encoder::Observation;
use ocs_core::ppo::{self, Agent};
use ocs_core::simulator::ClusterState;
use ocs_core::toolkit::{generate_scenario, run_episode, Policy, PolicyKind};

fn py_err(e: ocs_core::Error) -> PyErr {
    PyValueError::new_err(format!("{}: {e}", e.kind()))
}

#[pyclass(name = "ScenarioConfig", from_py_object)]
#[derive(Clone)]
struct PyScenarioConfig {
    inner: ScenarioConfig,
}

#[pymethods]
impl PyScenarioConfig {
    #[new]
    #[pyo3(signature = (nodes = 15, tasks = 200))]
    fn new(nodes: usize, tasks: usize) -> PyResult<Self> {
        let mut inner = ScenarioConfig::with_nodes(nodes);
        inner.task_count = tasks;
        inner.ensure_valid().map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        let inner = ScenarioConfig::from_text(text).map_err(py_err)?;
        inner.ensure_valid().map_err(py_err)?;
        Ok(Self { inner })
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count
    }

    #[getter]
    fn task_count(&self) -> usize {
        self.inner.task_count
    }

    #[getter]
    fn area_side_m(&self) -> f64 {
        self.inner.area_side_m
    }
}

/// Step-wise simulator: one upgrade round with decisions driven from Python.
#[pyclass(name = "Env")]
struct PyEnv {
    cfg: ScenarioConfig,
    state: ClusterState,
    obs: Option<Observation>,
}

#[pymethods]
impl PyEnv {
    #[new]
    fn new(cfg: &PyScenarioConfig, seed: u64) -> PyResult<Self> {
        let (state, obs) = ClusterState::reset(&cfg.inner, seed).map_err(py_err)?;
        Ok(Self {
            cfg: cfg.inner.clone(),
            state,
            obs,
        })
    }

    #[getter]
    fn clock(&self) -> f64 {
        self.state.clock
    }

    #[getter]
    fn done(&self) -> bool {
        self.state.is_done()
    }

    /// Raw state vector of the pending decision, or `None` when done.
    fn state_vector(&self) -> Option<Vec<f64>> {
        self.obs.as_ref().map(|o| o.state.0.clone())
    }

    fn mask(&self) -> Option<Vec<bool>> {
        self.obs.as_ref().map(|o| o.mask.clone())
    }

    fn task_id(&self) -> Option<usize> {
        self.obs.as_ref().map(|o| o.task.id)
    }

    /// Places the pending task on `node`; returns `(reward, done)`.
    fn step(&mut self, node: usize) -> PyResult<(f64, bool)> {
        let out = self.state.step(node).map_err(py_err)?;
        self.obs = out.observation;
        Ok((out.reward, out.done))
    }

    fn check_invariants(&self) -> PyResult<()> {
        self.state.check_invariants().map_err(py_err)
    }

    /// Mean latency components of the finished episode.
    fn mean_latencies<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let m = self.state.episode_metrics().map_err(py_err)?.means;
        means_dict(py, m.comm, m.download, m.compute, m.total)
    }

    fn event_log_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.state.write_event_log(&mut buf).map_err(py_err)?;
        Ok(String::from_utf8(buf).expect("csv is utf-8"))
    }

    fn node_count(&self) -> usize {
        self.cfg.node_count
    }
}

fn means_dict(py: Python<'_>, comm: f64, download: f64, compute: f64, total: f64) -> PyResult<Bound<'_, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("comm", comm)?;
    d.set_item("download", download)?;
    d.set_item("compute", compute)?;
    d.set_item("total", total)?;
    Ok(d)
}

/// Scenario for `(cfg, seed)` as JSON.
#[pyfunction]
fn scenario_json(cfg: &PyScenarioConfig, seed: u64) -> PyResult<String> {
    let s = generate_scenario(&cfg.inner, seed).map_err(py_err)?;
    Ok(String::from_utf8(s.to_bytes()).expect("json is utf-8"))
}

/// Runs one episode and returns its mean latency components. `policy` is
/// one of eq, rb, la, il, ocs; ocs needs a checkpoint path.
#[pyfunction]
#[pyo3(signature = (cfg, seed, policy, checkpoint = None))]
fn run<'py>(
    py: Python<'py>,
    cfg: &PyScenarioConfig,
    seed: u64,
    policy: &str,
    checkpoint: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let kind: PolicyKind = policy.parse().map_err(py_err)?;
    let policy = match (kind, checkpoint) {
        (PolicyKind::Ocs, Some(path)) => {
            Policy::Ocs(Box::new(Agent::load(&path, Hyperparams::default()).map_err(py_err)?))
        }
        (k, _) => Policy::baseline(k).map_err(py_err)?,
    };
    let m = run_episode(&cfg.inner, seed, &policy).map_err(py_err)?.metrics.means;
    means_dict(py, m.comm, m.download, m.compute, m.total)
}

/// Trains the learned scheduler, saves it to `checkpoint`, and returns the
/// per-update mean rewards.
#[pyfunction]
fn train(cfg: &PyScenarioConfig, episodes: usize, seed: u64, checkpoint: PathBuf) -> PyResult<Vec<f64>> {
    let hp = Hyperparams {
        episodes,
        ..Default::default()
    };
    let (agent, report) = ppo::train(&cfg.inner, &hp, seed).map_err(py_err)?;
    agent.save(&checkpoint).map_err(py_err)?;
    Ok(report.rows.iter().map(|r| r.mean_reward).collect())
}

/// Generalized advantage estimates and return targets.
#[pyfunction]
fn gae(rewards: Vec<f64>, values: Vec<f64>, dones: Vec<bool>, gamma: f64, lam: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    ppo::gae(&rewards, &values, &dones, gamma, lam).map_err(py_err)
}

#[pyfunction]
fn clipped_objective(log_prob_new: f64, log_prob_old: f64, advantage: f64, epsilon: f64) -> f64 {
    ppo::clipped_objective(log_prob_new, log_prob_old, advantage, epsilon)
}

#[pymodule]
fn ocs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenarioConfig>()?;
    m.add_class::<PyEnv>()?;
    m.add_function(wrap_pyfunction!(scenario_json, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(gae, m)?)?;
    m.add_function(wrap_pyfunction!(clipped_objective, m)?)?;
    Ok(())
}
