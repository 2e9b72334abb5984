//! Python bindings: configuration, whole runs, step-wise simulation and the
//! closed-form models underneath.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyFloat, PyInt, PyString};

use swaves_core::engine::{SimOptions, Simulation as CoreSimulation, World};
use swaves_core::forecast;
use swaves_core::output::{per_user_csv, summarize, summary_json};
use swaves_core::queueing::{self, LinkLoad};
use swaves_core::radio;
use swaves_core::{ConfigError, LifecycleState, RunConfig, RunMetrics, SimError, Strategy};

fn config_err(e: ConfigError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn sim_err(e: SimError) -> PyErr {
    match e {
        SimError::Config(c) => config_err(c),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn parse_strategy(s: &str) -> PyResult<Strategy> {
    s.parse().map_err(PyValueError::new_err)
}

fn parse_state(s: &str) -> PyResult<LifecycleState> {
    LifecycleState::ALL
        .into_iter()
        .find(|st| st.as_str().eq_ignore_ascii_case(s))
        .ok_or_else(|| PyValueError::new_err(format!("unknown lifecycle state `{s}`")))
}

/// TOML literal for a Python scalar; integers become floats where the key holds a float.
fn toml_literal(value: &Bound<'_, PyAny>, current: Option<&str>) -> PyResult<String> {
    if value.is_instance_of::<PyBool>() {
        return Ok(value.extract::<bool>()?.to_string());
    }
    if value.is_instance_of::<PyInt>() {
        let i: i64 = value.extract()?;
        let is_float = current.is_some_and(|c| c.contains(['.', 'e', 'E']) || c == "inf" || c == "nan");
        return Ok(if is_float { format!("{i}.0") } else { i.to_string() });
    }
    if value.is_instance_of::<PyFloat>() {
        return Ok(format!("{:?}", value.extract::<f64>()?));
    }
    if value.is_instance_of::<PyString>() {
        return Ok(format!("{:?}", value.extract::<String>()?));
    }
    Err(PyValueError::new_err("config values must be bool, int, float or str"))
}

/// Run configuration. Every key is addressed by its dotted name, e.g. `vnf.d_max_ms`.
#[pyclass(module = "swaves", skip_from_py_object)]
#[derive(Clone)]
struct Config {
    inner: RunConfig,
}

#[pymethods]
impl Config {
    #[new]
    #[pyo3(signature = (**overrides))]
    fn new(overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut cfg = Self {
            inner: RunConfig::default(),
        };
        if let Some(o) = overrides {
            for (k, v) in o.iter() {
                // Keyword names cannot contain dots; `vnf__d_max_ms` stands for `vnf.d_max_ms`.
                cfg.set(&k.extract::<String>()?.replacen("__", ".", 1), &v)?;
            }
        }
        Ok(cfg)
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        RunConfig::from_toml_str(text).map(|inner| Self { inner }).map_err(config_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        RunConfig::load(&path).map(|inner| Self { inner }).map_err(config_err)
    }

    /// Effective configuration as flat `section.key = value` lines.
    fn to_toml(&self) -> String {
        self.inner.to_flat_toml()
    }

    fn keys(&self) -> Vec<String> {
        self.entries().into_iter().map(|(k, _)| k).collect()
    }

    /// The value of a dotted key as its TOML literal.
    fn get(&self, key: &str) -> PyResult<String> {
        self.entries()
            .into_iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v)
            .ok_or_else(|| PyValueError::new_err(format!("unknown key `{key}`")))
    }

    /// Sets one dotted key; the result is validated before it is kept.
    fn set(&mut self, key: &str, value: &Bound<'_, PyAny>) -> PyResult<()> {
        let entries = self.entries();
        let current = entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let literal = toml_literal(value, current)?;
        let mut text: String = entries
            .iter()
            .filter(|(k, _)| k != key)
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        text.push_str(&format!("{key} = {literal}\n"));
        self.inner = RunConfig::from_toml_str(&text).map_err(config_err)?;
        Ok(())
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(config_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(strategy={}, n_bs={}, n_users={}, duration_s={}, d_max_ms={})",
            self.inner.placement.strategy,
            self.inner.topology.n_bs,
            self.inner.sim.n_users,
            self.inner.sim.duration_s,
            self.inner.vnf.d_max_ms
        )
    }
}

impl Config {
    fn entries(&self) -> Vec<(String, String)> {
        self.inner
            .to_flat_toml()
            .lines()
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    fn resolved(&self, seed: Option<u64>, strategy: Option<&str>) -> PyResult<(RunConfig, u64)> {
        let mut cfg = self.inner.clone();
        if let Some(s) = strategy {
            cfg.placement.strategy = parse_strategy(s)?;
        }
        let seed = seed.unwrap_or(cfg.sim.seed);
        cfg.sim.seed = seed;
        Ok((cfg, seed))
    }
}

/// Outcome of a finished run.
#[pyclass(module = "swaves", frozen)]
struct RunResult {
    metrics: RunMetrics,
}

#[pymethods]
impl RunResult {
    #[getter]
    fn strategy(&self) -> &'static str {
        self.metrics.strategy.as_str()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.metrics.seed
    }

    #[getter]
    fn mean_ratio(&self) -> f64 {
        self.metrics.mean_ratio()
    }

    #[getter]
    fn median_ratio(&self) -> f64 {
        summarize(&self.metrics).median_ratio
    }

    #[getter]
    fn total_packets(&self) -> u64 {
        self.metrics.total_packets()
    }

    #[getter]
    fn trace_hash(&self) -> &str {
        &self.metrics.trace_hash
    }

    /// Per-user unsuccessful ratios, indexed by user id.
    fn ratios(&self) -> Vec<f64> {
        self.metrics.ratios()
    }

    /// Per-user counters as dicts.
    fn per_user<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.metrics
            .per_user
            .iter()
            .enumerate()
            .map(|(id, u)| {
                let d = PyDict::new(py);
                d.set_item("user_id", id)?;
                d.set_item("total_packets", u.total_packets)?;
                d.set_item("unsuccessful", u.unsuccessful)?;
                d.set_item("ratio", u.ratio())?;
                d.set_item("cause_not_running", u.cause_not_running)?;
                d.set_item("cause_migrating", u.cause_migrating)?;
                d.set_item("cause_deadline", u.cause_deadline)?;
                Ok(d)
            })
            .collect()
    }

    fn per_user_csv(&self) -> String {
        per_user_csv(&self.metrics)
    }

    fn summary_json(&self) -> String {
        summary_json(&self.metrics)
    }

    fn __repr__(&self) -> String {
        format!(
            "RunResult(strategy={}, seed={}, mean_ratio={:.6}, packets={})",
            self.metrics.strategy,
            self.metrics.seed,
            self.metrics.mean_ratio(),
            self.metrics.total_packets()
        )
    }
}

/// Runs one simulation to the end with the GIL released.
#[pyfunction]
#[pyo3(signature = (config, seed=None, strategy=None))]
fn run(py: Python<'_>, config: &Config, seed: Option<u64>, strategy: Option<&str>) -> PyResult<RunResult> {
    let (cfg, seed) = config.resolved(seed, strategy)?;
    let metrics = py.detach(|| swaves_core::run(&cfg, seed)).map_err(sim_err)?;
    Ok(RunResult { metrics })
}

/// Step-wise simulation, for inspecting placement decisions as they happen.
#[pyclass(module = "swaves", unsendable)]
struct Simulation {
    sim: Option<CoreSimulation>,
}

impl Simulation {
    fn get(&self) -> PyResult<&CoreSimulation> {
        self.sim.as_ref().ok_or_else(|| PyRuntimeError::new_err("simulation already finished"))
    }

    fn get_mut(&mut self) -> PyResult<&mut CoreSimulation> {
        self.sim.as_mut().ok_or_else(|| PyRuntimeError::new_err("simulation already finished"))
    }
}

#[pymethods]
impl Simulation {
    #[new]
    #[pyo3(signature = (config, seed=None, strategy=None, log_events=false))]
    fn new(config: &Config, seed: Option<u64>, strategy: Option<&str>, log_events: bool) -> PyResult<Self> {
        let (cfg, seed) = config.resolved(seed, strategy)?;
        let world = Arc::new(World::build(&cfg, seed).map_err(sim_err)?);
        let opts = SimOptions {
            log_events,
            dump_forecast: false,
        };
        Ok(Self {
            sim: Some(CoreSimulation::new(&cfg, world, cfg.placement.strategy, opts)),
        })
    }

    /// Advances one control step; False once the run is over.
    fn step(&mut self) -> PyResult<bool> {
        Ok(self.get_mut()?.step())
    }

    fn run_to_end(&mut self) -> PyResult<()> {
        self.get_mut()?.run_to_end();
        Ok(())
    }

    #[getter]
    fn now(&self) -> PyResult<f64> {
        Ok(self.get()?.now())
    }

    #[getter]
    fn step_index(&self) -> PyResult<usize> {
        Ok(self.get()?.step_index())
    }

    #[getter]
    fn finished(&self) -> PyResult<bool> {
        Ok(self.get()?.is_finished())
    }

    /// `(ec, vnf, state, target)` for every instance.
    fn instances(&self) -> PyResult<Vec<(usize, usize, &'static str, &'static str)>> {
        Ok(self
            .get()?
            .instances()
            .iter()
            .map(|r| (r.ec, r.vnf, r.state.as_str(), r.target.as_str()))
            .collect())
    }

    /// Assigned EC per user; None when unassigned.
    fn assignment(&self) -> PyResult<Vec<Option<usize>>> {
        Ok(self.get()?.assignment().to_vec())
    }

    /// Serving BS per user.
    fn serving_bs(&self) -> PyResult<Vec<usize>> {
        Ok(self.get()?.users().iter().map(|u| u.serving_bs).collect())
    }

    /// Ends the run and returns its metrics; the simulation cannot be stepped afterwards.
    fn finish(&mut self) -> PyResult<RunResult> {
        let sim = self.sim.take().ok_or_else(|| PyRuntimeError::new_err("simulation already finished"))?;
        Ok(RunResult { metrics: sim.finish() })
    }
}

fn link_loads(links: Vec<(f64, f64, f64)>) -> Vec<LinkLoad> {
    links
        .into_iter()
        .map(|(a, s, bps)| LinkLoad {
            arrival_rate_pps: a,
            service_rate_pps: s,
            service_rate_bps: bps,
        })
        .collect()
}

/// End-to-end delay in seconds; `links` holds `(arrival_pps, service_pps, service_bps)`.
#[pyfunction]
fn e2e_delay(mu_u_pps: f64, lambda_u_pps: f64, links: Vec<(f64, f64, f64)>, t_p_s: f64) -> f64 {
    queueing::e2e_delay(mu_u_pps, lambda_u_pps, &link_loads(links), t_p_s).total_s
}

/// Context migration time in seconds over `links`.
#[pyfunction]
fn migration_time(v_mem_bits: f64, links: Vec<(f64, f64, f64)>, t_p_s: f64) -> f64 {
    queueing::migration_time(v_mem_bits, &link_loads(links), t_p_s)
}

#[pyfunction]
fn path_loss_db(config: &Config, distance_m: f64) -> f64 {
    radio::path_loss_db(&config.inner.radio_config(), distance_m)
}

/// Wireless service rate in packets per second at `distance_m` from a BS.
#[pyfunction]
#[pyo3(signature = (config, distance_m, fading_power=1.0))]
fn service_rate_pps(config: &Config, distance_m: f64, fading_power: f64) -> f64 {
    let rc = config.inner.radio_config();
    radio::shannon_rate(&rc, radio::received_power(&rc, distance_m, fading_power)) / config.inner.topology.packet_size_bits
}

/// Fastest legal chain of lifecycle states from `src` to `dst`.
#[pyfunction]
fn lifecycle_path(config: &Config, src: &str, dst: &str) -> PyResult<Vec<&'static str>> {
    let (a, b) = (parse_state(src)?, parse_state(dst)?);
    let path = config
        .inner
        .transition_table()
        .path(a, b)
        .ok_or_else(|| PyValueError::new_err(format!("no legal path {a} -> {b}")))?;
    Ok(path.into_iter().map(LifecycleState::as_str).collect())
}

#[pyfunction]
fn transition_time(config: &Config, src: &str, dst: &str) -> PyResult<f64> {
    let (a, b) = (parse_state(src)?, parse_state(dst)?);
    config
        .inner
        .transition_table()
        .path_time(a, b)
        .ok_or_else(|| PyValueError::new_err(format!("no legal path {a} -> {b}")))
}

/// Probability that some user needs the service, from each user's probability of not connecting.
#[pyfunction]
fn demand_probability(not_connecting: Vec<f64>) -> f64 {
    forecast::demand_probability(&not_connecting)
}

#[pymodule]
fn swaves(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Config>()?;
    m.add_class::<RunResult>()?;
    m.add_class::<Simulation>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(e2e_delay, m)?)?;
    m.add_function(wrap_pyfunction!(migration_time, m)?)?;
    m.add_function(wrap_pyfunction!(path_loss_db, m)?)?;
    m.add_function(wrap_pyfunction!(service_rate_pps, m)?)?;
    m.add_function(wrap_pyfunction!(lifecycle_path, m)?)?;
    m.add_function(wrap_pyfunction!(transition_time, m)?)?;
    m.add_function(wrap_pyfunction!(demand_probability, m)?)?;
    m.add("STRATEGIES", Strategy::ALL.map(Strategy::as_str).to_vec())?;
    Ok(())
}
