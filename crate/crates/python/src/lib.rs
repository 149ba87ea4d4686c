//! Python bindings. Rational quantities cross the boundary as exact `"p/q"`
//! strings; numeric arguments such as `epsilon` accept anything whose `str()`
//! is an integer, a decimal or a fraction.

use std::path::PathBuf;

use ::anytime_cmdp as core;
use core::approx::{build_approx, make_config, Mode};
use core::augment::build_augmented;
use core::instances::{self, RandomOptions};
use core::learn::{learn_policy, LearnerConfig, ProtocolEnv};
use core::rational::{self, Rational};
use core::solve::backward_induction;
use core::{AugmentedPolicy, BuildLimits, CmdpSpec, Error, ProjectionConfig};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

/// `(h, state, action, cost numerators, cumulative cost numerators)`.
type StepRecord = (usize, usize, usize, Vec<i64>, Vec<i64>);
/// `(episode, return, max prefix cost, violation)`.
type EpisodeRow = (u64, f64, Vec<f64>, bool);
/// `(check, seed, message)`.
type FailureRow = (String, u64, String);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Validation(_) | Error::Parse(_) => PyValueError::new_err(e.to_string()),
        Error::Resource(_) | Error::Protocol(_) => PyRuntimeError::new_err(e.to_string()),
        Error::Io(_) => PyOSError::new_err(e.to_string()),
    }
}

fn number(value: &Bound<'_, PyAny>) -> PyResult<Rational> {
    let text = value.str()?.to_string();
    rational::parse(&text).ok_or_else(|| PyValueError::new_err(format!("cannot read {text:?} as an exact number")))
}

fn strings(values: &[Rational]) -> Vec<String> {
    values.iter().map(|v| v.to_string()).collect()
}

/// A finite-horizon constrained MDP.
#[pyclass(name = "Instance", module = "anytime_cmdp", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyInstance {
    spec: CmdpSpec,
}

#[pymethods]
impl PyInstance {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { spec: instances::from_json(text).map_err(to_py)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { spec: instances::read_instance(&path).map_err(to_py)? })
    }

    /// Seeded instance of the two-state experiment family.
    #[staticmethod]
    #[pyo3(signature = (horizon, budget, seed=0, quantum=instances::DEFAULT_QUANTUM))]
    fn hard_family(horizon: usize, budget: &Bound<'_, PyAny>, seed: u64, quantum: i64) -> PyResult<Self> {
        let spec = instances::gen_hard_family(horizon, &number(budget)?, seed, quantum).map_err(to_py)?;
        Ok(Self { spec })
    }

    #[staticmethod]
    fn knapsack(values: Vec<i64>, weights: Vec<i64>, budget: i64) -> PyResult<Self> {
        Ok(Self { spec: instances::gen_knapsack(&values, &weights, budget).map_err(to_py)? })
    }

    #[staticmethod]
    fn partition(items: Vec<i64>) -> PyResult<Self> {
        Ok(Self { spec: instances::gen_partition(&items).map_err(to_py)? })
    }

    #[staticmethod]
    fn markovian_gap(
        horizon: usize,
        step: usize,
        reward: &Bound<'_, PyAny>,
        budget: &Bound<'_, PyAny>,
    ) -> PyResult<Self> {
        let spec = instances::gen_markovian_gap(horizon, step, &number(reward)?, &number(budget)?).map_err(to_py)?;
        Ok(Self { spec })
    }

    #[staticmethod]
    fn tiny(seed: u64) -> PyResult<Self> {
        Ok(Self { spec: instances::gen_tiny(seed).map_err(to_py)? })
    }

    #[staticmethod]
    #[pyo3(signature = (seed, num_states=2, num_actions=2, horizon=3, dim=1))]
    fn random(seed: u64, num_states: usize, num_actions: usize, horizon: usize, dim: usize) -> PyResult<Self> {
        let opts = RandomOptions { num_states, num_actions, horizon, dim, ..Default::default() };
        Ok(Self { spec: instances::gen_random(&opts, seed).map_err(to_py)? })
    }

    fn to_json(&self) -> PyResult<String> {
        instances::to_json(&self.spec).map_err(to_py)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        instances::write_instance(&self.spec, &path).map_err(to_py)
    }

    /// Violated invariants; empty for a well-formed instance.
    fn validate(&self) -> Vec<String> {
        core::spec::validate_cmdp(&self.spec)
    }

    #[getter]
    fn name(&self) -> Option<String> {
        self.spec.name.clone()
    }

    #[getter]
    fn num_states(&self) -> usize {
        self.spec.num_states()
    }

    #[getter]
    fn num_actions(&self) -> usize {
        self.spec.num_actions()
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.spec.horizon()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    #[getter]
    fn denominator(&self) -> i64 {
        self.spec.denominator()
    }

    #[getter]
    fn budget(&self) -> Vec<String> {
        strings(&self.spec.budget().to_rationals())
    }

    fn __repr__(&self) -> String {
        format!(
            "Instance(name={:?}, S={}, A={}, H={}, d={})",
            self.spec.name.as_deref().unwrap_or(""),
            self.spec.num_states(),
            self.spec.num_actions(),
            self.spec.horizon(),
            self.spec.dim()
        )
    }
}

/// Grid parameters of an approximation mode.
#[pyclass(name = "Projection", module = "anytime_cmdp", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyProjection {
    cfg: ProjectionConfig,
}

#[pymethods]
impl PyProjection {
    #[new]
    fn new(instance: &PyInstance, mode: &str, epsilon: &Bound<'_, PyAny>) -> PyResult<Self> {
        let mode: Mode = mode.parse().map_err(to_py)?;
        if mode == Mode::Exact {
            return Err(PyValueError::new_err("exact mode has no projection"));
        }
        Ok(Self { cfg: make_config(&instance.spec, mode, &number(epsilon)?).map_err(to_py)? })
    }

    #[getter]
    fn mode(&self) -> &'static str {
        self.cfg.mode().as_str()
    }

    #[getter]
    fn epsilon(&self) -> String {
        self.cfg.epsilon().to_string()
    }

    #[getter]
    fn ell(&self) -> Vec<String> {
        strings(self.cfg.ell())
    }

    #[getter]
    fn budget_used(&self) -> Vec<String> {
        strings(self.cfg.budget_used())
    }

    #[getter]
    fn violation_bound(&self) -> Vec<String> {
        strings(&self.cfg.violation_bound())
    }

    #[getter]
    fn grid_count_bound(&self) -> u128 {
        self.cfg.grid_count_bound()
    }
}

/// Deterministic policy over (time, state, cost key).
#[pyclass(name = "Policy", module = "anytime_cmdp", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPolicy {
    policy: AugmentedPolicy,
}

#[pymethods]
impl PyPolicy {
    #[staticmethod]
    fn from_json(text: &str, horizon: usize) -> PyResult<Self> {
        Ok(Self { policy: AugmentedPolicy::from_json(text, horizon).map_err(to_py)? })
    }

    #[staticmethod]
    fn load(path: PathBuf, horizon: usize) -> PyResult<Self> {
        Ok(Self { policy: AugmentedPolicy::read(&path, horizon).map_err(to_py)? })
    }

    fn to_json(&self) -> String {
        self.policy.to_json()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.policy.write(&path).map_err(to_py)
    }

    /// Action at time `h` in `state` with cumulative cost `key`, if covered.
    fn action(&self, h: usize, state: usize, key: Vec<i64>) -> Option<usize> {
        self.policy.get(h, state, &key)
    }

    fn __len__(&self) -> usize {
        self.policy.len()
    }
}

/// Result of an exact or approximate solve.
#[pyclass(name = "Solution", module = "anytime_cmdp", frozen, skip_from_py_object)]
struct PySolution {
    #[pyo3(get)]
    value: Option<String>,
    #[pyo3(get)]
    value_float: Option<f64>,
    #[pyo3(get)]
    diversity: usize,
    #[pyo3(get)]
    layer_sizes: Vec<usize>,
    #[pyo3(get)]
    steps: u64,
    policy: AugmentedPolicy,
}

#[pymethods]
impl PySolution {
    #[getter]
    fn feasible(&self) -> bool {
        self.value.is_some()
    }

    #[getter]
    fn policy(&self) -> PyPolicy {
        PyPolicy { policy: self.policy.clone() }
    }

    fn __repr__(&self) -> String {
        format!("Solution(value={})", self.value.as_deref().unwrap_or("Infeasible"))
    }
}

fn projection_for(spec: &CmdpSpec, mode: &str, epsilon: Option<&Bound<'_, PyAny>>) -> PyResult<Option<ProjectionConfig>> {
    let mode: Mode = mode.parse().map_err(to_py)?;
    if mode == Mode::Exact {
        return Ok(None);
    }
    let eps = epsilon.ok_or_else(|| PyValueError::new_err(format!("epsilon is required for mode {mode}")))?;
    Ok(Some(make_config(spec, mode, &number(eps)?).map_err(to_py)?))
}

/// Solves `instance` by backward induction over exact or projected costs.
#[pyfunction]
#[pyo3(signature = (instance, mode="exact", epsilon=None, max_layer_entries=BuildLimits::default().max_layer_entries))]
fn solve(
    instance: &PyInstance,
    mode: &str,
    epsilon: Option<&Bound<'_, PyAny>>,
    max_layer_entries: usize,
) -> PyResult<PySolution> {
    let cfg = projection_for(&instance.spec, mode, epsilon)?;
    let limits = BuildLimits { max_layer_entries };
    let mdp = match &cfg {
        Some(cfg) => build_approx(&instance.spec, cfg, &limits),
        None => build_augmented(&instance.spec, &limits),
    }
    .map_err(to_py)?;
    let solution = backward_induction(&mdp);
    Ok(PySolution {
        value: solution.optimal_value().map(|v| v.to_string()),
        value_float: solution.optimal_value().map(rational::to_f64),
        diversity: mdp.diversity(),
        layer_sizes: mdp.stats().layer_sizes.clone(),
        steps: mdp.stats().steps + solution.steps(),
        policy: solution.into_policy(),
    })
}

/// Monte Carlo mean return and violation counts of `policy`.
#[pyfunction]
#[pyo3(signature = (instance, policy, episodes=1000, seed=0, mode="exact", epsilon=None))]
fn simulate<'py>(
    py: Python<'py>,
    instance: &PyInstance,
    policy: &PyPolicy,
    episodes: u64,
    seed: u64,
    mode: &str,
    epsilon: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = projection_for(&instance.spec, mode, epsilon)?;
    let summary = core::simulate::monte_carlo_value(&instance.spec, &policy.policy, cfg.as_ref(), episodes, seed)
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("episodes", summary.episodes)?;
    out.set_item("mean", summary.mean)?;
    out.set_item("std_error", summary.std_error)?;
    out.set_item("violations", summary.violations)?;
    out.set_item("bound_violations", summary.bound_violations)?;
    Ok(out)
}

/// One episode as a list of `(h, state, action, cost, c_bar)` tuples, costs
/// given as numerators over the instance denominator.
#[pyfunction]
#[pyo3(signature = (instance, policy, seed=0, episode=0, mode="exact", epsilon=None))]
fn rollout(
    instance: &PyInstance,
    policy: &PyPolicy,
    seed: u64,
    episode: u64,
    mode: &str,
    epsilon: Option<&Bound<'_, PyAny>>,
) -> PyResult<Vec<StepRecord>> {
    let cfg = projection_for(&instance.spec, mode, epsilon)?;
    let traj = core::simulate::rollout(&instance.spec, &policy.policy, cfg.as_ref(), seed, episode).map_err(to_py)?;
    Ok(traj
        .steps
        .iter()
        .map(|s| (s.h, s.state, s.action, s.cost.components().to_vec(), s.c_bar.to_vec()))
        .collect())
}

/// Exhaustive optimum over deterministic history policies; `None` when infeasible.
#[pyfunction]
#[pyo3(signature = (instance, ceiling=core::oracle::DEFAULT_ORACLE_CEILING))]
fn brute_force_optimum(instance: &PyInstance, ceiling: usize) -> PyResult<Option<String>> {
    let v = core::oracle::brute_force_optimum(&instance.spec, ceiling).map_err(to_py)?;
    Ok(v.map(|v| v.to_string()))
}

#[pyfunction]
fn knapsack_dp(values: Vec<i64>, weights: Vec<i64>, budget: i64) -> Option<i64> {
    core::oracle::knapsack_dp(&values, &weights, budget)
}

#[pyfunction]
fn partition_feasibility(items: Vec<i64>) -> Option<(Vec<i64>, Vec<i64>)> {
    core::oracle::partition_feasibility(&items)
}

/// Learns a policy through the interaction protocol. Returns the greedy
/// policy, the episode log as `(episode, return, max_prefix, violation)`
/// tuples and the estimated value.
#[pyfunction]
#[pyo3(signature = (instance, episodes=10_000, seed=0, mode="exact", epsilon=None, delta=0.1, gamma=0.01, bonus_scale=1.0))]
#[allow(clippy::too_many_arguments)]
fn learn(
    instance: &PyInstance,
    episodes: u64,
    seed: u64,
    mode: &str,
    epsilon: Option<&Bound<'_, PyAny>>,
    delta: f64,
    gamma: f64,
    bonus_scale: f64,
) -> PyResult<(PyPolicy, Vec<EpisodeRow>, f64)> {
    let cfg = projection_for(&instance.spec, mode, epsilon)?;
    let mut env = ProtocolEnv::new(instance.spec.clone(), cfg, seed).map_err(to_py)?;
    let config = LearnerConfig { episodes, delta, gamma, bonus_scale, seed };
    let outcome = learn_policy(&mut env, &config).map_err(to_py)?;
    let log = outcome.log.into_iter().map(|r| (r.episode, r.ret, r.max_prefix, r.violation)).collect();
    Ok((PyPolicy { policy: outcome.policy }, log, outcome.estimated_value))
}

/// Runs an oracle cross-check suite (`"tiny"` or `"lemmas"`). Returns
/// `(passed, failures)` with failures as `(check, seed, message)`.
#[pyfunction]
#[pyo3(signature = (suite="tiny", seed=0, count=100))]
fn verify(suite: &str, seed: u64, count: u64) -> PyResult<(bool, Vec<FailureRow>)> {
    let report = match suite {
        "tiny" => core::verify::run_tiny_suite(seed, count, core::verify::Mutation::None),
        "lemmas" => core::verify::run_lemmas_suite(seed, count),
        other => return Err(PyValueError::new_err(format!("unknown suite {other:?}"))),
    };
    let failures = report
        .failures()
        .map(|f| (f.check.to_string(), f.seed, f.failure.clone().unwrap_or_default()))
        .collect();
    Ok((report.passed(), failures))
}

#[pymodule]
fn anytime_cmdp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_class::<PyProjection>()?;
    m.add_class::<PyPolicy>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(rollout, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_optimum, m)?)?;
    m.add_function(wrap_pyfunction!(knapsack_dp, m)?)?;
    m.add_function(wrap_pyfunction!(partition_feasibility, m)?)?;
    m.add_function(wrap_pyfunction!(learn, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add("MODES", Mode::ALL.iter().map(|m| m.as_str()).collect::<Vec<_>>())?;
    Ok(())
}
