//! Python bindings: simulator, reward, trained policies, training runs and metrics.

use std::path::PathBuf;

use dolly_core::config::RunConfig;
use dolly_core::demos::{record_scripted_dataset, Dataset, Diversity};
use dolly_core::evalkit;
use dolly_core::gail::train_gail;
use dolly_core::nn::{Checkpoint, GaussianPolicy};
use dolly_core::ppo::{self, train_ppo, TrainOutput};
use dolly_core::rewards::{task_reward, RewardWeights, StepDeltas};
use dolly_core::sim::{Action, EpisodeConfig, Environment, Start, StartPosition, Task};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn err(e: dolly_core::Error) -> PyErr {
    use dolly_core::Error as E;
    match e {
        E::Divergence(_) | E::StaleCache { .. } | E::NonFinite(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = dolly_core::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

fn run_config(config: Option<&str>) -> PyResult<RunConfig> {
    let cfg = match config {
        Some(text) => RunConfig::from_json(text).map_err(err)?,
        None => RunConfig::default(),
    };
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

fn weights(w: Option<(f64, f64, f64)>) -> PyResult<RewardWeights> {
    let w = w.map_or_else(RewardWeights::default, |(a, s, c)| RewardWeights::new(a, s, c));
    w.validate().map_err(err)?;
    Ok(w)
}

/// One simulated episode; `start` is a preset name or "any".
#[pyclass(module = "dolly")]
struct Sim {
    inner: dolly_core::sim::Sim,
    weights: RewardWeights,
}

#[pymethods]
impl Sim {
    #[new]
    #[pyo3(signature = (task = "base", start = "P3", seed = 0, weights = None, config = None))]
    fn new(task: &str, start: &str, seed: u64, weights: Option<(f64, f64, f64)>, config: Option<&str>) -> PyResult<Self> {
        let mut env = run_config(config)?.env;
        env.task = parse(task)?;
        env.start = if start.eq_ignore_ascii_case("any") {
            Start::AnyPreset
        } else {
            Start::Preset(parse::<StartPosition>(start)?)
        };
        Ok(Sim {
            inner: dolly_core::sim::Sim::new(env, seed).map_err(err)?,
            weights: self::weights(weights)?,
        })
    }

    fn reset(&mut self, seed: u64) -> PyResult<Vec<f64>> {
        Ok(self.inner.reset(seed).map_err(err)?.0.to_vec())
    }

    /// Returns `(observation, reward, done, status)`.
    fn step(&mut self, action: Vec<f64>) -> PyResult<(Vec<f64>, f64, bool, &'static str)> {
        let task = self.inner.task();
        let a = Action::from_slice(task, &action).map_err(err)?;
        let out = self.inner.step(&a).map_err(err)?;
        let r = task_reward(task, &out.deltas, &self.weights);
        Ok((out.observation.0.to_vec(), r, out.status.is_terminal(), out.status.name()))
    }

    #[getter]
    fn observation(&self) -> Vec<f64> {
        self.inner.observation().0.to_vec()
    }

    /// `(x, y, heading)`.
    #[getter]
    fn pose(&self) -> (f64, f64, f64) {
        let p = self.inner.state().pose;
        (p.x, p.y, p.heading)
    }

    /// `(pan, tilt)` in radians.
    #[getter]
    fn camera(&self) -> (f64, f64) {
        let c = self.inner.state().camera;
        (c.pan, c.tilt)
    }

    /// `(cx, cy, area)` in pixels and percent of frame.
    #[getter]
    fn bbox(&self) -> (f64, f64, f64) {
        let b = self.inner.bbox();
        (b.cx, b.cy, b.area)
    }

    #[getter]
    fn status(&self) -> &'static str {
        self.inner.state().status.name()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.state().step
    }

    #[getter]
    fn action_dim(&self) -> usize {
        self.inner.task().action_dim()
    }
}

/// A trained policy loaded from a checkpoint file.
#[pyclass(module = "dolly")]
struct Policy {
    inner: GaussianPolicy,
    #[pyo3(get)]
    algo: String,
    #[pyo3(get)]
    task: String,
    #[pyo3(get)]
    seed: u64,
}

#[pymethods]
impl Policy {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ck = Checkpoint::load(&path).map_err(err)?;
        Ok(Policy {
            inner: ck.policy().map_err(err)?,
            algo: ck.algo,
            task: ck.task.to_string(),
            seed: ck.seed,
        })
    }

    /// Deterministic (mean) action, squashed to [-1, 1].
    fn act(&self, observation: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.deterministic_action(&observation).map_err(err)
    }
}

/// Per-step reward for the given deltas.
#[pyfunction]
#[pyo3(signature = (task, d_area, d_steer_rate, d_pan_rate = 0.0, d_tilt_rate = 0.0, weights = None))]
fn reward(
    task: &str,
    d_area: f64,
    d_steer_rate: f64,
    d_pan_rate: f64,
    d_tilt_rate: f64,
    weights: Option<(f64, f64, f64)>,
) -> PyResult<f64> {
    let d = StepDeltas {
        d_area,
        d_steer_rate,
        d_pan_rate,
        d_tilt_rate,
    };
    Ok(task_reward(parse(task)?, &d, &self::weights(weights)?))
}

/// Returns `(advantages, returns)`.
#[pyfunction]
fn compute_gae(
    rewards: Vec<f64>,
    values: Vec<f64>,
    dones: Vec<bool>,
    bootstrap_value: f64,
    gamma: f64,
    lam: f64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    ppo::compute_gae(&rewards, &values, &dones, bootstrap_value, gamma, lam).map_err(err)
}

/// Spearman rank correlation with average ranks; `None` when either side is constant.
#[pyfunction]
fn spearman(a: Vec<f64>, b: Vec<f64>) -> PyResult<Option<f64>> {
    evalkit::spearman(&a, &b).map_err(err)
}

/// Records scripted-expert demonstrations and returns the trajectory count.
#[pyfunction]
#[pyo3(signature = (task, path, count = 5, diversity = "high", seed = 0))]
fn record_demos(task: &str, path: PathBuf, count: usize, diversity: &str, seed: u64) -> PyResult<usize> {
    let cfg = RunConfig::default();
    let env = EpisodeConfig {
        task: parse(task)?,
        ..cfg.env
    };
    let ds = record_scripted_dataset(&env, parse::<Diversity>(diversity)?, count, seed, &cfg.reward, true).map_err(err)?;
    ds.save(&path).map_err(err)?;
    Ok(ds.trajectories.len())
}

/// Trains one seed and optionally saves the checkpoint.
///
/// Returns `(mean_reward, std_reward, success_rate)` of the final evaluation.
#[pyfunction]
#[pyo3(signature = (algo, task, timesteps, seed = 0, demos = None, checkpoint = None, config = None))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    algo: &str,
    task: &str,
    timesteps: usize,
    seed: u64,
    demos: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    config: Option<&str>,
) -> PyResult<(f64, f64, f64)> {
    let mut cfg = run_config(config)?;
    cfg.ppo.total_timesteps = timesteps;
    cfg.validate().map_err(err)?;
    let task: Task = parse(task)?;
    let env = EpisodeConfig { task, ..cfg.env.clone() };
    let meta = cfg.to_value();
    let run = || -> dolly_core::Result<(TrainOutput, Checkpoint)> {
        match (algo, demos) {
            ("ppo", _) => {
                let t = train_ppo(&env, &cfg.reward, &cfg.ppo, seed)?;
                let ck = t.actor_critic.checkpoint("ppo", task, seed, meta);
                Ok((t, ck))
            }
            ("gail", Some(path)) => {
                let ds = Dataset::load_for_task(&path, task)?;
                let g = train_gail(&ds, &env, &cfg.reward, &cfg.ppo, &cfg.gail, seed)?;
                let ck = g.checkpoint(task, seed, meta);
                Ok((g.train, ck))
            }
            ("gail", None) => Err(dolly_core::Error::Config("gail requires demos".into())),
            (other, _) => Err(dolly_core::Error::Config(format!("unknown algorithm '{other}'"))),
        }
    };
    let (out, ck) = py.detach(run).map_err(err)?;
    if let Some(path) = checkpoint {
        ck.save(&path).map_err(err)?;
    }
    Ok((out.eval.mean_reward, out.eval.std_reward, out.eval.success_rate))
}

/// Runs the oracle self-checks; returns `(name, passed, detail)` per check.
#[pyfunction]
#[pyo3(signature = (inject = None))]
fn verify(py: Python<'_>, inject: Option<&str>) -> PyResult<Vec<(String, bool, String)>> {
    let fault = inject.map(parse).transpose()?;
    let results = py.detach(|| dolly_core::verify::run_all(fault));
    Ok(results.into_iter().map(|r| (r.name.to_string(), r.passed, r.detail)).collect())
}

/// Default run configuration as JSON.
#[pyfunction]
fn default_config() -> String {
    RunConfig::default().to_json_pretty()
}

#[pymodule]
fn dolly(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("OBS_DIM", dolly_core::sim::OBS_DIM)?;
    m.add("OBS_FEATURES", dolly_core::sim::OBS_FEATURES.to_vec())?;
    m.add_class::<Sim>()?;
    m.add_class::<Policy>()?;
    m.add_function(wrap_pyfunction!(reward, m)?)?;
    m.add_function(wrap_pyfunction!(compute_gae, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(record_demos, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    Ok(())
}
