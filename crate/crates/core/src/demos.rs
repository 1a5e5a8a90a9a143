//! Demonstration datasets.
//!
//! A `.demos.jsonl` file holds one JSON record per line: the first line is a
//! [`DatasetManifest`], every following line one [`Trajectory`]. Floats are
//! written in shortest round-trip form, so `load(save(x)) == x` exactly.
//!
//! [`scripted_expert`] is a proportional controller standing in for a human
//! operator, so datasets can be produced without a joystick.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rewards::{task_reward, RewardWeights};
use crate::sim::{
    Action, BoundingBox, CameraState, EpisodeConfig, Environment, Observation, Sim, SimState, Start,
    StartPosition, Status, Task, FRAME_CENTER_X, FRAME_CENTER_Y, OBS_DIM, OBS_FEATURES,
};

pub const DEMOS_FORMAT_VERSION: u32 = 1;

/// Default number of demonstrations per dataset.
pub const DEFAULT_DEMOS: usize = 25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub step: usize,
    pub observation: Vec<f64>,
    pub action: Vec<f64>,
    pub next_observation: Vec<f64>,
    pub done: bool,
    /// Handcrafted reward, kept for analysis only.
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub task: Task,
    pub start_position: Option<StartPosition>,
    pub seed: u64,
    pub operator: String,
    /// Seconds since the Unix epoch at recording time.
    pub timestamp: u64,
    pub sim_version: String,
    /// Episode configuration the trajectory was recorded under.
    pub env: EpisodeConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub meta: TrajectoryMeta,
    pub transitions: Vec<Transition>,
    pub terminal: Status,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Checks dimensions, step numbering and next-observation chaining.
    pub fn validate(&self, require_success: bool) -> Result<()> {
        if self.transitions.is_empty() {
            return Err(Error::Data("empty trajectory".into()));
        }
        let act_dim = self.meta.task.action_dim();
        for (i, t) in self.transitions.iter().enumerate() {
            if t.observation.len() != OBS_DIM || t.next_observation.len() != OBS_DIM {
                return Err(Error::Data(format!("transition {i}: observation dimension")));
            }
            if t.action.len() != act_dim {
                return Err(Error::Data(format!(
                    "transition {i}: action has {} components, task {} needs {act_dim}",
                    t.action.len(),
                    self.meta.task
                )));
            }
            if t.step != i {
                return Err(Error::Data(format!("transition {i}: step index {}", t.step)));
            }
            let last = i + 1 == self.transitions.len();
            if t.done && !last {
                return Err(Error::Data(format!("transition {i}: done before the end")));
            }
            if !last && t.next_observation != self.transitions[i + 1].observation {
                return Err(Error::Data(format!("broken chaining between transitions {i} and {}", i + 1)));
            }
        }
        let ends_done = self.transitions.last().is_some_and(|t| t.done);
        if ends_done != self.terminal.is_terminal() {
            return Err(Error::Data("terminal status disagrees with final done flag".into()));
        }
        if require_success && self.terminal != Status::Success {
            return Err(Error::Data(format!(
                "demonstration ended in {} rather than Success",
                self.terminal.name()
            )));
        }
        Ok(())
    }
}

/// Builds a [`Trajectory`] from a stream of simulation steps.
#[derive(Clone, Debug)]
pub struct TrajectoryAccumulator {
    meta: TrajectoryMeta,
    transitions: Vec<Transition>,
    terminal: Status,
}

impl TrajectoryAccumulator {
    pub fn new(meta: TrajectoryMeta) -> Self {
        TrajectoryAccumulator {
            meta,
            transitions: Vec::new(),
            terminal: Status::Running,
        }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn is_sealed(&self) -> bool {
        self.terminal.is_terminal()
    }

    pub fn push(
        &mut self,
        observation: &[f64],
        action: &[f64],
        next_observation: &[f64],
        status: Status,
        reward: f64,
    ) -> Result<()> {
        if self.is_sealed() {
            return Err(Error::EpisodeOver);
        }
        let act_dim = self.meta.task.action_dim();
        if observation.len() != OBS_DIM || next_observation.len() != OBS_DIM {
            return Err(Error::Dimension {
                expected: OBS_DIM,
                got: observation.len().max(next_observation.len()),
                context: "recorded observation",
            });
        }
        if action.len() != act_dim {
            return Err(Error::Dimension {
                expected: act_dim,
                got: action.len(),
                context: "recorded action",
            });
        }
        if let Some(prev) = self.transitions.last() {
            if prev.next_observation != observation {
                return Err(Error::Data("observation does not continue the previous transition".into()));
            }
        }
        self.transitions.push(Transition {
            step: self.transitions.len(),
            observation: observation.to_vec(),
            action: action.to_vec(),
            next_observation: next_observation.to_vec(),
            done: status.is_terminal(),
            reward,
        });
        self.terminal = status;
        Ok(())
    }

    pub fn finish(self) -> Trajectory {
        Trajectory {
            meta: self.meta,
            transitions: self.transitions,
            terminal: self.terminal,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Diversity {
    Low,
    Moderate,
    High,
}

impl Diversity {
    pub fn positions(self) -> &'static [StartPosition] {
        use StartPosition::*;
        match self {
            Diversity::Low => &[P3],
            Diversity::Moderate => &[P1, P3, P5],
            Diversity::High => &[P1, P2, P3, P4, P5],
        }
    }

    /// The label whose position set equals `present` exactly, if any.
    pub fn from_positions(present: &BTreeSet<StartPosition>) -> Option<Self> {
        [Diversity::Low, Diversity::Moderate, Diversity::High]
            .into_iter()
            .find(|d| d.positions().iter().copied().collect::<BTreeSet<_>>() == *present)
    }

    pub fn name(self) -> &'static str {
        match self {
            Diversity::Low => "low",
            Diversity::Moderate => "moderate",
            Diversity::High => "high",
        }
    }
}

impl fmt::Display for Diversity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Diversity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Ok(Diversity::Low),
            "moderate" => Ok(Diversity::Moderate),
            "high" => Ok(Diversity::High),
            other => Err(Error::Config(format!("unknown diversity level '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub file: String,
    pub trajectories: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub task: Task,
    pub diversity: Option<Diversity>,
    pub start_positions: Vec<StartPosition>,
    pub obs_features: Vec<String>,
    pub obs_spec_hash: String,
    pub files: Vec<FileEntry>,
    pub transition_count: usize,
}

/// SHA-256 over the observation feature list and its scaling version.
pub fn obs_spec_hash() -> String {
    let mut h = Sha256::new();
    h.update(b"dolly-obs-v1\n");
    for f in OBS_FEATURES {
        h.update(f.as_bytes());
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub task: Task,
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn new(task: Task) -> Self {
        Dataset {
            task,
            trajectories: Vec::new(),
        }
    }

    pub fn transition_count(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn start_positions(&self) -> BTreeSet<StartPosition> {
        self.trajectories.iter().filter_map(|t| t.meta.start_position).collect()
    }

    pub fn diversity(&self) -> Option<Diversity> {
        if self.trajectories.iter().any(|t| t.meta.start_position.is_none()) {
            return None;
        }
        Diversity::from_positions(&self.start_positions())
    }

    pub fn manifest(&self, file_name: &str) -> DatasetManifest {
        DatasetManifest {
            format_version: DEMOS_FORMAT_VERSION,
            task: self.task,
            diversity: self.diversity(),
            start_positions: self.start_positions().into_iter().collect(),
            obs_features: OBS_FEATURES.iter().map(|s| s.to_string()).collect(),
            obs_spec_hash: obs_spec_hash(),
            files: vec![FileEntry {
                file: file_name.to_string(),
                trajectories: self.trajectories.len(),
            }],
            transition_count: self.transition_count(),
        }
    }

    pub fn validate(&self, require_success: bool) -> Result<()> {
        for (i, t) in self.trajectories.iter().enumerate() {
            if t.meta.task != self.task {
                return Err(Error::TaskMismatch {
                    expected: self.task.to_string(),
                    found: format!("{} (trajectory {i})", t.meta.task),
                });
            }
            t.validate(require_success)
                .map_err(|e| Error::Data(format!("trajectory {i}: {e}")))?;
        }
        Ok(())
    }

    /// Writes the dataset atomically (temp file + rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let tmp = path.with_extension("jsonl.tmp");
        {
            let mut w = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
            serde_json::to_writer(&mut w, &self.manifest(&name))?;
            w.write_all(b"\n")?;
            for t in &self.trajectories {
                serde_json::to_writer(&mut w, t)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Reads and checks a dataset: version, observation spec, counts, chaining and labels.
    pub fn load(path: &Path) -> Result<Self> {
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut lines = reader.lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::Data(format!("{}: missing manifest line", path.display())))??;
        let manifest: DatasetManifest = serde_json::from_str(&first)?;
        if manifest.format_version != DEMOS_FORMAT_VERSION {
            return Err(Error::Version {
                expected: DEMOS_FORMAT_VERSION,
                found: manifest.format_version,
            });
        }
        if manifest.obs_spec_hash != obs_spec_hash() {
            return Err(Error::Data("observation spec hash does not match this build".into()));
        }
        let mut trajectories = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            trajectories.push(serde_json::from_str::<Trajectory>(&line)?);
        }
        let ds = Dataset {
            task: manifest.task,
            trajectories,
        };
        let declared: usize = manifest.files.iter().map(|f| f.trajectories).sum();
        if declared != ds.trajectories.len() || manifest.transition_count != ds.transition_count() {
            return Err(Error::Data("manifest counts do not match file contents".into()));
        }
        if manifest.diversity != ds.diversity()
            || manifest.start_positions != ds.start_positions().into_iter().collect::<Vec<_>>()
        {
            return Err(Error::Data("manifest diversity label does not match start positions".into()));
        }
        ds.validate(false)?;
        Ok(ds)
    }

    /// Loads a dataset and rejects it unless it was recorded for `task`.
    pub fn load_for_task(path: &Path, task: Task) -> Result<Self> {
        let ds = Dataset::load(path)?;
        if ds.task != task {
            return Err(Error::TaskMismatch {
                expected: task.to_string(),
                found: ds.task.to_string(),
            });
        }
        Ok(ds)
    }

    /// Appends one trajectory to a dataset file, creating it if needed.
    pub fn append_to_file(path: &Path, trajectory: Trajectory) -> Result<usize> {
        let mut ds = if path.exists() {
            Dataset::load_for_task(path, trajectory.meta.task)?
        } else {
            Dataset::new(trajectory.meta.task)
        };
        ds.trajectories.push(trajectory);
        ds.save(path)?;
        Ok(ds.trajectories.len())
    }

    /// All (observation, action) pairs in recording order.
    pub fn flat_pairs(&self) -> Vec<(&[f64], &[f64])> {
        self.trajectories
            .iter()
            .flat_map(|t| t.transitions.iter())
            .map(|tr| (tr.observation.as_slice(), tr.action.as_slice()))
            .collect()
    }
}

/// Paired (observation, action) rows.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExpertBatch {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
}

impl ExpertBatch {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// Flat transition indices drawn uniformly; deterministic in `seed`.
///
/// Without replacement `size` may not exceed the dataset size.
pub fn sample_indices(total: usize, size: usize, seed: u64, replace: bool) -> Result<Vec<usize>> {
    if total == 0 {
        return Err(Error::Empty("dataset"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if replace {
        Ok((0..size).map(|_| rng.random_range(0..total)).collect())
    } else {
        if size > total {
            return Err(Error::Config(format!(
                "cannot draw {size} distinct transitions from {total}"
            )));
        }
        let mut idx: Vec<usize> = (0..total).collect();
        let (chosen, _) = idx.partial_shuffle(&mut rng, size);
        Ok(chosen.to_vec())
    }
}

pub fn sample_batch(dataset: &Dataset, size: usize, seed: u64, replace: bool) -> Result<ExpertBatch> {
    let pairs = dataset.flat_pairs();
    let idx = sample_indices(pairs.len(), size, seed, replace)?;
    Ok(ExpertBatch {
        observations: idx.iter().map(|&i| pairs[i].0.to_vec()).collect(),
        actions: idx.iter().map(|&i| pairs[i].1.to_vec()).collect(),
    })
}

/// Proportional-controller gains of the scripted expert.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpertGains {
    pub k_steer: f64,
    pub k_throttle: f64,
    pub k_pan: f64,
    pub k_tilt: f64,
    /// Throttle floor while the area target is not yet reached.
    pub min_throttle: f64,
}

impl Default for ExpertGains {
    fn default() -> Self {
        ExpertGains {
            k_steer: 2.0,
            k_throttle: 1.0,
            k_pan: 1.5,
            k_tilt: 1.5,
            min_throttle: 0.2,
        }
    }
}

/// Expert action from what the camera sees.
///
/// Steering follows the subject's bearing from the robot heading, throttle
/// the remaining area deficit (slowed by large bearing errors), and in the
/// Full task pan/tilt re-centre the subject in the frame.
pub fn expert_action(
    bbox: Option<&BoundingBox>,
    camera: &CameraState,
    cfg: &EpisodeConfig,
    gains: &ExpertGains,
) -> Action {
    let Some(bbox) = bbox.filter(|b| b.center_in_frame()) else {
        return Action::zero();
    };
    let focal = FRAME_CENTER_X / (cfg.hfov() / 2.0).tan();
    let image_bearing = ((FRAME_CENTER_X - bbox.cx) / focal).atan();
    let bearing = camera.pan + image_bearing;
    let steering = (gains.k_steer * bearing).clamp(-1.0, 1.0);
    let deficit = cfg.area_target - bbox.area;
    let throttle = if deficit <= 0.0 {
        0.0
    } else {
        (gains.k_throttle * deficit).clamp(gains.min_throttle, 1.0) * bearing.cos().max(0.0)
    };
    match cfg.task {
        Task::Base => Action {
            throttle,
            steering,
            pan_rate: 0.0,
            tilt_rate: 0.0,
        },
        Task::Full => Action {
            throttle,
            steering,
            pan_rate: (gains.k_pan * (FRAME_CENTER_X - bbox.cx) / FRAME_CENTER_X).clamp(-1.0, 1.0),
            tilt_rate: (gains.k_tilt * (FRAME_CENTER_Y - bbox.cy) / FRAME_CENTER_Y).clamp(-1.0, 1.0),
        },
    }
}

/// Scripted stand-in for the human operator; zero action once the subject is lost.
pub fn scripted_expert(state: &SimState, cfg: &EpisodeConfig) -> Action {
    if state.status == Status::SubjectLost {
        return Action::zero();
    }
    expert_action(Some(&state.prev_bbox), &state.camera, cfg, &ExpertGains::default())
}

fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn trajectory_meta(state: &SimState, cfg: &EpisodeConfig, seed: u64, operator: &str) -> TrajectoryMeta {
    TrajectoryMeta {
        task: cfg.task,
        start_position: state.start_position,
        seed,
        operator: operator.to_string(),
        timestamp: unix_now(),
        sim_version: crate::SIM_VERSION.to_string(),
        env: cfg.clone(),
    }
}

/// Runs one scripted-expert episode and returns it as a trajectory.
pub fn record_scripted_episode(cfg: &EpisodeConfig, seed: u64, weights: &RewardWeights) -> Result<Trajectory> {
    let mut sim = Sim::new(cfg.clone(), seed)?;
    let mut acc = TrajectoryAccumulator::new(trajectory_meta(sim.state(), cfg, seed, "scripted"));
    let mut obs = sim.observation();
    loop {
        let action = scripted_expert(sim.state(), cfg);
        let out = sim.step(&action)?;
        let reward = task_reward(cfg.task, &out.deltas, weights);
        acc.push(obs.as_slice(), &action.to_vec(cfg.task), out.observation.as_slice(), out.status, reward)?;
        obs = out.observation;
        if out.status.is_terminal() {
            return Ok(acc.finish());
        }
    }
}

/// Records `count` scripted demonstrations cycling through the diversity level's start positions.
pub fn record_scripted_dataset(
    template: &EpisodeConfig,
    diversity: Diversity,
    count: usize,
    seed: u64,
    weights: &RewardWeights,
    require_success: bool,
) -> Result<Dataset> {
    let positions = diversity.positions();
    let mut ds = Dataset::new(template.task);
    for i in 0..count {
        let cfg = EpisodeConfig {
            start: Start::Preset(positions[i % positions.len()]),
            ..template.clone()
        };
        let traj = record_scripted_episode(&cfg, seed.wrapping_add(i as u64), weights)?;
        traj.validate(require_success)?;
        ds.trajectories.push(traj);
    }
    Ok(ds)
}

/// Re-simulates a trajectory's actions from its recorded seed.
///
/// Returns the index of the first transition whose observations differ, if any.
pub fn replay_mismatch(traj: &Trajectory) -> Result<Option<usize>> {
    let mut sim = Sim::new(traj.meta.env.clone(), traj.meta.seed)?;
    let mut obs: Observation = sim.observation();
    for (i, t) in traj.transitions.iter().enumerate() {
        if obs.as_slice() != t.observation.as_slice() {
            return Ok(Some(i));
        }
        let action = Action::from_slice(traj.meta.task, &t.action)?;
        let out = sim.step(&action)?;
        if out.observation.as_slice() != t.next_observation.as_slice() || out.status.is_terminal() != t.done {
            return Ok(Some(i));
        }
        obs = out.observation;
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(task: Task, p: StartPosition) -> EpisodeConfig {
        EpisodeConfig {
            task,
            start: Start::Preset(p),
            ..Default::default()
        }
    }

    #[test]
    fn one_step_episode() {
        let c = cfg(Task::Base, StartPosition::P3);
        let sim = Sim::new(c.clone(), 0).unwrap();
        let mut acc = TrajectoryAccumulator::new(trajectory_meta(sim.state(), &c, 0, "t"));
        let o = [0.0; OBS_DIM];
        acc.push(&o, &[0.5, 0.0], &o, Status::Success, 0.1).unwrap();
        assert!(acc.push(&o, &[0.5, 0.0], &o, Status::Running, 0.1).is_err());
        let t = acc.finish();
        assert_eq!(t.len(), 1);
        t.validate(true).unwrap();
    }

    #[test]
    fn accumulator_rejects_dimension_change() {
        let c = cfg(Task::Base, StartPosition::P3);
        let sim = Sim::new(c.clone(), 0).unwrap();
        let mut acc = TrajectoryAccumulator::new(trajectory_meta(sim.state(), &c, 0, "t"));
        let o = [0.0; OBS_DIM];
        acc.push(&o, &[0.5, 0.0], &o, Status::Running, 0.0).unwrap();
        assert!(matches!(
            acc.push(&o, &[0.5, 0.0, 0.1, 0.1], &o, Status::Running, 0.0),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn expert_centred_has_no_steering() {
        let c = EpisodeConfig {
            start_noise: 0.0,
            ..cfg(Task::Full, StartPosition::P3)
        };
        let sim = Sim::new(c.clone(), 0).unwrap();
        let a = scripted_expert(sim.state(), &c);
        assert_eq!(a.steering, 0.0);
        assert_eq!(a.pan_rate, 0.0);
        assert!(a.throttle > 0.0);
    }

    #[test]
    fn expert_stops_at_target() {
        let c = cfg(Task::Base, StartPosition::P3);
        let bbox = BoundingBox {
            cx: 60.0,
            cy: 40.0,
            area: 10.5,
        };
        let cam = CameraState {
            pan: 0.0,
            tilt: 0.0,
            height: 1.2,
        };
        assert_eq!(expert_action(Some(&bbox), &cam, &c, &ExpertGains::default()).throttle, 0.0);
        assert_eq!(expert_action(None, &cam, &c, &ExpertGains::default()), Action::zero());
    }

    #[test]
    fn expert_succeeds_from_every_preset() {
        for task in [Task::Base, Task::Full] {
            for p in StartPosition::ALL {
                for seed in 0..5 {
                    let t = record_scripted_episode(&cfg(task, p), seed, &RewardWeights::default()).unwrap();
                    assert_eq!(t.terminal, Status::Success, "{task} {p} seed {seed}");
                    t.validate(true).unwrap();
                }
            }
        }
    }

    #[test]
    fn scripted_replay_matches() {
        let t = record_scripted_episode(&cfg(Task::Full, StartPosition::P1), 3, &RewardWeights::default()).unwrap();
        assert_eq!(replay_mismatch(&t).unwrap(), None);
    }

    #[test]
    fn broken_chaining_detected() {
        let mut t = record_scripted_episode(&cfg(Task::Base, StartPosition::P2), 1, &RewardWeights::default()).unwrap();
        t.transitions[3].observation[0] += 1e-9;
        assert!(t.validate(false).is_err());
    }

    #[test]
    fn diversity_labels() {
        use StartPosition::*;
        let set = |v: &[StartPosition]| v.iter().copied().collect::<BTreeSet<_>>();
        assert_eq!(Diversity::from_positions(&set(&[P3])), Some(Diversity::Low));
        assert_eq!(Diversity::from_positions(&set(&[P5, P1, P3])), Some(Diversity::Moderate));
        assert_eq!(Diversity::from_positions(&set(&StartPosition::ALL)), Some(Diversity::High));
        assert_eq!(Diversity::from_positions(&set(&[P1, P2])), None);
    }

    #[test]
    fn permutation_without_replacement() {
        let mut idx = sample_indices(40, 40, 9, false).unwrap();
        idx.sort_unstable();
        assert_eq!(idx, (0..40).collect::<Vec<_>>());
        assert_eq!(sample_indices(40, 10, 9, true).unwrap(), sample_indices(40, 10, 9, true).unwrap());
        assert!(sample_indices(0, 1, 0, true).is_err());
        assert!(sample_indices(3, 4, 0, false).is_err());
    }

    #[test]
    fn uniform_sampling_frequencies() {
        let n = 50;
        let draws = 100_000;
        let idx = sample_indices(n, draws, 77, true).unwrap();
        let mut counts = vec![0usize; n];
        idx.iter().for_each(|&i| counts[i] += 1);
        let p = 1.0 / n as f64;
        let expected = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        let mut chi2 = 0.0;
        for &c in &counts {
            assert!((c as f64 - expected).abs() < 5.0 * sigma);
            chi2 += (c as f64 - expected).powi(2) / expected;
        }
        // 49 degrees of freedom; 99.9th percentile is about 85.4.
        assert!(chi2 < 85.4, "{chi2}");
    }
}
