//! One operator session: a simulator, the latest-action mailbox and an
//! optional recording, advanced one fixed `dt` per tick.

use std::path::PathBuf;

use dolly_core::demos::{trajectory_meta, Dataset, Trajectory, TrajectoryAccumulator};
use dolly_core::rewards::{task_reward, RewardWeights};
use dolly_core::sim::{Action, EpisodeConfig, Environment, Observation, Sim, Start, StartPosition, Status, Task};
use dolly_core::{Error, Result};

use crate::protocol::{Mode, ServerMessage};

#[derive(Clone, Debug)]
pub struct SessionConfig {
    /// Episode template; task and start are replaced on reset.
    pub env: EpisodeConfig,
    pub weights: RewardWeights,
    pub tick_hz: f64,
    /// Without a new action for this long the session holds still.
    pub input_timeout_ms: u64,
    /// Dataset file that saved recordings are appended to.
    pub dataset: PathBuf,
    pub require_success: bool,
    pub operator: String,
}

impl SessionConfig {
    /// Ticks without fresh input before the session pauses.
    pub fn timeout_ticks(&self) -> u64 {
        (self.input_timeout_ms as f64 * self.tick_hz / 1000.0).ceil() as u64
    }
}

/// Result of closing a recording.
#[derive(Clone, Debug, PartialEq)]
pub enum RecordOutcome {
    Saved { trajectories: usize, transitions: usize },
    Discarded { transitions: usize },
}

pub struct Session {
    cfg: SessionConfig,
    env: EpisodeConfig,
    seed: u64,
    sim: Sim,
    obs: Observation,
    mode: Mode,
    latest: Option<(u64, Action)>,
    seq_acked: Option<u64>,
    fresh_input: bool,
    stale_ticks: u64,
    tick: u64,
    last_reward: f64,
    recording: Option<TrajectoryAccumulator>,
    replay: Vec<Action>,
}

impl Session {
    pub fn new(cfg: SessionConfig) -> Result<Self> {
        cfg.env.validate()?;
        cfg.weights.validate()?;
        if !(cfg.tick_hz.is_finite() && cfg.tick_hz > 0.0) {
            return Err(Error::Config("tick rate must be positive".into()));
        }
        let env = cfg.env.clone();
        let sim = Sim::new(env.clone(), 0)?;
        Ok(Session {
            obs: sim.observation(),
            sim,
            env,
            seed: 0,
            cfg,
            mode: Mode::Idle,
            latest: None,
            seq_acked: None,
            fresh_input: false,
            stale_ticks: 0,
            tick: 0,
            last_reward: 0.0,
            recording: None,
            replay: Vec::new(),
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn sim(&self) -> &Sim {
        &self.sim
    }

    pub fn env(&self) -> &EpisodeConfig {
        &self.env
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn is_paused(&self) -> bool {
        self.stale_ticks > self.cfg.timeout_ticks()
    }

    /// Last-writer-wins by sequence number; older or equal sequences are ignored.
    pub fn offer_action(&mut self, seq: u64, action: Action) -> bool {
        if self.latest.is_some_and(|(s, _)| s >= seq) {
            return false;
        }
        self.latest = Some((seq, action));
        self.fresh_input = true;
        true
    }

    fn restart(&mut self) -> Result<()> {
        self.sim = Sim::new(self.env.clone(), self.seed)?;
        self.obs = self.sim.observation();
        self.last_reward = 0.0;
        self.stale_ticks = 0;
        Ok(())
    }

    /// Starts a fresh live episode; an open recording is discarded.
    pub fn reset(&mut self, task: Task, start: Option<StartPosition>, seed: u64) -> Result<()> {
        let env = EpisodeConfig {
            task,
            start: start.map_or(Start::AnyPreset, Start::Preset),
            ..self.cfg.env.clone()
        };
        env.validate()?;
        self.env = env;
        self.seed = seed;
        self.recording = None;
        self.replay.clear();
        self.restart()?;
        self.mode = Mode::Live;
        Ok(())
    }

    /// Restarts the current episode and records it from the first step.
    pub fn record_start(&mut self) -> Result<()> {
        if self.recording.is_some() {
            return Err(Error::Data("a recording is already open".into()));
        }
        if self.mode == Mode::Replay {
            return Err(Error::Data("cannot record during replay".into()));
        }
        self.replay.clear();
        self.restart()?;
        let meta = trajectory_meta(self.sim.state(), &self.env, self.seed, &self.cfg.operator);
        self.recording = Some(TrajectoryAccumulator::new(meta));
        self.mode = Mode::Recording;
        Ok(())
    }

    /// Closes the open recording, appending it to the dataset on `save`.
    pub fn record_stop(&mut self, save: bool) -> Result<RecordOutcome> {
        let acc = self
            .recording
            .take()
            .ok_or_else(|| Error::Data("no recording is open".into()))?;
        if self.mode == Mode::Recording {
            self.mode = Mode::Live;
        }
        let transitions = acc.len();
        if !save {
            return Ok(RecordOutcome::Discarded { transitions });
        }
        if acc.is_empty() {
            return Err(Error::Empty("recorded trajectory"));
        }
        let traj = acc.finish();
        traj.validate(self.cfg.require_success)?;
        let trajectories = Dataset::append_to_file(&self.cfg.dataset, traj)?;
        Ok(RecordOutcome::Saved {
            trajectories,
            transitions,
        })
    }

    /// Re-drives a stored trajectory's actions from its recorded seed.
    pub fn start_replay(&mut self, traj: &Trajectory) -> Result<()> {
        if self.recording.is_some() {
            return Err(Error::Data("stop the recording before replaying".into()));
        }
        self.env = traj.meta.env.clone();
        self.seed = traj.meta.seed;
        self.restart()?;
        self.replay = traj
            .transitions
            .iter()
            .rev()
            .map(|t| Action::from_slice(traj.meta.task, &t.action))
            .collect::<Result<_>>()?;
        self.mode = Mode::Replay;
        Ok(())
    }

    /// Drops any open recording; returns its length if one was open.
    pub fn shutdown(&mut self) -> Option<usize> {
        self.mode = Mode::Idle;
        self.recording.take().map(|a| a.len())
    }

    /// Advances one `dt` with the held action (or the next replay action)
    /// and returns the state message for this tick.
    pub fn tick(&mut self) -> Result<ServerMessage> {
        if std::mem::take(&mut self.fresh_input) {
            self.stale_ticks = 0;
        } else {
            self.stale_ticks = self.stale_ticks.saturating_add(1);
        }
        let action = match self.mode {
            Mode::Idle => None,
            Mode::Replay => self.replay.pop(),
            Mode::Live | Mode::Recording if self.is_paused() => None,
            Mode::Live | Mode::Recording => {
                if let Some((seq, _)) = self.latest {
                    self.seq_acked = Some(seq);
                }
                Some(self.latest.map_or(Action::zero(), |(_, a)| a))
            }
        };
        match action {
            Some(a) => self.advance(&a)?,
            None if self.mode == Mode::Replay => self.mode = Mode::Idle,
            None => {}
        }
        Ok(self.state_message())
    }

    fn advance(&mut self, action: &Action) -> Result<()> {
        let task = self.env.task;
        let out = self.sim.step(action)?;
        self.tick += 1;
        self.last_reward = task_reward(task, &out.deltas, &self.cfg.weights);
        if self.mode == Mode::Recording {
            if let Some(acc) = self.recording.as_mut() {
                let applied = Action::from_slice(task, &action.to_vec(task))?;
                acc.push(
                    self.obs.as_slice(),
                    &applied.to_vec(task),
                    out.observation.as_slice(),
                    out.status,
                    self.last_reward,
                )?;
            }
        }
        self.obs = out.observation;
        if out.status.is_terminal() {
            self.mode = Mode::Idle;
            self.replay.clear();
        }
        Ok(())
    }

    pub fn state_message(&self) -> ServerMessage {
        let st = self.sim.state();
        ServerMessage::State {
            tick: self.tick,
            seq_acked: self.seq_acked,
            pose: st.pose,
            camera: st.camera,
            bbox: st.prev_bbox.into(),
            reward: self.last_reward,
            done: st.status.is_terminal(),
            mode: self.mode,
            status: st.status,
            task: self.env.task,
            paused: self.is_paused() && matches!(self.mode, Mode::Live | Mode::Recording),
            recording_len: self.recording.as_ref().map_or(0, |a| a.len()),
        }
    }

    pub fn status(&self) -> Status {
        self.sim.state().status
    }
}

#[cfg(test)]
mod tests {
    use dolly_core::demos::{record_scripted_episode, scripted_expert};

    use super::*;

    fn config(dir: &std::path::Path) -> SessionConfig {
        SessionConfig {
            env: EpisodeConfig::default(),
            weights: RewardWeights::default(),
            tick_hz: 30.0,
            input_timeout_ms: 1000,
            dataset: dir.join("demos.jsonl"),
            require_success: true,
            operator: "tester".into(),
        }
    }

    fn live(dir: &std::path::Path) -> Session {
        let mut s = Session::new(config(dir)).unwrap();
        s.reset(Task::Base, Some(StartPosition::P3), 7).unwrap();
        s
    }

    #[test]
    fn no_action_holds_still() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = live(dir.path());
        let pose = s.sim().state().pose;
        for _ in 0..10 {
            s.tick().unwrap();
        }
        assert_eq!(s.sim().state().pose, pose);
        assert_eq!(s.tick_count(), 10);
    }

    #[test]
    fn later_sequence_wins() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = live(dir.path());
        let slow = Action { throttle: 0.1, ..Action::zero() };
        let fast = Action { throttle: 1.0, ..Action::zero() };
        assert!(s.offer_action(1, slow));
        assert!(s.offer_action(2, fast));
        assert!(!s.offer_action(1, slow));
        let msg = s.tick().unwrap();
        assert_eq!(s.sim().state().prev_action, fast);
        assert!(matches!(msg, ServerMessage::State { seq_acked: Some(2), .. }));
    }

    #[test]
    fn held_action_repeats_until_replaced() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = live(dir.path());
        let a = Action { throttle: 0.5, steering: 0.1, ..Action::zero() };
        s.offer_action(1, a);
        for _ in 0..5 {
            s.tick().unwrap();
            assert_eq!(s.sim().state().prev_action, a);
        }
    }

    #[test]
    fn pauses_after_input_timeout() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = live(dir.path());
        let a = Action { throttle: 0.3, ..Action::zero() };
        s.offer_action(1, a);
        let limit = s.config().timeout_ticks();
        for _ in 0..=limit {
            s.tick().unwrap();
        }
        let steps = s.sim().state().step;
        assert_eq!(steps as u64, limit + 1);
        let msg = s.tick().unwrap();
        assert!(matches!(msg, ServerMessage::State { paused: true, .. }));
        assert_eq!(s.sim().state().step, steps);
        s.offer_action(2, a);
        s.tick().unwrap();
        assert_eq!(s.sim().state().step, steps + 1);
    }

    #[test]
    fn recording_counts_ticks_and_matches_direct_accumulation() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = live(dir.path());
        s.record_start().unwrap();
        let mut seq = 0;
        let mut ticks = 0;
        while s.mode() == Mode::Recording {
            seq += 1;
            let a = scripted_expert(s.sim().state(), s.env());
            s.offer_action(seq, a);
            s.tick().unwrap();
            ticks += 1;
        }
        assert_eq!(s.status(), Status::Success);
        let outcome = s.record_stop(true).unwrap();
        assert_eq!(outcome, RecordOutcome::Saved { trajectories: 1, transitions: ticks });

        let saved = Dataset::load(&config(dir.path()).dataset).unwrap();
        let direct = record_scripted_episode(s.env(), 7, &RewardWeights::default()).unwrap();
        assert_eq!(saved.trajectories[0].transitions, direct.transitions);
        assert_eq!(saved.trajectories[0].terminal, direct.terminal);
    }

    #[test]
    fn empty_recording_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = live(dir.path());
        s.record_start().unwrap();
        assert!(matches!(s.record_stop(true), Err(Error::Empty(_))));
        assert!(!config(dir.path()).dataset.exists());
    }

    #[test]
    fn discard_leaves_dataset_untouched() {
        let dir = tempfile::tempdir().unwrap();
        let path = config(dir.path()).dataset;
        let ds = dolly_core::demos::record_scripted_dataset(
            &EpisodeConfig::default(),
            dolly_core::demos::Diversity::Low,
            1,
            3,
            &RewardWeights::default(),
            true,
        )
        .unwrap();
        ds.save(&path).unwrap();
        let before = std::fs::read(&path).unwrap();
        let mut s = live(dir.path());
        s.record_start().unwrap();
        s.offer_action(1, Action { throttle: 0.5, ..Action::zero() });
        for _ in 0..5 {
            s.tick().unwrap();
        }
        assert_eq!(s.record_stop(false).unwrap(), RecordOutcome::Discarded { transitions: 5 });
        assert_eq!(std::fs::read(&path).unwrap(), before);
    }

    #[test]
    fn unfinished_recording_fails_validation() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = live(dir.path());
        s.record_start().unwrap();
        s.offer_action(1, Action { throttle: 0.2, ..Action::zero() });
        for _ in 0..3 {
            s.tick().unwrap();
        }
        assert!(s.record_stop(true).is_err());
        assert!(!config(dir.path()).dataset.exists());
    }

    #[test]
    fn replay_reproduces_recorded_observations() {
        let dir = tempfile::tempdir().unwrap();
        let env = EpisodeConfig {
            start: Start::Preset(StartPosition::P2),
            ..EpisodeConfig::default()
        };
        let traj = record_scripted_episode(&env, 11, &RewardWeights::default()).unwrap();
        let mut s = live(dir.path());
        s.start_replay(&traj).unwrap();
        let mut n = 0;
        while s.mode() == Mode::Replay {
            s.tick().unwrap();
            n += 1;
        }
        assert_eq!(n, traj.len());
        assert_eq!(s.sim().observation().as_slice(), traj.transitions.last().unwrap().next_observation.as_slice());
    }

    #[test]
    fn terminal_episode_goes_idle() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = live(dir.path());
        let mut seq = 0;
        while s.mode() == Mode::Live {
            seq += 1;
            s.offer_action(seq, scripted_expert(s.sim().state(), s.env()));
            s.tick().unwrap();
        }
        assert_eq!(s.mode(), Mode::Idle);
        let t = s.tick_count();
        let msg = s.tick().unwrap();
        assert_eq!(s.tick_count(), t);
        assert!(matches!(msg, ServerMessage::State { done: true, .. }));
    }
}
