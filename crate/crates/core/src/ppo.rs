//! Proximal Policy Optimization with the clipped surrogate objective.
//!
//! ```text
//! repeat until total_timesteps:
//!   collect rollout_len steps with the stochastic policy
//!   advantages  <- GAE(γ, λ) over the rollout, normalized per rollout
//!   for each epoch, for each shuffled minibatch:
//!     ascend  min(r·Â, clip(r, 1−ε, 1+ε)·Â)   (policy)
//!     descend value_coef·(V − R)²             (value net)
//!     stop the update early once approx-KL exceeds target_kl
//! ```
//!
//! The same machinery drives the GAIL generator; see [`crate::gail`].

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, AdamState, Checkpoint, GaussianPolicy, Mlp, CHECKPOINT_VERSION, DEFAULT_HIDDEN};
use crate::rewards::{task_reward, RewardWeights};
use crate::sim::{Action, EpisodeConfig, Environment, Observation, Sim, Status, Task, OBS_DIM};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub clip_eps: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub rollout_len: usize,
    pub epochs: usize,
    pub minibatch: usize,
    pub lr: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub total_timesteps: usize,
    pub episode_cap: usize,
    pub seeds: usize,
    /// Stop the current update once a minibatch's approximate KL exceeds this.
    pub target_kl: f64,
    /// Global L2 clip applied separately to policy and value gradients; 0 disables.
    pub max_grad_norm: f64,
    pub eval_episodes: usize,
    pub hidden: Vec<usize>,
    /// Completed training episodes averaged into each learning-curve row.
    pub curve_window: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip_eps: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            rollout_len: 2048,
            epochs: 10,
            minibatch: 64,
            lr: 3e-4,
            value_coef: 0.5,
            entropy_coef: 0.0,
            total_timesteps: 1_000_000,
            episode_cap: 1500,
            seeds: 3,
            target_kl: 0.02,
            max_grad_norm: 0.5,
            eval_episodes: 100,
            hidden: DEFAULT_HIDDEN.to_vec(),
            curve_window: 20,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad("ppo.clip_eps must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("ppo.gamma and ppo.gae_lambda must lie in [0, 1]");
        }
        if self.rollout_len == 0 || self.minibatch == 0 || self.episode_cap == 0 {
            return bad("ppo.rollout_len, ppo.minibatch and ppo.episode_cap must be positive");
        }
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return bad("ppo.lr must be positive");
        }
        if self.value_coef < 0.0 || self.entropy_coef < 0.0 || self.max_grad_norm < 0.0 || self.target_kl < 0.0 {
            return bad("ppo coefficients must be non-negative");
        }
        if self.hidden.contains(&0) {
            return bad("ppo.hidden sizes must be positive");
        }
        Ok(())
    }
}

/// One rollout of agent experience.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RolloutBuffer {
    pub observations: Vec<Observation>,
    /// Squashed actions actually applied.
    pub actions: Vec<Vec<f64>>,
    /// Gaussian samples before squashing; log-probabilities are evaluated on these.
    pub pre_squash: Vec<Vec<f64>>,
    pub logprobs: Vec<f64>,
    /// Training reward (handcrafted for PPO, surrogate for GAIL).
    pub rewards: Vec<f64>,
    /// Handcrafted reward, always recorded for reporting.
    pub env_rewards: Vec<f64>,
    pub values: Vec<f64>,
    /// True terminal (Success or SubjectLost): no bootstrapping past this step.
    pub dones: Vec<bool>,
    /// V(s') of the final observation on every episode-ending step.
    pub final_values: Vec<Option<f64>>,
    /// Episode ended by the step cap rather than by Success or SubjectLost.
    pub truncated: Vec<bool>,
    /// Value of the state following the last step, for bootstrapping.
    pub bootstrap_value: f64,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    fn check(&self) -> Result<()> {
        let n = self.len();
        let lens = [
            self.actions.len(),
            self.pre_squash.len(),
            self.logprobs.len(),
            self.rewards.len(),
            self.env_rewards.len(),
            self.values.len(),
            self.dones.len(),
            self.final_values.len(),
            self.truncated.len(),
        ];
        if let Some(&bad) = lens.iter().find(|&&l| l != n) {
            return Err(Error::Dimension {
                expected: n,
                got: bad,
                context: "rollout buffer arrays",
            });
        }
        Ok(())
    }

    /// Rewards with γ·V(s') added on truncated steps, or on every
    /// episode-ending step when `bootstrap_terminals` is set.
    pub fn training_rewards(&self, gamma: f64, bootstrap_terminals: bool) -> Vec<f64> {
        self.rewards
            .iter()
            .zip(self.final_values.iter().zip(&self.truncated))
            .map(|(r, (fv, &trunc))| match fv {
                Some(v) if trunc || bootstrap_terminals => r + gamma * v,
                _ => *r,
            })
            .collect()
    }
}

/// Generalized advantage estimation.
///
/// `Â_t = Σ_k (γλ)^k δ_{t+k}` with `δ_t = r_t + γ·V(s_{t+1})·(1 − done_t) − V(s_t)`;
/// returns are `Â + V`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if n == 0 {
        return Err(Error::Empty("rollout buffer"));
    }
    if values.len() != n || dones.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: values.len().min(dones.len()),
            context: "gae inputs",
        });
    }
    let mut advantages = vec![0.0; n];
    let mut gae = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 == n { bootstrap_value } else { values[t + 1] };
        let nonterminal = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * nonterminal - values[t];
        gae = delta + gamma * lambda * nonterminal * gae;
        advantages[t] = gae;
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((advantages, returns))
}

/// `min(r·Â, clip(r, 1−ε, 1+ε)·Â)`.
pub fn clipped_objective(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

/// Zero-mean, unit-variance rescaling (population σ).
pub fn normalize_advantages(adv: &mut [f64]) {
    let n = adv.len() as f64;
    if adv.is_empty() {
        return;
    }
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in adv.iter_mut() {
        *a = (*a - mean) / (std + 1e-12);
    }
}

/// Policy, value network and their optimizers.
#[derive(Clone, Debug, PartialEq)]
pub struct ActorCritic {
    pub policy: GaussianPolicy,
    pub value: Mlp,
    pub policy_adam: AdamState,
    pub log_std_adam: AdamState,
    pub value_adam: AdamState,
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(act_dim: usize, cfg: &PpoConfig, rng: &mut R) -> Result<Self> {
        let policy = GaussianPolicy::new(OBS_DIM, act_dim, &cfg.hidden, rng)?;
        let mut sizes = vec![OBS_DIM];
        sizes.extend_from_slice(&cfg.hidden);
        sizes.push(1);
        let value = Mlp::init(&sizes, 1.0, rng)?;
        Ok(ActorCritic {
            policy_adam: AdamState::new(policy.mean_net.param_count(), cfg.lr),
            log_std_adam: AdamState::new(act_dim, cfg.lr),
            value_adam: AdamState::new(value.param_count(), cfg.lr),
            policy,
            value,
        })
    }

    pub fn value_of(&self, obs: &Observation) -> Result<f64> {
        Ok(self.value.predict(obs.as_slice())?[0])
    }

    /// Policy and value parameters as a checkpoint; optimizer state is dropped.
    pub fn checkpoint(&self, algo: &str, task: Task, seed: u64, metadata: serde_json::Value) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            algo: algo.to_string(),
            task,
            seed,
            policy: self.policy.to_record(),
            value: Some(self.value.to_record()),
            discriminator: None,
            metadata,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub entropy: f64,
    pub minibatches: usize,
    pub stopped_early: bool,
}

/// Runs `epochs` passes of minibatch Adam over a rollout.
///
/// `advantages` must already be normalized; `returns` are value targets.
pub fn ppo_update<R: Rng + ?Sized>(
    ac: &mut ActorCritic,
    buffer: &RolloutBuffer,
    advantages: &[f64],
    returns: &[f64],
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateStats> {
    buffer.check()?;
    let n = buffer.len();
    if n == 0 {
        return Err(Error::Empty("rollout buffer"));
    }
    if advantages.len() != n || returns.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: advantages.len().min(returns.len()),
            context: "advantages/returns",
        });
    }
    let act_dim = ac.policy.act_dim();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut stats = UpdateStats::default();
    let (mut sum_pl, mut sum_vl, mut sum_kl, mut sum_clip, mut count) = (0.0, 0.0, 0.0, 0.0, 0usize);

    let mut mean_grad = vec![0.0; ac.policy.mean_net.param_count()];
    let mut log_std_grad = vec![0.0; act_dim];
    let mut value_grad = vec![0.0; ac.value.param_count()];

    'epochs: for _ in 0..cfg.epochs {
        indices.shuffle(rng);
        for batch in indices.chunks(cfg.minibatch) {
            let m = batch.len() as f64;
            mean_grad.iter_mut().for_each(|g| *g = 0.0);
            log_std_grad.iter_mut().for_each(|g| *g = 0.0);
            value_grad.iter_mut().for_each(|g| *g = 0.0);
            let (mut pl, mut vl, mut kl, mut clipped) = (0.0, 0.0, 0.0, 0.0);

            for &i in batch {
                let obs = buffer.observations[i].as_slice();
                let adv = advantages[i];
                let pass = ac.policy.log_prob_forward(obs, &buffer.pre_squash[i])?;
                let log_ratio = pass.logprob - buffer.logprobs[i];
                let ratio = log_ratio.exp();
                pl -= clipped_objective(ratio, adv, cfg.clip_eps) / m;
                kl += ((ratio - 1.0) - log_ratio) / m;
                let clip_active = (adv > 0.0 && ratio > 1.0 + cfg.clip_eps)
                    || (adv < 0.0 && ratio < 1.0 - cfg.clip_eps);
                if (ratio - 1.0).abs() > cfg.clip_eps {
                    clipped += 1.0 / m;
                }
                if !clip_active && adv != 0.0 {
                    // d/dθ of −r·Â/m = −(r·Â/m)·∇logπ
                    ac.policy.log_prob_backward(
                        &pass,
                        -ratio * adv / m,
                        &mut mean_grad,
                        &mut log_std_grad,
                    )?;
                }

                let (v, cache) = ac.value.forward(obs)?;
                let err = v[0] - returns[i];
                vl += err * err / m;
                ac.value
                    .backward_accumulate(&cache, &[2.0 * cfg.value_coef * err / m], &mut value_grad)?;
            }

            if !(pl.is_finite() && vl.is_finite() && kl.is_finite()) {
                return Err(Error::Divergence(format!(
                    "non-finite PPO losses: policy {pl}, value {vl}, approx_kl {kl}"
                )));
            }
            if cfg.target_kl > 0.0 && kl > cfg.target_kl {
                stats.stopped_early = true;
                break 'epochs;
            }

            if cfg.entropy_coef > 0.0 {
                log_std_grad.iter_mut().for_each(|g| *g -= cfg.entropy_coef);
            }
            if cfg.max_grad_norm > 0.0 {
                let mut joint: Vec<f64> = mean_grad.iter().chain(&log_std_grad).copied().collect();
                clip_grad_norm(&mut joint, cfg.max_grad_norm);
                let (mg, lg) = joint.split_at(mean_grad.len());
                mean_grad.copy_from_slice(mg);
                log_std_grad.copy_from_slice(lg);
                clip_grad_norm(&mut value_grad, cfg.max_grad_norm);
            }
            ac.policy_adam.step(ac.policy.mean_net.params_mut(), &mean_grad)?;
            ac.log_std_adam.step(&mut ac.policy.log_std, &log_std_grad)?;
            ac.value_adam.step(ac.value.params_mut(), &value_grad)?;

            sum_pl += pl;
            sum_vl += vl;
            sum_kl += kl;
            sum_clip += clipped;
            count += 1;
        }
    }
    stats.minibatches = count;
    if count > 0 {
        let c = count as f64;
        stats.policy_loss = sum_pl / c;
        stats.value_loss = sum_vl / c;
        stats.approx_kl = sum_kl / c;
        stats.clip_fraction = sum_clip / c;
    }
    stats.entropy = ac.policy.gaussian_entropy();
    Ok(stats)
}

/// GAE over the buffer's training rewards, advantage normalization, then [`ppo_update`].
pub fn update_from_rollout<R: Rng + ?Sized>(
    ac: &mut ActorCritic,
    buffer: &RolloutBuffer,
    bootstrap_terminals: bool,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateStats> {
    let rewards = buffer.training_rewards(cfg.gamma, bootstrap_terminals);
    let (mut adv, ret) = compute_gae(
        &rewards,
        &buffer.values,
        &buffer.dones,
        buffer.bootstrap_value,
        cfg.gamma,
        cfg.gae_lambda,
    )?;
    normalize_advantages(&mut adv);
    ppo_update(ac, buffer, &adv, &ret, cfg, rng)
}

/// Summary of one finished episode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub reward: f64,
    pub length: usize,
    pub status: Status,
}

/// Steps an environment with the stochastic policy, resetting on episode end.
pub struct RolloutCollector<E: Environment> {
    env: E,
    obs: Observation,
    ep_reward: f64,
    ep_len: usize,
    weights: RewardWeights,
    seed_rng: ChaCha8Rng,
    pub finished: Vec<EpisodeStats>,
}

impl<E: Environment> RolloutCollector<E> {
    pub fn new(mut env: E, weights: RewardWeights, seed: u64) -> Result<Self> {
        let mut seed_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005E_ED0F_E915_0DE5);
        let obs = env.reset(seed_rng.random())?;
        Ok(RolloutCollector {
            env,
            obs,
            ep_reward: 0.0,
            ep_len: 0,
            weights,
            seed_rng,
            finished: Vec::new(),
        })
    }

    pub fn collect<R: Rng + ?Sized>(&mut self, ac: &ActorCritic, steps: usize, rng: &mut R) -> Result<RolloutBuffer> {
        let task = self.env.task();
        let mut buf = RolloutBuffer::default();
        for _ in 0..steps {
            let sample = ac.policy.sample(self.obs.as_slice(), rng)?;
            let value = ac.value_of(&self.obs)?;
            let action = Action::from_slice(task, &sample.action)?;
            let out = self.env.step(&action)?;
            let reward = task_reward(task, &out.deltas, &self.weights);
            self.ep_reward += reward;
            self.ep_len += 1;

            buf.observations.push(self.obs);
            buf.actions.push(sample.action);
            buf.pre_squash.push(sample.pre_squash);
            buf.logprobs.push(sample.logprob);
            buf.rewards.push(reward);
            buf.env_rewards.push(reward);
            buf.values.push(value);
            buf.truncated.push(out.status == Status::Truncated);
            match out.status {
                Status::Running => {
                    buf.dones.push(false);
                    buf.final_values.push(None);
                    self.obs = out.observation;
                }
                status => {
                    buf.dones.push(true);
                    buf.final_values.push(Some(ac.value_of(&out.observation)?));
                    self.finished.push(EpisodeStats {
                        reward: self.ep_reward,
                        length: self.ep_len,
                        status,
                    });
                    self.ep_reward = 0.0;
                    self.ep_len = 0;
                    self.obs = self.env.reset(self.seed_rng.random())?;
                }
            }
        }
        buf.bootstrap_value = ac.value_of(&self.obs)?;
        Ok(buf)
    }
}

/// One learning-curve row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub step: usize,
    pub seed: u64,
    pub mean_ep_reward: f64,
    pub std_ep_reward: f64,
    pub ep_len_mean: f64,
    pub success_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gail: Option<GailCurveStats>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GailCurveStats {
    pub disc_loss: f64,
    pub disc_acc: f64,
    pub mean_surrogate_reward: f64,
}

pub const CURVE_COLUMNS: &str = "step,seed,mean_ep_reward,std_ep_reward,ep_len_mean,success_rate";
pub const GAIL_CURVE_COLUMNS: &str = ",disc_loss,disc_acc,mean_surrogate_reward";

pub fn curve_row(step: usize, seed: u64, recent: &[EpisodeStats]) -> CurveRow {
    let (mean, std) = mean_std(recent.iter().map(|e| e.reward));
    let n = if recent.is_empty() { f64::NAN } else { recent.len() as f64 };
    CurveRow {
        step,
        seed,
        mean_ep_reward: mean,
        std_ep_reward: std,
        ep_len_mean: recent.iter().map(|e| e.length as f64).sum::<f64>() / n,
        success_rate: recent.iter().filter(|e| e.status == Status::Success).count() as f64 / n,
        gail: None,
    }
}

/// Population mean and standard deviation; NaN for an empty sequence.
pub fn mean_std(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Renders curve rows as CSV. `preamble` lines are written as `#` comments first.
pub fn curve_csv(rows: &[CurveRow], preamble: &[String]) -> String {
    let gail = rows.iter().any(|r| r.gail.is_some());
    let mut out = String::new();
    for line in preamble {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out.push_str(CURVE_COLUMNS);
    if gail {
        out.push_str(GAIL_CURVE_COLUMNS);
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}",
            r.step, r.seed, r.mean_ep_reward, r.std_ep_reward, r.ep_len_mean, r.success_rate
        ));
        if gail {
            let g = r.gail.unwrap_or(GailCurveStats {
                disc_loss: f64::NAN,
                disc_acc: f64::NAN,
                mean_surrogate_reward: f64::NAN,
            });
            out.push_str(&format!(",{},{},{}", g.disc_loss, g.disc_acc, g.mean_surrogate_reward));
        }
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub mean_reward: f64,
    pub std_reward: f64,
    pub success_rate: f64,
    pub mean_length: f64,
    pub returns: Vec<f64>,
}

/// Seed of the `i`-th deterministic evaluation episode for a training seed.
pub fn eval_seed(train_seed: u64, i: usize) -> u64 {
    0xE7A1_0000_0000u64 + train_seed * 100_003 + i as u64
}

/// Runs deterministic (squashed-mean) episodes and summarizes handcrafted returns.
pub fn evaluate_policy(
    policy: &GaussianPolicy,
    env_cfg: &EpisodeConfig,
    weights: &RewardWeights,
    episodes: usize,
    train_seed: u64,
) -> Result<EvalSummary> {
    let mut returns = Vec::with_capacity(episodes);
    let mut successes = 0;
    let mut total_len = 0;
    for i in 0..episodes {
        let mut sim = Sim::new(env_cfg.clone(), eval_seed(train_seed, i))?;
        let mut obs = sim.observation();
        let mut ret = 0.0;
        loop {
            let a = Action::from_slice(env_cfg.task, &policy.deterministic_action(obs.as_slice())?)?;
            let out = sim.step(&a)?;
            ret += task_reward(env_cfg.task, &out.deltas, weights);
            obs = out.observation;
            if out.status.is_terminal() {
                if out.status == Status::Success {
                    successes += 1;
                }
                total_len += out.state.step;
                break;
            }
        }
        returns.push(ret);
    }
    let (mean, std) = mean_std(returns.iter().copied());
    let n = episodes.max(1) as f64;
    Ok(EvalSummary {
        episodes,
        mean_reward: mean,
        std_reward: std,
        success_rate: successes as f64 / n,
        mean_length: total_len as f64 / n,
        returns,
    })
}

/// Output of a training run.
#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub actor_critic: ActorCritic,
    pub curve: Vec<CurveRow>,
    pub eval: EvalSummary,
    pub updates: Vec<UpdateStats>,
}

/// Environment config with the trainer's episode cap applied.
pub fn capped_env(env_cfg: &EpisodeConfig, cfg: &PpoConfig) -> EpisodeConfig {
    EpisodeConfig {
        max_steps: env_cfg.max_steps.min(cfg.episode_cap),
        ..env_cfg.clone()
    }
}

/// Derives the trainer's generators from a seed: (init, sampling, shuffling).
pub(crate) fn trainer_rngs(seed: u64) -> (ChaCha8Rng, ChaCha8Rng, ChaCha8Rng) {
    (
        ChaCha8Rng::seed_from_u64(seed.wrapping_mul(3).wrapping_add(1)),
        ChaCha8Rng::seed_from_u64(seed.wrapping_mul(3).wrapping_add(2)),
        ChaCha8Rng::seed_from_u64(seed.wrapping_mul(3).wrapping_add(3)),
    )
}

/// Trains a policy on the handcrafted reward.
pub fn train_ppo(
    env_cfg: &EpisodeConfig,
    weights: &RewardWeights,
    cfg: &PpoConfig,
    seed: u64,
) -> Result<TrainOutput> {
    train_ppo_with(env_cfg, weights, cfg, seed, |_| {})
}

/// [`train_ppo`] with a callback invoked after each curve row is produced.
pub fn train_ppo_with(
    env_cfg: &EpisodeConfig,
    weights: &RewardWeights,
    cfg: &PpoConfig,
    seed: u64,
    mut on_row: impl FnMut(&CurveRow),
) -> Result<TrainOutput> {
    cfg.validate()?;
    weights.validate()?;
    let env_cfg = capped_env(env_cfg, cfg);
    env_cfg.validate()?;
    let (mut init_rng, mut sample_rng, mut shuffle_rng) = trainer_rngs(seed);
    let mut ac = ActorCritic::new(env_cfg.task.action_dim(), cfg, &mut init_rng)?;
    let mut curve = Vec::new();
    let mut updates = Vec::new();

    if cfg.total_timesteps > 0 {
        let mut collector = RolloutCollector::new(Sim::new(env_cfg.clone(), seed)?, *weights, seed)?;
        let mut steps = 0;
        while steps < cfg.total_timesteps {
            let n = cfg.rollout_len.min(cfg.total_timesteps - steps);
            let buffer = collector.collect(&ac, n, &mut sample_rng)?;
            steps += n;
            updates.push(update_from_rollout(&mut ac, &buffer, false, cfg, &mut shuffle_rng)?);
            let fin = &collector.finished;
            let recent = &fin[fin.len().saturating_sub(cfg.curve_window)..];
            let row = curve_row(steps, seed, recent);
            on_row(&row);
            curve.push(row);
        }
    }
    let eval = evaluate_policy(&ac.policy, &env_cfg, weights, cfg.eval_episodes, seed)?;
    Ok(TrainOutput {
        actor_critic: ac,
        curve,
        eval,
        updates,
    })
}
