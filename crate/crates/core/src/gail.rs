//! Generative adversarial imitation.
//!
//! A discriminator `D(s, a)` learns to tell expert pairs (label 1) from agent
//! pairs (label 0) by binary cross-entropy. The policy is trained with PPO on
//! the surrogate reward `−ln(1 − D(s, a))`, clipped to `[0, reward_clip]`.
//! The handcrafted reward is never seen by the learner; it is only logged.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::demos::{sample_batch, Dataset, ExpertBatch};
use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, sigmoid, softplus, AdamState, Checkpoint, Discriminator, DEFAULT_HIDDEN};
use crate::ppo::{
    capped_env, curve_row, evaluate_policy, trainer_rngs, update_from_rollout, ActorCritic,
    CurveRow, GailCurveStats, PpoConfig, RolloutBuffer, RolloutCollector, TrainOutput,
};
use crate::rewards::RewardWeights;
use crate::sim::{EpisodeConfig, Sim, Task, OBS_DIM};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GailConfig {
    pub disc_lr: f64,
    /// Total pairs per discriminator step, split evenly between expert and agent.
    pub disc_batch: usize,
    /// Discriminator passes per generator iteration; each pass visits the
    /// latest rollout once in shuffled agent halves of `disc_batch / 2`.
    pub disc_updates_per_iter: usize,
    pub reward_clip: f64,
    /// Only 0 is supported.
    pub grad_penalty: f64,
    pub disc_hidden: Vec<usize>,
    /// Gradient-norm cap for the discriminator; 0 disables it.
    pub disc_max_grad_norm: f64,
    /// Bootstrap γ·V(s') at every episode end, not only at truncation.
    ///
    /// The surrogate reward is positive everywhere, so treating Success as a
    /// zero-value terminal would pay the generator to postpone it.
    pub terminal_bootstrap: bool,
}

impl Default for GailConfig {
    fn default() -> Self {
        GailConfig {
            disc_lr: 1e-4,
            disc_batch: 64,
            disc_updates_per_iter: 2,
            reward_clip: 10.0,
            grad_penalty: 0.0,
            disc_hidden: DEFAULT_HIDDEN.to_vec(),
            disc_max_grad_norm: 0.0,
            terminal_bootstrap: true,
        }
    }
}

impl GailConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.disc_lr.is_finite() && self.disc_lr > 0.0) {
            return Err(Error::Config("disc_lr must be positive".into()));
        }
        if self.disc_batch < 2 || !self.disc_batch.is_multiple_of(2) {
            return Err(Error::Config("disc_batch must be an even number of at least 2".into()));
        }
        if !(self.reward_clip.is_finite() && self.reward_clip > 0.0) {
            return Err(Error::Config("reward_clip must be positive".into()));
        }
        if self.grad_penalty != 0.0 {
            return Err(Error::Config("grad_penalty is not supported; set it to 0".into()));
        }
        if self.disc_hidden.contains(&0) {
            return Err(Error::Config("disc_hidden layer sizes must be positive".into()));
        }
        if !(self.disc_max_grad_norm.is_finite() && self.disc_max_grad_norm >= 0.0) {
            return Err(Error::Config("disc_max_grad_norm must be non-negative".into()));
        }
        Ok(())
    }
}

/// Mean binary cross-entropy, accuracy and parameter gradient of one discriminator batch.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscLoss {
    pub loss: f64,
    /// Fraction classified correctly at threshold 0.5.
    pub accuracy: f64,
    pub grads: Vec<f64>,
}

/// `−(1/N)·[Σ_expert ln D + Σ_agent ln(1 − D)]` over both halves, with its gradient.
pub fn discriminator_loss(disc: &Discriminator, expert: &ExpertBatch, agent: &ExpertBatch) -> Result<DiscLoss> {
    let n = expert.len() + agent.len();
    if n == 0 {
        return Err(Error::Empty("discriminator batch"));
    }
    let inv_n = 1.0 / n as f64;
    let mut grads = vec![0.0; disc.net.param_count()];
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (batch, label) in [(expert, true), (agent, false)] {
        for (obs, act) in batch.observations.iter().zip(&batch.actions) {
            let (out, cache) = disc.net.forward(&Discriminator::input(obs, act))?;
            let logit = out[0];
            // −ln σ(l) = softplus(−l);  −ln(1 − σ(l)) = softplus(l)
            let (l, g) = if label {
                (softplus(-logit), sigmoid(logit) - 1.0)
            } else {
                (softplus(logit), sigmoid(logit))
            };
            loss += l * inv_n;
            if (logit > 0.0) == label {
                correct += 1;
            }
            disc.net.backward_accumulate(&cache, &[g * inv_n], &mut grads)?;
        }
    }
    if !loss.is_finite() {
        return Err(Error::Divergence("discriminator loss is not finite".into()));
    }
    Ok(DiscLoss {
        loss,
        accuracy: correct as f64 * inv_n,
        grads,
    })
}

/// `−ln(1 − D(s, a)) = softplus(logit)`, clipped to `[0, clip]`.
pub fn surrogate_reward(disc: &Discriminator, obs: &[f64], action: &[f64], clip: f64) -> Result<f64> {
    Ok(softplus(disc.logit(obs, action)?).clamp(0.0, clip))
}

/// Replaces the buffer's training rewards with discriminator rewards; returns their mean.
pub fn relabel_rewards(disc: &Discriminator, buffer: &mut RolloutBuffer, clip: f64) -> Result<f64> {
    for i in 0..buffer.len() {
        buffer.rewards[i] = surrogate_reward(disc, buffer.observations[i].as_slice(), &buffer.actions[i], clip)?;
    }
    Ok(buffer.rewards.iter().sum::<f64>() / buffer.len().max(1) as f64)
}

/// Discriminator with its optimizer.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscTrainer {
    pub disc: Discriminator,
    pub adam: AdamState,
}

impl DiscTrainer {
    pub fn new<R: Rng + ?Sized>(act_dim: usize, cfg: &GailConfig, rng: &mut R) -> Result<Self> {
        let disc = Discriminator::new(OBS_DIM, act_dim, &cfg.disc_hidden, rng)?;
        Ok(DiscTrainer {
            adam: AdamState::new(disc.net.param_count(), cfg.disc_lr),
            disc,
        })
    }

    /// One Adam step on a balanced batch.
    pub fn step(&mut self, expert: &ExpertBatch, agent: &ExpertBatch, cfg: &GailConfig) -> Result<DiscLoss> {
        let mut l = discriminator_loss(&self.disc, expert, agent)?;
        let mut g = std::mem::take(&mut l.grads);
        clip_grad_norm(&mut g, cfg.disc_max_grad_norm);
        self.adam.step(self.disc.net.params_mut(), &g)?;
        l.grads = g;
        Ok(l)
    }
}

/// Agent pairs drawn uniformly from the latest rollout.
pub fn agent_batch<R: Rng + ?Sized>(buffer: &RolloutBuffer, size: usize, rng: &mut R) -> Result<ExpertBatch> {
    if buffer.is_empty() {
        return Err(Error::Empty("rollout"));
    }
    let mut b = ExpertBatch::default();
    for _ in 0..size {
        let i = rng.random_range(0..buffer.len());
        b.observations.push(buffer.observations[i].0.to_vec());
        b.actions.push(buffer.actions[i].clone());
    }
    Ok(b)
}

/// One shuffled pass over the rollout in chunks of `size` (a short final chunk is dropped
/// unless it is the only one).
pub fn agent_minibatches<R: Rng + ?Sized>(buffer: &RolloutBuffer, size: usize, rng: &mut R) -> Vec<ExpertBatch> {
    let mut idx: Vec<usize> = (0..buffer.len()).collect();
    idx.shuffle(rng);
    let mut chunks: Vec<&[usize]> = idx.chunks(size.max(1)).collect();
    if chunks.len() > 1 && chunks.last().is_some_and(|c| c.len() < size) {
        chunks.pop();
    }
    chunks
        .into_iter()
        .map(|c| ExpertBatch {
            observations: c.iter().map(|&i| buffer.observations[i].0.to_vec()).collect(),
            actions: c.iter().map(|&i| buffer.actions[i].clone()).collect(),
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct GailOutput {
    pub train: TrainOutput,
    pub discriminator: Discriminator,
}

impl GailOutput {
    pub fn checkpoint(&self, task: Task, seed: u64, metadata: serde_json::Value) -> Checkpoint {
        Checkpoint {
            discriminator: Some(self.discriminator.net.to_record()),
            ..self.train.actor_critic.checkpoint("gail", task, seed, metadata)
        }
    }
}

/// Trains a policy by adversarial imitation of `dataset`.
///
/// `weights` only score the logged learning curve and the final evaluation.
pub fn train_gail(
    dataset: &Dataset,
    env_cfg: &EpisodeConfig,
    weights: &RewardWeights,
    ppo_cfg: &PpoConfig,
    gail_cfg: &GailConfig,
    seed: u64,
) -> Result<GailOutput> {
    train_gail_with(dataset, env_cfg, weights, ppo_cfg, gail_cfg, seed, |_| {})
}

/// [`train_gail`] with a callback invoked after each curve row is produced.
pub fn train_gail_with(
    dataset: &Dataset,
    env_cfg: &EpisodeConfig,
    weights: &RewardWeights,
    ppo_cfg: &PpoConfig,
    gail_cfg: &GailConfig,
    seed: u64,
    mut on_row: impl FnMut(&CurveRow),
) -> Result<GailOutput> {
    ppo_cfg.validate()?;
    gail_cfg.validate()?;
    weights.validate()?;
    let env_cfg = capped_env(env_cfg, ppo_cfg);
    env_cfg.validate()?;
    if dataset.task != env_cfg.task {
        return Err(Error::TaskMismatch {
            expected: env_cfg.task.to_string(),
            found: dataset.task.to_string(),
        });
    }
    let expert_pairs = dataset.transition_count();
    if expert_pairs == 0 {
        return Err(Error::Empty("expert dataset"));
    }
    dataset.validate(false)?;

    let act_dim = env_cfg.task.action_dim();
    let (mut init_rng, mut sample_rng, mut shuffle_rng) = trainer_rngs(seed);
    let mut disc_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(3).wrapping_add(4));
    let mut ac = ActorCritic::new(act_dim, ppo_cfg, &mut init_rng)?;
    let mut dt = DiscTrainer::new(act_dim, gail_cfg, &mut init_rng)?;
    let half = gail_cfg.disc_batch / 2;
    let replace = expert_pairs < half;
    let mut curve = Vec::new();
    let mut updates = Vec::new();

    if ppo_cfg.total_timesteps > 0 {
        let mut collector = RolloutCollector::new(Sim::new(env_cfg.clone(), seed)?, *weights, seed)?;
        let mut steps = 0;
        while steps < ppo_cfg.total_timesteps {
            let n = ppo_cfg.rollout_len.min(ppo_cfg.total_timesteps - steps);
            let mut buffer = collector.collect(&ac, n, &mut sample_rng)?;
            steps += n;

            let mut last = None;
            for _ in 0..gail_cfg.disc_updates_per_iter {
                for agent in agent_minibatches(&buffer, half, &mut disc_rng) {
                    let expert = sample_batch(dataset, agent.len(), disc_rng.random(), replace)?;
                    last = Some(dt.step(&expert, &agent, gail_cfg)?);
                }
            }
            let mean_surrogate = relabel_rewards(&dt.disc, &mut buffer, gail_cfg.reward_clip)?;
            updates.push(update_from_rollout(&mut ac, &buffer, gail_cfg.terminal_bootstrap, ppo_cfg, &mut shuffle_rng)?);

            let fin = &collector.finished;
            let recent = &fin[fin.len().saturating_sub(ppo_cfg.curve_window)..];
            let mut row = curve_row(steps, seed, recent);
            row.gail = Some(GailCurveStats {
                disc_loss: last.as_ref().map_or(f64::NAN, |l| l.loss),
                disc_acc: last.as_ref().map_or(f64::NAN, |l| l.accuracy),
                mean_surrogate_reward: mean_surrogate,
            });
            on_row(&row);
            curve.push(row);
        }
    }
    let eval = evaluate_policy(&ac.policy, &env_cfg, weights, ppo_cfg.eval_episodes, seed)?;
    Ok(GailOutput {
        train: TrainOutput {
            actor_critic: ac,
            curve,
            eval,
            updates,
        },
        discriminator: dt.disc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demos::{record_scripted_dataset, Diversity};
    use crate::nn::Mlp;
    use crate::sim::Task;

    fn zero_final_layer(d: &mut Discriminator) {
        let sizes = d.net.sizes().to_vec();
        let last = sizes[sizes.len() - 2] * sizes[sizes.len() - 1] + sizes[sizes.len() - 1];
        let n = d.net.param_count();
        d.net.params_mut()[n - last..].iter_mut().for_each(|p| *p = 0.0);
    }

    fn batch(rows: &[([f64; 2], [f64; 1])]) -> ExpertBatch {
        ExpertBatch {
            observations: rows.iter().map(|r| r.0.to_vec()).collect(),
            actions: rows.iter().map(|r| r.1.to_vec()).collect(),
        }
    }

    fn toy_disc(seed: u64) -> Discriminator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Discriminator {
            net: Mlp::init(&[3, 8, 1], 1.0, &mut rng).unwrap(),
        }
    }

    #[test]
    fn initial_loss_is_ln2() {
        let mut d = toy_disc(0);
        zero_final_layer(&mut d);
        let e = batch(&[([1.0, 0.0], [0.5]), ([0.2, 0.3], [-0.1])]);
        let a = batch(&[([-1.0, 0.0], [0.1]), ([0.0, 2.0], [0.9])]);
        let l = discriminator_loss(&d, &e, &a).unwrap();
        assert!((l.loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((surrogate_reward(&d, &[0.0, 0.0], &[0.0], 10.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d = toy_disc(3);
        let e = batch(&[([1.0, 0.5], [0.5]), ([0.2, -0.3], [-0.1])]);
        let a = batch(&[([-1.0, 0.0], [0.1]), ([0.0, 0.7], [0.9]), ([0.3, 0.3], [0.0])]);
        let l = discriminator_loss(&d, &e, &a).unwrap();
        let h = 1e-6;
        for k in 0..d.net.param_count() {
            let mut p = d.clone();
            p.net.params_mut()[k] += h;
            let mut m = d.clone();
            m.net.params_mut()[k] -= h;
            let fd = (discriminator_loss(&p, &e, &a).unwrap().loss - discriminator_loss(&m, &e, &a).unwrap().loss)
                / (2.0 * h);
            assert!((fd - l.grads[k]).abs() < 1e-7 * (1.0 + fd.abs()), "param {k}: {fd} vs {}", l.grads[k]);
        }
    }

    #[test]
    fn separable_toy_is_learned() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = GailConfig {
            disc_lr: 1e-2,
            ..Default::default()
        };
        let mut t = DiscTrainer {
            disc: toy_disc(5),
            adam: AdamState::new(toy_disc(5).net.param_count(), cfg.disc_lr),
        };
        let draw = |rng: &mut ChaCha8Rng, sign: f64| {
            let rows: Vec<_> = (0..32)
                .map(|_| {
                    (
                        [sign * (0.5 + rng.random::<f64>()), rng.random::<f64>() - 0.5],
                        [rng.random::<f64>() - 0.5],
                    )
                })
                .collect();
            batch(&rows)
        };
        let mut last = f64::INFINITY;
        for _ in 0..500 {
            let e = draw(&mut rng, 1.0);
            let a = draw(&mut rng, -1.0);
            last = t.step(&e, &a, &cfg).unwrap().loss;
        }
        assert!(last < 0.1, "{last}");
    }

    #[test]
    fn rejects_unsupported_settings() {
        assert!(GailConfig {
            grad_penalty: 10.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(GailConfig {
            disc_batch: 63,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    fn tiny_ppo(total: usize) -> PpoConfig {
        PpoConfig {
            rollout_len: 64,
            minibatch: 16,
            epochs: 2,
            total_timesteps: total,
            eval_episodes: 2,
            hidden: vec![8],
            episode_cap: 60,
            ..Default::default()
        }
    }

    #[test]
    fn task_mismatch_is_rejected() {
        let base = EpisodeConfig::for_task(Task::Base);
        let ds = record_scripted_dataset(&base, Diversity::Low, 1, 0, &RewardWeights::default(), true).unwrap();
        let full = EpisodeConfig::for_task(Task::Full);
        let r = train_gail(&ds, &full, &RewardWeights::default(), &tiny_ppo(64), &GailConfig::default(), 0);
        assert!(matches!(r, Err(Error::TaskMismatch { .. })));
    }

    #[test]
    fn constant_discriminator_matches_ppo_on_constant_reward() {
        let env = EpisodeConfig::for_task(Task::Base);
        let ppo = tiny_ppo(64);
        let (mut init_rng, mut sample_rng, _) = trainer_rngs(7);
        let ac = ActorCritic::new(2, &ppo, &mut init_rng).unwrap();
        let mut collector =
            RolloutCollector::new(Sim::new(capped_env(&env, &ppo), 7).unwrap(), RewardWeights::default(), 7).unwrap();
        let buffer = collector.collect(&ac, 64, &mut sample_rng).unwrap();

        let mut d = Discriminator::new(OBS_DIM, 2, &[8], &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        zero_final_layer(&mut d);
        let mut gail_buf = buffer.clone();
        relabel_rewards(&d, &mut gail_buf, 10.0).unwrap();
        let mut ppo_buf = buffer.clone();
        ppo_buf.rewards.iter_mut().for_each(|r| *r = std::f64::consts::LN_2);

        let mut a = ac.clone();
        let mut b = ac.clone();
        update_from_rollout(&mut a, &gail_buf, false, &ppo, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        update_from_rollout(&mut b, &ppo_buf, false, &ppo, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        for (x, y) in a.policy.mean_net.params().iter().zip(b.policy.mean_net.params()) {
            assert!((x - y).abs() < 1e-12);
        }
        for (x, y) in a.value.params().iter().zip(b.value.params()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn short_run_logs_discriminator_columns() {
        let env = EpisodeConfig::for_task(Task::Base);
        let ds = record_scripted_dataset(&env, Diversity::Moderate, 3, 0, &RewardWeights::default(), true).unwrap();
        let out = train_gail(&ds, &env, &RewardWeights::default(), &tiny_ppo(128), &GailConfig::default(), 1).unwrap();
        assert_eq!(out.train.curve.len(), 2);
        let g = out.train.curve[1].gail.unwrap();
        assert!(g.disc_loss.is_finite() && g.mean_surrogate_reward > 0.0);
    }
}
