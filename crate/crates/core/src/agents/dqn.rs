//! Deep Q-learning: epsilon-greedy acting over the 8 discrete moves, one-step
//! TD targets against a periodically synced target network.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{batch_to_tensor, discounted_return, obs_to_tensor, AgentError, EpisodeRecord, ReplayBuffer, RlEnv, Transition, TrainingLog};
use crate::env::{Action, ActionDiscrete, N_DISCRETE_ACTIONS};
use crate::nn::{adam_step, AdamConfig, AdamState, Network, Tensor};
use crate::render::ObsImage;
use crate::rng::SeedSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub gamma: f64,
    pub lr: f64,
    pub buffer_capacity: usize,
    pub batch: usize,
    /// Target network copy interval, in environment steps.
    pub target_sync_every: u64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_steps: u64,
    pub total_steps: u64,
    /// Gradient update interval, in environment steps.
    pub update_every: u64,
    /// Minimum buffered transitions before updates begin.
    pub learn_start: usize,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lr: 1e-4,
            buffer_capacity: 50_000,
            batch: 64,
            target_sync_every: 1_000,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_steps: 50_000,
            total_steps: 200_000,
            update_every: 4,
            learn_start: 1_000,
        }
    }
}

/// Linear epsilon schedule from `eps_start` to `eps_end`.
pub fn epsilon_at(cfg: &DqnConfig, step: u64) -> f64 {
    if cfg.eps_decay_steps == 0 || step >= cfg.eps_decay_steps {
        return cfg.eps_end;
    }
    let frac = step as f64 / cfg.eps_decay_steps as f64;
    cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac
}

/// Greedy action over the Q head (ties to the lowest id), or a uniform
/// random action with probability `epsilon`.
pub fn dqn_act(
    net: &Network<f32>,
    obs: &ObsImage,
    epsilon: f64,
    rng: &mut ChaCha8Rng,
) -> ActionDiscrete {
    let coin: f64 = rng.random();
    if coin < epsilon {
        return ActionDiscrete::new(rng.random_range(0..N_DISCRETE_ACTIONS));
    }
    let q = net.forward(&obs_to_tensor(obs)).expect("observation matches net input");
    greedy(q.data())
}

pub(crate) fn greedy(q: &[f32]) -> ActionDiscrete {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate() {
        if v > q[best] {
            best = i;
        }
    }
    ActionDiscrete::new(best)
}

/// One-step TD targets `y = r + gamma * (1 - done) * max_a Q_target(s', a)`.
pub fn td_targets(rewards: &[f32], dones: &[bool], next_q_max: &[f32], gamma: f64) -> Vec<f32> {
    rewards
        .iter()
        .zip(dones)
        .zip(next_q_max)
        .map(|((&r, &d), &q)| if d { r } else { r + gamma as f32 * q })
        .collect()
}

fn check_params_finite(net: &Network<f32>, step: u64) -> Result<(), AgentError> {
    for p in net.params() {
        if !p.all_finite() {
            return Err(AgentError::NanParams { step });
        }
    }
    Ok(())
}

/// Train `net` on `env` with the standard DQN loop; returns the trained
/// network and the per-episode log. Fully deterministic in `(seed, phase)`.
pub fn dqn_train<E: RlEnv>(
    env: &mut E,
    mut net: Network<f32>,
    cfg: &DqnConfig,
    seed: &SeedSpec,
    phase: &str,
    mut on_episode: impl FnMut(&EpisodeRecord),
) -> Result<(Network<f32>, TrainingLog), AgentError> {
    let mut act_rng = seed.stream(&format!("{phase}/dqn-act"), 0);
    let mut sample_rng = seed.stream(&format!("{phase}/dqn-sample"), 0);
    let mut target = net.clone();
    let mut opt = AdamState::new(AdamConfig::with_lr(cfg.lr), &net.params());
    let mut replay = ReplayBuffer::new(cfg.buffer_capacity);
    let mut log = TrainingLog::default();

    let mut obs = env.reset();
    let mut ep_rewards: Vec<f64> = Vec::new();
    let mut episode = 0u32;
    let mut loss_sum = 0.0;
    let mut loss_count = 0u32;
    let min_fill = cfg.learn_start.max(cfg.batch);

    for step in 0..cfg.total_steps {
        let eps = epsilon_at(cfg, step);
        let action = dqn_act(&net, &obs, eps, &mut act_rng);
        let sr = env.step(Action::Discrete(action))?;
        replay.push(Transition {
            obs,
            action: action.id(),
            reward: sr.reward as f32,
            next_obs: sr.obs.clone(),
            done: sr.done,
        });
        ep_rewards.push(sr.reward);

        if replay.len() >= min_fill && (step + 1) % cfg.update_every == 0 {
            let batch = replay.sample(cfg.batch, &mut sample_rng);
            let obs_t = batch_to_tensor(&batch.iter().map(|t| t.obs.clone()).collect::<Vec<_>>());
            let next_t =
                batch_to_tensor(&batch.iter().map(|t| t.next_obs.clone()).collect::<Vec<_>>());
            let next_q = target.forward(&next_t)?;
            let next_max: Vec<f32> = next_q
                .data()
                .chunks_exact(N_DISCRETE_ACTIONS)
                .map(|row| row.iter().copied().fold(f32::NEG_INFINITY, f32::max))
                .collect();
            let rewards: Vec<f32> = batch.iter().map(|t| t.reward).collect();
            let dones: Vec<bool> = batch.iter().map(|t| t.done).collect();
            let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
            let y = td_targets(&rewards, &dones, &next_max, cfg.gamma);

            let (cache, q) = net.forward_cached(&obs_t)?;
            let b = cfg.batch as f32;
            let mut dy = Tensor::zeros(&[cfg.batch, N_DISCRETE_ACTIONS]);
            let mut loss = 0.0f64;
            for i in 0..cfg.batch {
                let qa = q.data()[i * N_DISCRETE_ACTIONS + actions[i]];
                let err = qa - y[i];
                loss += (err * err) as f64;
                dy.data_mut()[i * N_DISCRETE_ACTIONS + actions[i]] = 2.0 * err / b;
            }
            loss /= cfg.batch as f64;
            if !loss.is_finite() {
                return Err(AgentError::NanLoss { step, loss });
            }
            let grads = net.backward(&cache, &dy)?;
            adam_step(&mut net.params_mut(), &grads, &mut opt)?;
            check_params_finite(&net, step)?;
            loss_sum += loss;
            loss_count += 1;
        }

        if (step + 1) % cfg.target_sync_every == 0 {
            target = net.clone();
        }

        if sr.done {
            let record = EpisodeRecord {
                step: step + 1,
                episode,
                ret: discounted_return(&ep_rewards, cfg.gamma),
                success: sr.info.success,
                exploration: eps,
                loss: if loss_count > 0 { loss_sum / loss_count as f64 } else { 0.0 },
            };
            on_episode(&record);
            log.records.push(record);
            episode += 1;
            ep_rewards.clear();
            loss_sum = 0.0;
            loss_count = 0;
            obs = env.reset();
        } else {
            obs = sr.obs;
        }
    }
    Ok((net, log))
}
