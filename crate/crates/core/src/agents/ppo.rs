//! Proximal policy optimization with a clipped surrogate objective over a
//! diagonal Gaussian policy, a value head on the same trunk, and GAE.
//!
//! Head layout (5 outputs): `[mean_x, mean_y, log_std_x, log_std_y, value]`.
//! Actions are sampled pre-clamp; the environment clamp is treated as
//! actuator saturation, so log-probabilities refer to the raw sample.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{batch_to_tensor, discounted_return, gae, obs_to_tensor, AgentError, EpisodeRecord, RlEnv, TrainingLog};
use crate::env::{Action, ActionContinuous};
use crate::nn::{adam_step, AdamConfig, AdamState, Network, Tensor};
use crate::render::ObsImage;
use crate::rng::SeedSpec;

pub const PPO_HEAD_DIM: usize = 5;
const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub lr: f64,
    pub rollout_len: usize,
    pub epochs: usize,
    pub minibatch: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub total_steps: u64,
    pub normalize_advantage: bool,
    pub log_std_min: f64,
    pub log_std_max: f64,
    /// Initial policy standard deviation, mm.
    pub init_std_mm: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            lr: 3e-4,
            rollout_len: 2048,
            epochs: 10,
            minibatch: 64,
            value_coef: 0.5,
            entropy_coef: 0.01,
            total_steps: 200_000,
            normalize_advantage: true,
            log_std_min: -4.0,
            log_std_max: 2.0,
            init_std_mm: 2.5,
        }
    }
}

/// Set the log-std head bias so the initial policy std is `init_std_mm`.
pub fn init_policy_head(net: &mut Network<f32>, cfg: &PpoConfig) {
    let ln_std = cfg.init_std_mm.ln() as f32;
    let mut params = net.params_mut();
    let head_bias = params.last_mut().expect("net has parameters");
    assert_eq!(head_bias.len(), PPO_HEAD_DIM, "policy head must be the last layer");
    head_bias.data_mut()[2] = ln_std;
    head_bias.data_mut()[3] = ln_std;
}

#[derive(Debug, Clone, Copy)]
pub struct PpoSample {
    /// Pre-clamp Gaussian sample, mm.
    pub raw: [f64; 2],
    pub action: ActionContinuous,
    pub log_prob: f64,
    pub value: f64,
    pub entropy: f64,
}

fn head_split(row: &[f32], cfg: &PpoConfig) -> ([f64; 2], [f64; 2], f64) {
    let mean = [row[0] as f64, row[1] as f64];
    let log_std = [
        (row[2] as f64).clamp(cfg.log_std_min, cfg.log_std_max),
        (row[3] as f64).clamp(cfg.log_std_min, cfg.log_std_max),
    ];
    (mean, log_std, row[4] as f64)
}

fn gaussian_log_prob(raw: &[f64; 2], mean: &[f64; 2], log_std: &[f64; 2]) -> f64 {
    let mut lp = 0.0;
    for k in 0..2 {
        let std = log_std[k].exp();
        let z = (raw[k] - mean[k]) / std;
        lp += -0.5 * z * z - log_std[k] - 0.5 * LN_2PI;
    }
    lp
}

/// Entropy of the diagonal Gaussian: `ln(2*pi*e) + s_x + s_y`.
fn gaussian_entropy(log_std: &[f64; 2]) -> f64 {
    1.0 + LN_2PI + log_std[0] + log_std[1]
}

/// Sample an action from the policy head; the clamp to [-5, +5] mm happens
/// in [`ActionContinuous`], log-probabilities are pre-clamp.
pub fn ppo_act(
    net: &Network<f32>,
    obs: &ObsImage,
    cfg: &PpoConfig,
    rng: &mut ChaCha8Rng,
) -> PpoSample {
    let out = net.forward(&obs_to_tensor(obs)).expect("observation matches net input");
    let (mean, log_std, value) = head_split(out.data(), cfg);
    let mut raw = [0.0; 2];
    for k in 0..2 {
        let z: f64 = rng.sample(StandardNormal);
        raw[k] = mean[k] + log_std[k].exp() * z;
    }
    PpoSample {
        raw,
        action: ActionContinuous::new(raw[0], raw[1]),
        log_prob: gaussian_log_prob(&raw, &mean, &log_std),
        value,
        entropy: gaussian_entropy(&log_std),
    }
}

/// The clipped PPO objective for one sample:
/// `min(ratio * adv, clamp(ratio, 1-clip, 1+clip) * adv)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * advantage;
    (ratio * advantage).min(clipped)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub total_loss: f64,
}

/// Loss and analytic gradient of the PPO objective with respect to the raw
/// network outputs of one minibatch (`outputs` is `B x 5`, row-major).
///
/// Total loss: `-mean(surrogate) + value_coef * mean((v - ret)^2)
/// - entropy_coef * mean(entropy)`.
pub fn surrogate_grad(
    outputs: &[f64],
    raw_actions: &[[f64; 2]],
    old_log_probs: &[f64],
    advantages: &[f64],
    returns: &[f64],
    cfg: &PpoConfig,
) -> (PpoStats, Vec<f64>) {
    let b = raw_actions.len();
    assert_eq!(outputs.len(), b * PPO_HEAD_DIM);
    let bf = b as f64;
    let mut grad = vec![0.0; outputs.len()];
    let mut stats = PpoStats::default();
    for i in 0..b {
        let row = &outputs[i * PPO_HEAD_DIM..(i + 1) * PPO_HEAD_DIM];
        let mean = [row[0], row[1]];
        let log_std_raw = [row[2], row[3]];
        let log_std = [
            log_std_raw[0].clamp(cfg.log_std_min, cfg.log_std_max),
            log_std_raw[1].clamp(cfg.log_std_min, cfg.log_std_max),
        ];
        let value = row[4];
        let adv = advantages[i];
        let lp = gaussian_log_prob(&raw_actions[i], &mean, &log_std);
        let ratio = (lp - old_log_probs[i]).clamp(-30.0, 30.0).exp();
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * adv;
        let surr = unclipped.min(clipped);
        stats.policy_loss += -surr / bf;
        if (ratio - 1.0).abs() > cfg.clip {
            stats.clip_fraction += 1.0 / bf;
        }
        // the min passes gradient through the ratio only on the unclipped
        // branch; inside the clip interval both branches coincide
        let dl_dratio = if unclipped <= clipped { -adv / bf } else { 0.0 };

        let ent = gaussian_entropy(&log_std);
        stats.entropy += ent / bf;

        let verr = value - returns[i];
        stats.value_loss += verr * verr / bf;
        grad[i * PPO_HEAD_DIM + 4] = 2.0 * cfg.value_coef * verr / bf;

        for k in 0..2 {
            let std = log_std[k].exp();
            let diff = raw_actions[i][k] - mean[k];
            let dlp_dmean = diff / (std * std);
            let dlp_dlogstd = diff * diff / (std * std) - 1.0;
            let in_bounds =
                log_std_raw[k] > cfg.log_std_min && log_std_raw[k] < cfg.log_std_max;
            grad[i * PPO_HEAD_DIM + k] = dl_dratio * ratio * dlp_dmean;
            if in_bounds {
                grad[i * PPO_HEAD_DIM + 2 + k] =
                    dl_dratio * ratio * dlp_dlogstd - cfg.entropy_coef / bf;
            }
        }
    }
    stats.total_loss =
        stats.policy_loss + cfg.value_coef * stats.value_loss - cfg.entropy_coef * stats.entropy;
    (stats, grad)
}

/// One collected on-policy segment.
#[derive(Debug, Clone, Default)]
pub struct Rollout {
    pub obs: Vec<Arc<ObsImage>>,
    pub raw_actions: Vec<[f64; 2]>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub bootstrap_value: f64,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// A minibatch view used by the update.
pub struct PpoBatch<'a> {
    pub rollout: &'a Rollout,
    pub advantages: &'a [f64],
    pub returns: &'a [f64],
}

fn fisher_yates(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

/// Clipped-surrogate update over the rollout: `epochs` passes of shuffled
/// minibatches, advantages normalized per minibatch when configured.
pub fn ppo_update(
    net: &mut Network<f32>,
    opt: &mut AdamState<f32>,
    rollout: &Rollout,
    cfg: &PpoConfig,
    rng: &mut ChaCha8Rng,
    step_for_diag: u64,
) -> Result<PpoStats, AgentError> {
    let n = rollout.len();
    if n == 0 {
        return Err(AgentError::Invalid("empty rollout".into()));
    }
    let (advantages, returns) = gae(
        &rollout.rewards,
        &rollout.values,
        &rollout.dones,
        rollout.bootstrap_value,
        cfg.gamma,
        cfg.gae_lambda,
    )?;
    let mut agg = PpoStats::default();
    let mut batches = 0u32;
    for _epoch in 0..cfg.epochs {
        let order = fisher_yates(n, rng);
        for chunk in order.chunks(cfg.minibatch.max(1)) {
            let obs: Vec<Arc<ObsImage>> =
                chunk.iter().map(|&i| Arc::clone(&rollout.obs[i])).collect();
            let obs_t = batch_to_tensor(&obs);
            let (cache, out) = net.forward_cached(&obs_t)?;
            let outputs: Vec<f64> = out.data().iter().map(|&v| v as f64).collect();
            let raw: Vec<[f64; 2]> = chunk.iter().map(|&i| rollout.raw_actions[i]).collect();
            let old_lp: Vec<f64> = chunk.iter().map(|&i| rollout.log_probs[i]).collect();
            let rets: Vec<f64> = chunk.iter().map(|&i| returns[i]).collect();
            let mut advs: Vec<f64> = chunk.iter().map(|&i| advantages[i]).collect();
            if cfg.normalize_advantage {
                let mean = advs.iter().sum::<f64>() / advs.len() as f64;
                let var =
                    advs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / advs.len() as f64;
                let std = var.sqrt().max(1e-8);
                for a in &mut advs {
                    *a = (*a - mean) / std;
                }
            }
            let (stats, grad) = surrogate_grad(&outputs, &raw, &old_lp, &advs, &rets, cfg);
            if !stats.total_loss.is_finite() {
                return Err(AgentError::NanLoss { step: step_for_diag, loss: stats.total_loss });
            }
            let dy = Tensor::from_vec(
                &[chunk.len(), PPO_HEAD_DIM],
                grad.iter().map(|&g| g as f32).collect(),
            )?;
            let grads = net.backward(&cache, &dy)?;
            adam_step(&mut net.params_mut(), &grads, opt)?;
            for p in net.params() {
                if !p.all_finite() {
                    return Err(AgentError::NanParams { step: step_for_diag });
                }
            }
            agg.policy_loss += stats.policy_loss;
            agg.value_loss += stats.value_loss;
            agg.entropy += stats.entropy;
            agg.clip_fraction += stats.clip_fraction;
            agg.total_loss += stats.total_loss;
            batches += 1;
        }
    }
    let b = batches.max(1) as f64;
    agg.policy_loss /= b;
    agg.value_loss /= b;
    agg.entropy /= b;
    agg.clip_fraction /= b;
    agg.total_loss /= b;
    Ok(agg)
}

/// On-policy training: collect `rollout_len` steps, update, repeat until
/// `total_steps`. Deterministic in `(seed, phase)`.
pub fn ppo_train<E: RlEnv>(
    env: &mut E,
    mut net: Network<f32>,
    cfg: &PpoConfig,
    seed: &SeedSpec,
    phase: &str,
    mut on_episode: impl FnMut(&EpisodeRecord),
) -> Result<(Network<f32>, TrainingLog), AgentError> {
    let mut act_rng = seed.stream(&format!("{phase}/ppo-act"), 0);
    let mut shuffle_rng = seed.stream(&format!("{phase}/ppo-shuffle"), 0);
    let mut opt = AdamState::new(AdamConfig::with_lr(cfg.lr), &net.params());
    let mut log = TrainingLog::default();

    let mut obs = env.reset();
    let mut ep_rewards: Vec<f64> = Vec::new();
    let mut ep_entropy = 0.0f64;
    let mut episode = 0u32;
    let mut last_loss = 0.0f64;
    let mut steps = 0u64;

    while steps < cfg.total_steps {
        let mut rollout = Rollout::default();
        let len = cfg.rollout_len.min((cfg.total_steps - steps) as usize).max(1);
        for _ in 0..len {
            let sample = ppo_act(&net, &obs, cfg, &mut act_rng);
            let sr = env.step(Action::Continuous(sample.action))?;
            rollout.obs.push(Arc::clone(&obs));
            rollout.raw_actions.push(sample.raw);
            rollout.log_probs.push(sample.log_prob);
            rollout.values.push(sample.value);
            rollout.rewards.push(sr.reward);
            rollout.dones.push(sr.done);
            ep_rewards.push(sr.reward);
            ep_entropy += sample.entropy;
            steps += 1;
            if sr.done {
                let record = EpisodeRecord {
                    step: steps,
                    episode,
                    ret: discounted_return(&ep_rewards, cfg.gamma),
                    success: sr.info.success,
                    exploration: ep_entropy / ep_rewards.len() as f64,
                    loss: last_loss,
                };
                on_episode(&record);
                log.records.push(record);
                episode += 1;
                ep_rewards.clear();
                ep_entropy = 0.0;
                obs = env.reset();
            } else {
                obs = sr.obs;
            }
        }
        let out = net.forward(&obs_to_tensor(&obs))?;
        let (_, _, bootstrap) = head_split(out.data(), cfg);
        rollout.bootstrap_value = bootstrap;
        let stats = ppo_update(&mut net, &mut opt, &rollout, cfg, &mut shuffle_rng, steps)?;
        last_loss = stats.total_loss;
    }
    Ok((net, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::NetSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn policy_net(head: &[f32]) -> Network<f32> {
        let spec = NetSpec::dense_net([1, 1, 3], 4, PPO_HEAD_DIM);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Network::<f32>::init(spec, &mut rng).unwrap();
        for p in net.params_mut() {
            for v in p.data_mut() {
                *v = 0.0;
            }
        }
        let mut params = net.params_mut();
        params.last_mut().unwrap().data_mut().copy_from_slice(head);
        net
    }

    fn tiny_obs() -> ObsImage {
        ObsImage { width: 1, height: 1, pixels: vec![0.2, 0.4, 0.6] }
    }

    #[test]
    fn vanishing_std_gives_clamped_mean() {
        let net = policy_net(&[1.25, -0.5, -40.0, -40.0, 0.0]);
        let cfg = PpoConfig { log_std_min: -35.0, ..PpoConfig::default() };
        let mut rng = SeedSpec::new(1).stream("act", 0);
        let s = ppo_act(&net, &tiny_obs(), &cfg, &mut rng);
        assert!((s.action.offset().x - 1.25).abs() < 1e-9);
        assert!((s.action.offset().y + 0.5).abs() < 1e-9);
    }

    #[test]
    fn large_mean_saturates_at_five() {
        let net = policy_net(&[10.0, 0.0, -40.0, -40.0, 0.0]);
        let cfg = PpoConfig { log_std_min: -35.0, ..PpoConfig::default() };
        let mut rng = SeedSpec::new(2).stream("act", 0);
        let s = ppo_act(&net, &tiny_obs(), &cfg, &mut rng);
        assert_eq!(s.action.offset().x, 5.0);
        assert!(s.raw[0] > 5.0, "raw sample is pre-clamp");
    }

    #[test]
    fn sampling_is_deterministic_per_stream() {
        let net = policy_net(&[0.5, 0.5, 0.0, 0.0, 0.3]);
        let cfg = PpoConfig::default();
        let a = ppo_act(&net, &tiny_obs(), &cfg, &mut SeedSpec::new(5).stream("act", 3));
        let b = ppo_act(&net, &tiny_obs(), &cfg, &mut SeedSpec::new(5).stream("act", 3));
        assert_eq!(a.raw, b.raw);
        assert_eq!(a.log_prob, b.log_prob);
    }

    #[test]
    fn clipped_surrogate_branches() {
        // ratio 1: unclipped path equals plain policy-gradient weighting
        assert_eq!(clipped_surrogate(1.0, 2.0, 0.2), 2.0);
        // positive advantage, ratio beyond 1+clip: clipped flat branch
        assert_eq!(clipped_surrogate(1.4, 2.0, 0.2), 1.2 * 2.0);
        // negative advantage, ratio below 1-clip: clipped flat branch
        assert_eq!(clipped_surrogate(0.5, -1.0, 0.2), -0.8);
        // hand case: ratio 1.1, adv 0.7 -> min(0.77, 0.77) = 0.77
        assert!((clipped_surrogate(1.1, 0.7, 0.2) - 0.77).abs() < 1e-12);
    }

    #[test]
    fn single_transition_loss_matches_hand_computation() {
        // one sample, no normalization: mean 0, log-std 0 (std 1), value 0.5,
        // action (0.3, -0.2), old log-prob equal to the new one (ratio 1)
        let outputs = [0.0, 0.0, 0.0, 0.0, 0.5];
        let raw = [[0.3, -0.2]];
        let lp = gaussian_log_prob(&raw[0], &[0.0, 0.0], &[0.0, 0.0]);
        let cfg = PpoConfig { normalize_advantage: false, ..PpoConfig::default() };
        let (stats, _) = surrogate_grad(&outputs, &raw, &[lp], &[0.8], &[1.5], &cfg);
        // surrogate = min(1*0.8, 1*0.8) = 0.8; value loss = (0.5-1.5)^2 = 1
        // entropy = 1 + ln(2pi) + 0 + 0
        let ent = 1.0 + LN_2PI;
        let expect = -0.8 + 0.5 * 1.0 - 0.01 * ent;
        assert!((stats.total_loss - expect).abs() < 1e-10, "{} vs {expect}", stats.total_loss);
    }

    #[test]
    fn surrogate_grad_matches_finite_differences() {
        let cfg = PpoConfig { normalize_advantage: false, ..PpoConfig::default() };
        let outputs = vec![
            0.31, -0.22, -0.41, 0.25, 0.77, // ratio near 1
            1.6, 0.4, 0.1, -0.8, -0.3, // larger mean error
            -0.9, 0.05, -1.2, 0.6, 1.9, // value off
        ];
        let raw = [[0.5, 0.1], [1.0, -0.4], [-0.2, 0.9]];
        let old_lp = [-2.1, -2.6, -3.0];
        let adv = [0.9, -1.4, 0.3];
        let ret = [0.5, -0.2, 1.0];
        let (_, grad) = surrogate_grad(&outputs, &raw, &old_lp, &adv, &ret, &cfg);
        let loss_of = |out: &[f64]| surrogate_grad(out, &raw, &old_lp, &adv, &ret, &cfg).0.total_loss;
        let h = 1e-7;
        for j in 0..outputs.len() {
            let mut plus = outputs.clone();
            plus[j] += h;
            let mut minus = outputs.clone();
            minus[j] -= h;
            let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
            let rel = (grad[j] - numeric).abs() / (grad[j].abs() + numeric.abs()).max(1e-6);
            assert!(rel < 1e-4, "coord {j}: analytic {} vs numeric {numeric}", grad[j]);
        }
    }

    #[test]
    fn clipped_branch_kills_the_ratio_gradient() {
        // adv > 0 and ratio far above 1+clip: derivative wrt mean must vanish
        let cfg = PpoConfig { normalize_advantage: false, entropy_coef: 0.0, ..PpoConfig::default() };
        // mean shifted so ratio >> 1+clip: lp_new much larger than lp_old
        let outputs = [0.5, 0.0, 0.0, 0.0, 0.0];
        let raw = [[0.5, 0.0]];
        let old_lp = [gaussian_log_prob(&raw[0], &[-1.5, 0.0], &[0.0, 0.0])];
        let (_, grad) = surrogate_grad(&outputs, &raw, &old_lp, &[1.0], &[0.0], &cfg);
        assert_eq!(grad[0], 0.0);
        assert_eq!(grad[1], 0.0);
    }

    #[test]
    fn update_moves_mean_toward_positive_advantage_actions() {
        let spec = NetSpec::dense_net([1, 1, 3], 8, PPO_HEAD_DIM);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut net = Network::<f32>::init(spec, &mut rng).unwrap();
        let cfg = PpoConfig {
            epochs: 4,
            minibatch: 4,
            lr: 1e-2,
            normalize_advantage: false,
            ..PpoConfig::default()
        };
        init_policy_head(&mut net, &cfg);
        let mut opt = AdamState::new(AdamConfig::with_lr(cfg.lr), &net.params());
        let obs = Arc::new(tiny_obs());
        let mut shuffle = SeedSpec::new(0).stream("sh", 0);
        let before = net.forward(&obs_to_tensor(&obs)).unwrap().data()[0];
        // actions to the +x side were good, -x side bad
        let mut rollout = Rollout::default();
        let mut act_rng = SeedSpec::new(0).stream("a", 0);
        for i in 0..16 {
            let s = ppo_act(&net, &obs, &cfg, &mut act_rng);
            rollout.obs.push(Arc::clone(&obs));
            rollout.raw_actions.push(s.raw);
            rollout.log_probs.push(s.log_prob);
            rollout.values.push(s.value);
            rollout.rewards.push(if s.raw[0] > 0.0 { 1.0 } else { -1.0 });
            rollout.dones.push(true);
            let _ = i;
        }
        rollout.bootstrap_value = 0.0;
        ppo_update(&mut net, &mut opt, &rollout, &cfg, &mut shuffle, 0).unwrap();
        let after = net.forward(&obs_to_tensor(&obs)).unwrap().data()[0];
        assert!(after > before, "mean_x should increase: {before} -> {after}");
    }
}
