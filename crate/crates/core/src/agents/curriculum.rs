//! Offline-pretrain followed by real-world fine-tune with sparse reward.

use serde::{Deserialize, Serialize};

use super::{
    dqn_train, ppo::init_policy_head, ppo_train, Algo, AgentError, Checkpoint, DqnConfig,
    EpisodeRecord, PpoConfig, TrainingLog, PPO_HEAD_DIM,
};
use crate::env::InsertionEnv;
use crate::nn::{NetSpec, Network};
use crate::rng::SeedSpec;

use crate::env::N_DISCRETE_ACTIONS;

/// Budget and overrides for the sparse-reward fine-tuning phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub steps: u64,
    pub dqn_lr: f64,
    pub dqn_eps_start: f64,
    pub dqn_eps_end: f64,
    pub dqn_eps_decay_steps: u64,
    pub ppo_lr: f64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            steps: 20_000,
            dqn_lr: 1e-4,
            dqn_eps_start: 0.2,
            dqn_eps_end: 0.02,
            dqn_eps_decay_steps: 10_000,
            ppo_lr: 1e-4,
        }
    }
}

/// Hashes stamped into the produced checkpoints.
#[derive(Debug, Clone, Default)]
pub struct CheckpointMeta {
    pub config_hash: String,
    pub offline_env_hash: String,
    pub real_env_hash: String,
}

#[derive(Debug, Clone)]
pub struct CurriculumResult {
    pub offline: Checkpoint,
    pub finetuned: Checkpoint,
    pub offline_log: TrainingLog,
    pub finetune_log: TrainingLog,
}

/// Fresh network for an algorithm over the given observation shape.
pub fn init_net(algo: Algo, obs_shape: [usize; 3], seed: &SeedSpec, phase: &str) -> Network<f32> {
    let head = match algo {
        Algo::Dqn => N_DISCRETE_ACTIONS,
        Algo::Ppo => PPO_HEAD_DIM,
    };
    let spec = if obs_shape[0] >= 16 && obs_shape[1] >= 16 {
        NetSpec::conv_trunk(obs_shape, head)
    } else {
        NetSpec::dense_net(obs_shape, 64, head)
    };
    let mut rng = seed.stream(&format!("{phase}/init-{algo}"), 0);
    Network::init(spec, &mut rng).expect("net spec chains")
}

/// Train in the offline grid world with dense reward, checkpoint, continue
/// in the real environment with sparse reward, checkpoint again.
#[allow(clippy::too_many_arguments)]
pub fn pretrain_then_finetune(
    algo: Algo,
    offline_env: &mut InsertionEnv,
    real_env: &mut InsertionEnv,
    dqn_cfg: &DqnConfig,
    ppo_cfg: &PpoConfig,
    finetune: &FinetuneConfig,
    seed: &SeedSpec,
    meta: &CheckpointMeta,
    mut on_episode: impl FnMut(&str, &EpisodeRecord),
) -> Result<CurriculumResult, AgentError> {
    let mut net = init_net(algo, crate::agents::RlEnv::obs_shape(offline_env), seed, "pretrain");
    if algo == Algo::Ppo {
        init_policy_head(&mut net, ppo_cfg);
    }

    let (net, offline_log) = match algo {
        Algo::Dqn => dqn_train(offline_env, net, dqn_cfg, seed, "pretrain", |r| {
            on_episode("pretrain", r)
        })?,
        Algo::Ppo => ppo_train(offline_env, net, ppo_cfg, seed, "pretrain", |r| {
            on_episode("pretrain", r)
        })?,
    };
    let offline_steps = match algo {
        Algo::Dqn => dqn_cfg.total_steps,
        Algo::Ppo => ppo_cfg.total_steps,
    };
    let offline_ckpt = Checkpoint::from_network(
        &net,
        algo,
        &meta.config_hash,
        &meta.offline_env_hash,
        seed,
        "pretrain",
        offline_steps,
    );

    let (tuned, finetune_log) = if finetune.steps == 0 {
        (net, TrainingLog::default())
    } else {
        match algo {
            Algo::Dqn => {
                let cfg = DqnConfig {
                    total_steps: finetune.steps,
                    lr: finetune.dqn_lr,
                    eps_start: finetune.dqn_eps_start,
                    eps_end: finetune.dqn_eps_end,
                    eps_decay_steps: finetune.dqn_eps_decay_steps,
                    ..*dqn_cfg
                };
                dqn_train(real_env, net, &cfg, seed, "finetune", |r| on_episode("finetune", r))?
            }
            Algo::Ppo => {
                let cfg = PpoConfig {
                    total_steps: finetune.steps,
                    lr: finetune.ppo_lr,
                    ..*ppo_cfg
                };
                ppo_train(real_env, net, &cfg, seed, "finetune", |r| on_episode("finetune", r))?
            }
        }
    };
    let finetuned_ckpt = Checkpoint::from_network(
        &tuned,
        algo,
        &meta.config_hash,
        &meta.real_env_hash,
        seed,
        "finetune",
        finetune.steps,
    );

    Ok(CurriculumResult {
        offline: offline_ckpt,
        finetuned: finetuned_ckpt,
        offline_log,
        finetune_log,
    })
}
