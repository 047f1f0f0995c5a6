//! DQN and PPO agents over the insertion environments, including the
//! offline-pretrain followed by real-world-fine-tune curriculum.

mod checkpoint;
mod curriculum;
mod dqn;
mod gae;
mod ppo;
mod replay;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointHeader, RngState, CHECKPOINT_VERSION};
pub use curriculum::{init_net, pretrain_then_finetune, CheckpointMeta, CurriculumResult, FinetuneConfig};
pub use dqn::{dqn_act, dqn_train, epsilon_at, td_targets, DqnConfig};
pub use gae::gae;
pub use ppo::{
    clipped_surrogate, init_policy_head, ppo_act, ppo_train, ppo_update, surrogate_grad,
    PpoBatch, PpoConfig, PpoSample, PpoStats, Rollout, PPO_HEAD_DIM,
};
pub use replay::{ReplayBuffer, Transition};

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, EnvError, InsertionEnv, StepResult};
use crate::nn::{NnError, Tensor};
use crate::render::{ObsImage, OBS_CHANNELS};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("non-finite loss at step {step}: {loss}")]
    NanLoss { step: u64, loss: f64 },
    #[error("non-finite parameters after update at step {step}")]
    NanParams { step: u64 },
    #[error("checkpoint i/o on {path}: {source}")]
    CheckpointIo { path: std::path::PathBuf, source: std::io::Error },
    #[error("checkpoint format: {0}")]
    CheckpointFormat(String),
    #[error("checkpoint environment hash mismatch: checkpoint {found}, expected {expected}")]
    EnvHashMismatch { found: String, expected: String },
    #[error("{0}")]
    Invalid(String),
}

/// Environment surface the training loops run against.
pub trait RlEnv {
    fn obs_shape(&self) -> [usize; 3];
    fn reset(&mut self) -> Arc<ObsImage>;
    fn step(&mut self, action: Action) -> Result<StepResult, EnvError>;
    fn is_terminal(&self) -> bool;
}

impl RlEnv for InsertionEnv {
    fn obs_shape(&self) -> [usize; 3] {
        InsertionEnv::obs_shape(self)
    }

    fn reset(&mut self) -> Arc<ObsImage> {
        InsertionEnv::reset(self)
    }

    fn step(&mut self, action: Action) -> Result<StepResult, EnvError> {
        InsertionEnv::step(self, action)
    }

    fn is_terminal(&self) -> bool {
        InsertionEnv::is_terminal(self)
    }
}

pub fn obs_to_tensor(obs: &ObsImage) -> Tensor<f32> {
    Tensor::from_vec(&[1, obs.height, obs.width, OBS_CHANNELS], obs.pixels.clone())
        .expect("observation buffer matches its dimensions")
}

pub fn batch_to_tensor(batch: &[Arc<ObsImage>]) -> Tensor<f32> {
    assert!(!batch.is_empty());
    let [h, w, c] = batch[0].shape();
    let mut data = Vec::with_capacity(batch.len() * h * w * c);
    for obs in batch {
        data.extend_from_slice(&obs.pixels);
    }
    Tensor::from_vec(&[batch.len(), h, w, c], data).expect("uniform observation shapes")
}

/// Discounted return of a logged reward sequence.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    let mut g = 0.0;
    for &r in rewards.iter().rev() {
        g = r + gamma * g;
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// Total environment steps consumed when the episode ended.
    pub step: u64,
    pub episode: u32,
    /// Discounted return of the episode's logged rewards.
    pub ret: f64,
    pub success: bool,
    /// Epsilon (DQN) or mean policy entropy (PPO) during the episode.
    pub exploration: f64,
    /// Mean optimization loss since the previous episode record.
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<EpisodeRecord>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,episode,return,success,exploration,loss\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.step, r.episode, r.ret, r.success as u8, r.exploration, r.loss
            ));
        }
        out
    }

    pub fn success_rate_tail(&self, n: usize) -> f64 {
        let tail = &self.records[self.records.len().saturating_sub(n)..];
        if tail.is_empty() {
            return 0.0;
        }
        tail.iter().filter(|r| r.success).count() as f64 / tail.len() as f64
    }
}

/// Which algorithm a checkpoint or training run belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Dqn,
    Ppo,
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Algo::Dqn => write!(f, "dqn"),
            Algo::Ppo => write!(f, "ppo"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discounted_return_matches_double_loop() {
        let rewards = [0.3, -1.2, 0.0, 4.5, -0.7, 0.9];
        let gamma: f64 = 0.97;
        let direct: f64 = rewards
            .iter()
            .enumerate()
            .map(|(i, r)| gamma.powi(i as i32) * r)
            .sum();
        assert!((discounted_return(&rewards, gamma) - direct).abs() < 1e-12);
    }

    #[test]
    fn training_log_csv_has_header_and_rows() {
        let log = TrainingLog {
            records: vec![EpisodeRecord {
                step: 10,
                episode: 0,
                ret: -1.5,
                success: true,
                exploration: 0.9,
                loss: 0.25,
            }],
        };
        let csv = log.to_csv();
        assert!(csv.starts_with("step,episode,return,success,exploration,loss\n"));
        assert!(csv.contains("10,0,-1.5,1,0.9,0.25"));
    }
}
