//! Desk-scale simulation of a two-stage gear assembly system: camera-based
//! coarse localization with a noisy detector stand-in, a grid-world insertion
//! environment with DQN/PPO agents trained offline and fine-tuned under
//! calibration mismatch, a spiral-search baseline, and an evaluation harness.

pub mod agents;
pub mod baseline;
pub mod env;
pub mod geom;
pub mod nn;
pub mod render;
pub mod rng;
pub mod stage1;
