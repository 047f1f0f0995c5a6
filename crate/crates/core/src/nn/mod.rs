//! Minimal tensor and network kernel: strided convolutions, dense layers,
//! ReLU, analytic backprop, Adam, and finite-difference gradient verification.
//!
//! Training runs in `f32`; gradient verification casts the same network to
//! `f64` (see [`net::Network::cast`]).

mod adam;
mod gemm;
mod gradcheck;
mod net;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{grad_check, gradient_rel_err, GradCheckReport, FD_STEP, FD_TOLERANCE};
pub use net::{ForwardCache, Gradients, LayerSpec, NetSpec, Network};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch { context: String, expected: Vec<usize>, got: Vec<usize> },
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("backward called without a matching forward cache")]
    MissingCache,
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
}
