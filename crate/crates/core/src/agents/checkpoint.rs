//! Checkpoint file format: one JSON header line, then the parameter tensors
//! as raw little-endian 32-bit floats in declared order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AgentError, Algo};
use crate::nn::{NetSpec, Network};
use crate::rng::SeedSpec;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Where a training run's randomness stands: enough to re-derive every
/// stream the loops use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub master_seed: u64,
    pub phase: String,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub algo: Algo,
    pub net_spec: NetSpec,
    pub config_hash: String,
    pub env_hash: String,
    pub rng: RngState,
    pub param_count: usize,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: Vec<f32>,
}

impl Checkpoint {
    pub fn from_network(
        net: &Network<f32>,
        algo: Algo,
        config_hash: &str,
        env_hash: &str,
        seed: &SeedSpec,
        phase: &str,
        steps: u64,
    ) -> Self {
        let params = net.flat_params();
        Self {
            header: CheckpointHeader {
                format_version: CHECKPOINT_VERSION,
                algo,
                net_spec: net.spec().clone(),
                config_hash: config_hash.to_string(),
                env_hash: env_hash.to_string(),
                rng: RngState { master_seed: seed.master_seed, phase: phase.to_string(), steps },
                param_count: params.len(),
            },
            params,
        }
    }

    /// Rebuild the network; forward outputs match the saved one bit-exactly.
    pub fn into_network(&self) -> Result<Network<f32>, AgentError> {
        let mut init_rng = SeedSpec::new(0).stream("checkpoint-rebuild", 0);
        let mut net = Network::<f32>::init(self.header.net_spec.clone(), &mut init_rng)?;
        net.load_flat_params(&self.params)?;
        Ok(net)
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), AgentError> {
    let io = |source| AgentError::CheckpointIo { path: path.to_path_buf(), source };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(io)?;
        }
    }
    let header = serde_json::to_string(&ckpt.header)
        .map_err(|e| AgentError::CheckpointFormat(e.to_string()))?;
    let mut bytes = Vec::with_capacity(header.len() + 1 + ckpt.params.len() * 4);
    bytes.extend_from_slice(header.as_bytes());
    bytes.push(b'\n');
    for v in &ckpt.params {
        bytes.write_all(&v.to_le_bytes()).expect("vec write");
    }
    fs::write(path, bytes).map_err(io)
}

/// Load a checkpoint. With `strict`, a mismatch against `expected_env_hash`
/// is an error; otherwise the mismatch is reported back as a warning.
pub fn load_checkpoint(
    path: &Path,
    expected_env_hash: Option<&str>,
    strict: bool,
) -> Result<(Checkpoint, Option<String>), AgentError> {
    let io = |source| AgentError::CheckpointIo { path: path.to_path_buf(), source };
    let bytes = fs::read(path).map_err(io)?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| AgentError::CheckpointFormat("missing header line".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| AgentError::CheckpointFormat(format!("bad header: {e}")))?;
    if header.format_version != CHECKPOINT_VERSION {
        return Err(AgentError::CheckpointFormat(format!(
            "unsupported version {}",
            header.format_version
        )));
    }
    let payload = &bytes[newline + 1..];
    if payload.len() != header.param_count * 4 {
        return Err(AgentError::CheckpointFormat(format!(
            "payload length {} does not match {} parameters",
            payload.len(),
            header.param_count
        )));
    }
    let params: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let mut warning = None;
    if let Some(expected) = expected_env_hash {
        if header.env_hash != expected {
            if strict {
                return Err(AgentError::EnvHashMismatch {
                    found: header.env_hash,
                    expected: expected.to_string(),
                });
            }
            warning = Some(format!(
                "checkpoint env hash {} differs from expected {expected}",
                header.env_hash
            ));
        }
    }
    Ok((Checkpoint { header, params }, warning))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::NetSpec;
    use crate::render::ObsImage;

    fn sample_net() -> Network<f32> {
        let mut rng = SeedSpec::new(5).stream("ckpt-init", 0);
        Network::<f32>::init(NetSpec::conv_trunk([16, 16, 3], 4), &mut rng).unwrap()
    }

    fn sample_ckpt(net: &Network<f32>) -> Checkpoint {
        Checkpoint::from_network(net, Algo::Dqn, "cfg123", "env456", &SeedSpec::new(5), "test", 42)
    }

    #[test]
    fn roundtrip_reproduces_forward_bit_exactly() {
        let net = sample_net();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        save_checkpoint(&sample_ckpt(&net), &path).unwrap();
        let (loaded, warning) = load_checkpoint(&path, Some("env456"), true).unwrap();
        assert!(warning.is_none());
        let rebuilt = loaded.into_network().unwrap();
        let obs = ObsImage { width: 16, height: 16, pixels: (0..16 * 16 * 3).map(|i| (i % 7) as f32 / 7.0).collect() };
        let a = net.forward(&super::super::obs_to_tensor(&obs)).unwrap();
        let b = rebuilt.forward(&super::super::obs_to_tensor(&obs)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let net = sample_net();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ckpt");
        save_checkpoint(&sample_ckpt(&net), &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 10);
        fs::write(&path, bytes).unwrap();
        assert!(matches!(
            load_checkpoint(&path, None, false),
            Err(AgentError::CheckpointFormat(_))
        ));
    }

    #[test]
    fn env_hash_mismatch_strict_and_lenient() {
        let net = sample_net();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.ckpt");
        save_checkpoint(&sample_ckpt(&net), &path).unwrap();
        assert!(matches!(
            load_checkpoint(&path, Some("other"), true),
            Err(AgentError::EnvHashMismatch { .. })
        ));
        let (_, warning) = load_checkpoint(&path, Some("other"), false).unwrap();
        assert!(warning.unwrap().contains("differs"));
    }

    #[test]
    fn save_is_deterministic() {
        let net = sample_net();
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("1.ckpt"), dir.path().join("2.ckpt"));
        save_checkpoint(&sample_ckpt(&net), &p1).unwrap();
        save_checkpoint(&sample_ckpt(&net), &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }
}
