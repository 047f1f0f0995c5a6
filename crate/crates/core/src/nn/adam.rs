//! Adaptive-moment parameter updates with bias correction.

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// First/second moment buffers, one pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub cfg: AdamConfig,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    t: u64,
}

impl<T: Float> AdamState<T> {
    pub fn new(cfg: AdamConfig, params: &[&Tensor<T>]) -> Self {
        Self {
            cfg,
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One optimizer step; `params` and `grads` must match the state layout.
pub fn adam_step<T: Float>(
    params: &mut [&mut Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
) -> Result<(), NnError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(NnError::ShapeMismatch {
            context: "adam_step tensor count".into(),
            expected: vec![state.m.len()],
            got: vec![params.len(), grads.len()],
        });
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            return Err(NnError::ShapeMismatch {
                context: format!("adam_step parameter {i}"),
                expected: p.shape().to_vec(),
                got: g.shape().to_vec(),
            });
        }
    }
    state.t += 1;
    let b1 = T::from(state.cfg.beta1).expect("beta1");
    let b2 = T::from(state.cfg.beta2).expect("beta2");
    let one = T::one();
    let lr = T::from(state.cfg.lr).expect("lr");
    let eps = T::from(state.cfg.eps).expect("eps");
    let bc1 = T::from(1.0 - state.cfg.beta1.powi(state.t as i32)).expect("bc1");
    let bc2 = T::from(1.0 - state.cfg.beta2.powi(state.t as i32)).expect("bc2");
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let pd = p.data_mut();
        let gd = g.data();
        let md = m.data_mut();
        let vd = v.data_mut();
        for j in 0..pd.len() {
            let gj = gd[j];
            md[j] = b1 * md[j] + (one - b1) * gj;
            vd[j] = b2 * vd[j] + (one - b2) * gj * gj;
            let m_hat = md[j] / bc1;
            let v_hat = vd[j] / bc2;
            pd[j] = pd[j] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(v: Vec<f64>) -> Tensor<f64> {
        Tensor::from_vec(&[v.len()], v).unwrap()
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // at t=1 the bias-corrected update is lr * g / (|g| + eps) ~ lr * sign(g)
        let mut p = tensor(vec![1.0, -2.0, 0.5]);
        let g = tensor(vec![0.3, -0.7, 4.0]);
        let cfg = AdamConfig::with_lr(0.01);
        let mut state = AdamState::new(cfg, &[&p]);
        adam_step(&mut [&mut p], &[g], &mut state).unwrap();
        let expect = [1.0 - 0.01, -2.0 + 0.01, 0.5 - 0.01];
        for (a, e) in p.data().iter().zip(expect) {
            assert!((a - e).abs() < 1e-6, "{a} vs {e}");
        }
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = tensor(vec![1.0, 2.0]);
        let before = p.clone();
        let mut state = AdamState::new(AdamConfig::default(), &[&p]);
        adam_step(&mut [&mut p], &[tensor(vec![0.0, 0.0])], &mut state).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn identical_inputs_give_identical_params() {
        let run = || {
            let mut p = tensor(vec![0.4, -0.1, 2.2]);
            let mut state = AdamState::new(AdamConfig::with_lr(0.05), &[&p]);
            for k in 0..10 {
                let g = tensor(vec![0.1 * k as f64, -0.2, 0.3]);
                adam_step(&mut [&mut p], &[g], &mut state).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = tensor(vec![1.0, 2.0]);
        let mut state = AdamState::new(AdamConfig::default(), &[&p]);
        let bad = tensor(vec![1.0, 2.0, 3.0]);
        assert!(adam_step(&mut [&mut p], &[bad], &mut state).is_err());
    }
}
