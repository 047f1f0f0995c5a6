//! Generalized advantage estimation.

use super::AgentError;

/// Backward-recursive GAE over one rollout.
///
/// `values[t]` is `V(s_t)`; for the transition after the last entry the
/// bootstrap value stands in for `V(s_T)`. `dones[t]` cuts the recursion at
/// terminal transitions. Returns `(advantages, returns)` with
/// `returns = advantages + values`.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), AgentError> {
    if rewards.len() != values.len() || rewards.len() != dones.len() {
        return Err(AgentError::Invalid(format!(
            "gae length mismatch: rewards {}, values {}, dones {}",
            rewards.len(),
            values.len(),
            dones.len()
        )));
    }
    let n = rewards.len();
    let mut advantages = vec![0.0; n];
    let mut carry = 0.0;
    for t in (0..n).rev() {
        let not_done = if dones[t] { 0.0 } else { 1.0 };
        let next_value = if t + 1 < n { values[t + 1] } else { bootstrap_value };
        let delta = rewards[t] + gamma * not_done * next_value - values[t];
        carry = delta + gamma * lambda * not_done * carry;
        advantages[t] = carry;
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((advantages, returns))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use crate::rng::SeedSpec;

    /// Direct double-loop evaluation of the GAE definition:
    /// `A_t = sum_l (gamma*lambda)^l * delta_{t+l}` with the product of
    /// `(1 - done)` masks cutting each term.
    fn brute_force(
        rewards: &[f64],
        values: &[f64],
        dones: &[bool],
        bootstrap: f64,
        gamma: f64,
        lambda: f64,
    ) -> Vec<f64> {
        let n = rewards.len();
        let delta = |t: usize| {
            let not_done = if dones[t] { 0.0 } else { 1.0 };
            let next = if t + 1 < n { values[t + 1] } else { bootstrap };
            rewards[t] + gamma * not_done * next - values[t]
        };
        (0..n)
            .map(|t| {
                let mut acc = 0.0;
                let mut weight = 1.0;
                for l in t..n {
                    acc += weight * delta(l);
                    if dones[l] {
                        break;
                    }
                    weight *= gamma * lambda;
                }
                acc
            })
            .collect()
    }

    #[test]
    fn lambda_zero_gives_one_step_td_error() {
        let rewards = [1.0, -2.0, 0.5];
        let values = [0.2, 0.4, -0.1];
        let dones = [false, false, false];
        let (adv, _) = gae(&rewards, &values, &dones, 0.7, 0.9, 0.0).unwrap();
        for t in 0..3 {
            let next = if t + 1 < 3 { values[t + 1] } else { 0.7 };
            let delta = rewards[t] + 0.9 * next - values[t];
            assert!((adv[t] - delta).abs() < 1e-15);
        }
    }

    #[test]
    fn lambda_one_gamma_one_is_reward_to_go_minus_value() {
        let rewards = [1.0, 2.0, 3.0, 4.0];
        let values = [0.5, -0.5, 1.5, 0.0];
        let dones = [false; 4];
        let (adv, rets) = gae(&rewards, &values, &dones, 0.0, 1.0, 1.0).unwrap();
        for t in 0..4 {
            let to_go: f64 = rewards[t..].iter().sum();
            assert!((adv[t] - (to_go - values[t])).abs() < 1e-12);
            assert!((rets[t] - to_go).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_brute_force_on_random_sequences() {
        let mut rng = SeedSpec::new(11).stream("gae", 0);
        for _ in 0..100 {
            let n = rng.random_range(1..=32);
            let rewards: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let values: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let dones: Vec<bool> = (0..n).map(|_| rng.random_range(0..5) == 0).collect();
            let bootstrap = rng.random_range(-2.0..2.0);
            let gamma = rng.random_range(0.5..1.0);
            let lambda = rng.random_range(0.0..=1.0);
            let (adv, rets) = gae(&rewards, &values, &dones, bootstrap, gamma, lambda).unwrap();
            let expect = brute_force(&rewards, &values, &dones, bootstrap, gamma, lambda);
            for t in 0..n {
                assert!((adv[t] - expect[t]).abs() < 1e-12, "t={t}");
                assert!((rets[t] - (expect[t] + values[t])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mismatched_lengths_error() {
        assert!(gae(&[1.0], &[0.0, 1.0], &[false], 0.0, 0.9, 0.9).is_err());
    }
}
