//! Recurrent diagonal-Gaussian actor and recurrent state-value critic.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::nn::{CellState, LstmShape};
use super::RlError;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyShape {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub hidden: usize,
}

impl PolicyShape {
    pub fn actor_net(&self) -> LstmShape {
        LstmShape {
            input: self.obs_dim,
            hidden: self.hidden,
            output: self.action_dim,
        }
    }

    pub fn critic_net(&self) -> LstmShape {
        LstmShape {
            input: self.obs_dim,
            hidden: self.hidden,
            output: 1,
        }
    }

    /// Actor parameters: LSTM and head, then one log-std per action dim.
    pub fn actor_len(&self) -> usize {
        self.actor_net().len() + self.action_dim
    }

    pub fn critic_len(&self) -> usize {
        self.critic_net().len()
    }
}

/// Per-dimension variance: learned `exp(2·log_std)` plus exploration
/// noise `noise_scale²`.
pub fn action_variance(log_std: f64, noise_scale: f64) -> f64 {
    (2.0 * log_std).exp() + noise_scale * noise_scale
}

/// Log-density of `action` under `N(mean, diag(exp(2·log_std) + noise²))`.
pub fn gaussian_log_prob(action: &[f64], mean: &[f64], log_std: &[f64], noise_scale: f64) -> f64 {
    action
        .iter()
        .zip(mean)
        .zip(log_std)
        .map(|((a, m), ls)| {
            let v = action_variance(*ls, noise_scale);
            let d = a - m;
            -0.5 * (d * d / v + v.ln() + LN_2PI)
        })
        .sum()
}

/// `∂ log p / ∂ mean` and `∂ log p / ∂ log_std`, per dimension.
pub fn gaussian_log_prob_grad(
    action: &[f64],
    mean: &[f64],
    log_std: &[f64],
    noise_scale: f64,
) -> (Vec<f64>, Vec<f64>) {
    let mut d_mean = Vec::with_capacity(mean.len());
    let mut d_log_std = Vec::with_capacity(mean.len());
    for ((a, m), ls) in action.iter().zip(mean).zip(log_std) {
        let s2 = (2.0 * ls).exp();
        let v = s2 + noise_scale * noise_scale;
        let d = a - m;
        d_mean.push(d / v);
        // ∂/∂v of the log-density, times ∂v/∂log_std = 2·exp(2·log_std).
        d_log_std.push((0.5 * d * d / (v * v) - 0.5 / v) * 2.0 * s2);
    }
    (d_mean, d_log_std)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActOutput {
    pub action: Vec<f64>,
    pub mean: Vec<f64>,
    pub log_prob: f64,
    pub cell: CellState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    pub shape: PolicyShape,
    pub actor: Vec<f64>,
    pub critic: Vec<f64>,
}

impl ActorCritic {
    /// Random recurrent weights; the actor head starts small so initial
    /// actions sit near zero logits.
    pub fn new<R: Rng + ?Sized>(shape: PolicyShape, log_std_init: f64, rng: &mut R) -> Self {
        let mut actor = shape.actor_net().init(rng, 0.1);
        actor.extend(std::iter::repeat_n(log_std_init, shape.action_dim));
        let critic = shape.critic_net().init(rng, 1.0);
        Self { shape, actor, critic }
    }

    pub fn zeros(shape: PolicyShape) -> Self {
        Self {
            shape,
            actor: vec![0.0; shape.actor_len()],
            critic: vec![0.0; shape.critic_len()],
        }
    }

    pub fn log_std(&self) -> &[f64] {
        &self.actor[self.shape.actor_net().len()..]
    }

    pub fn validate(&self) -> Result<(), RlError> {
        if self.actor.len() != self.shape.actor_len() || self.critic.len() != self.shape.critic_len() {
            return Err(RlError::Shape(format!(
                "parameter lengths {}/{} do not match shape {:?}",
                self.actor.len(),
                self.critic.len(),
                self.shape
            )));
        }
        if self.actor.iter().chain(&self.critic).any(|v| !v.is_finite()) {
            return Err(RlError::NonFinite("policy parameters".into()));
        }
        Ok(())
    }

    fn check_obs(&self, obs: &[f64]) -> Result<(), RlError> {
        if obs.len() != self.shape.obs_dim {
            return Err(RlError::Shape(format!(
                "observation has {} entries, policy expects {}",
                obs.len(),
                self.shape.obs_dim
            )));
        }
        Ok(())
    }

    /// Samples a raw action `mean + std·ε₁ + noise_scale·ε₂` (or returns the
    /// mean when `deterministic`), with its exact log-density.
    pub fn act<R: Rng + ?Sized>(
        &self,
        obs: &[f64],
        cell: &CellState,
        noise_scale: f64,
        rng: &mut R,
        deterministic: bool,
    ) -> Result<ActOutput, RlError> {
        self.check_obs(obs)?;
        let net = self.shape.actor_net();
        let (mean, cell) = net.step_forward(&self.actor, obs, cell);
        let log_std = self.log_std();
        let action: Vec<f64> = if deterministic {
            mean.clone()
        } else {
            mean.iter()
                .zip(log_std)
                .map(|(m, ls)| {
                    let e1: f64 = rng.sample(StandardNormal);
                    let e2: f64 = rng.sample(StandardNormal);
                    m + ls.exp() * e1 + noise_scale * e2
                })
                .collect()
        };
        let log_prob = gaussian_log_prob(&action, &mean, log_std, noise_scale);
        Ok(ActOutput {
            action,
            mean,
            log_prob,
            cell,
        })
    }

    pub fn value(&self, obs: &[f64], cell: &CellState) -> Result<(f64, CellState), RlError> {
        self.check_obs(obs)?;
        let (v, cell) = self.shape.critic_net().step_forward(&self.critic, obs, cell);
        Ok((v[0], cell))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shape() -> PolicyShape {
        PolicyShape {
            obs_dim: 5,
            action_dim: 3,
            hidden: 4,
        }
    }

    #[test]
    fn deterministic_act_repeats() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pol = ActorCritic::new(shape(), -0.5, &mut rng);
        let obs = [0.1, -0.2, 0.3, 0.0, 1.0];
        let cell = CellState::zeros(4);
        let a = pol.act(&obs, &cell, 0.3, &mut rng, true).unwrap();
        let b = pol.act(&obs, &cell, 0.3, &mut rng, true).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.action, a.mean);
        assert!(pol.act(&obs[..4], &cell, 0.3, &mut rng, true).is_err());
    }

    #[test]
    fn zero_policy_log_prob_is_standard_normal() {
        let pol = ActorCritic::zeros(shape());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let out = pol.act(&[1.0; 5], &CellState::zeros(4), 0.0, &mut rng, false).unwrap();
        assert_eq!(out.mean, vec![0.0; 3]);
        let expect: f64 = out.action.iter().map(|a| -0.5 * a * a - 0.5 * LN_2PI).sum();
        assert!((out.log_prob - expect).abs() < 1e-12);
        let (v, _) = pol.value(&[1.0; 5], &CellState::zeros(4)).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn log_prob_gradient_matches_differences() {
        let a = [0.3, -1.2];
        let m = [0.1, 0.4];
        let ls = [-0.3, 0.2];
        let noise = 0.25;
        let (dm, dls) = gaussian_log_prob_grad(&a, &m, &ls, noise);
        let h = 1e-6;
        for k in 0..2 {
            let mut mp = m;
            let mut mm = m;
            mp[k] += h;
            mm[k] -= h;
            let num = (gaussian_log_prob(&a, &mp, &ls, noise) - gaussian_log_prob(&a, &mm, &ls, noise)) / (2.0 * h);
            assert!((num - dm[k]).abs() < 1e-7);
            let mut lp = ls;
            let mut lm = ls;
            lp[k] += h;
            lm[k] -= h;
            let num = (gaussian_log_prob(&a, &m, &lp, noise) - gaussian_log_prob(&a, &m, &lm, noise)) / (2.0 * h);
            assert!((num - dls[k]).abs() < 1e-7);
        }
    }
}
