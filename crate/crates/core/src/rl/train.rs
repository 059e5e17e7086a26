//! Episode loop: act, store, update every `update_horizon` steps.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nn::CellState;
use super::policy::{ActorCritic, PolicyShape};
use super::ppo::{self, Learner, PpoConfig, RolloutBuffer, Transition, UpdateStats};
use super::RlError;
use crate::env::{Env, EnvConfig, SlotRecord};
use crate::quality::SurrogateModel;
use crate::util::mix_seed;

const TAG_INIT: u64 = 0x494E_4954;
const TAG_ACT: u64 = 0x4143_5421;
const TAG_UPDATE: u64 = 0x5550_4454;

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub mean_reward: f64,
    /// Negative clipped objective of the latest update; `None` before the first.
    pub actor_loss: Option<f64>,
    pub critic_loss: Option<f64>,
    pub grad_norm: Option<f64>,
    pub noise_scale: f64,
}

pub const TRAIN_LOG_HEADER: &str = "episode,mean_reward,actor_loss,critic_loss,grad_norm,noise_scale";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_train_log<W: Write>(mut out: W, rows: &[EpisodeLog]) -> std::io::Result<()> {
    writeln!(out, "{TRAIN_LOG_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.episode,
            r.mean_reward,
            fmt_opt(r.actor_loss),
            fmt_opt(r.critic_loss),
            fmt_opt(r.grad_norm),
            r.noise_scale
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: ActorCritic,
    pub learner: Learner,
    pub history: Vec<EpisodeLog>,
}

impl TrainOutcome {
    pub fn rewards(&self) -> Vec<f64> {
        self.history.iter().map(|h| h.mean_reward).collect()
    }
}

pub fn policy_shape(env: &EnvConfig, ppo: &PpoConfig) -> PolicyShape {
    PolicyShape {
        obs_dim: env.obs_dim(),
        action_dim: env.action_dim(),
        hidden: ppo.hidden_dim,
    }
}

/// Rolls out one full episode with a fixed parameter snapshot.
fn rollout_episode(
    env: &mut Env,
    policy: &ActorCritic,
    episode: usize,
    seed: u64,
    noise_scale: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Transition>, f64), RlError> {
    let hidden = policy.shape.hidden;
    let mut state = env.reset(episode as u64, seed)?;
    let mut actor_cell = CellState::zeros(hidden);
    let mut critic_cell = CellState::zeros(hidden);
    let mut out = Vec::with_capacity(env.config().episode_len);
    let mut total = 0.0;
    loop {
        let obs = env.observe(&state);
        let act = policy.act(&obs, &actor_cell, noise_scale, rng, false)?;
        let (value, next_critic) = policy.value(&obs, &critic_cell)?;
        let (_, res) = env.step_raw(&act.action)?;
        total += res.reward;
        out.push(Transition {
            obs,
            action: act.action,
            log_prob: act.log_prob,
            value,
            reward: res.reward,
            done: res.done,
            noise_scale,
            actor_cell: std::mem::replace(&mut actor_cell, act.cell),
            critic_cell: std::mem::replace(&mut critic_cell, next_critic),
            chain_start: out.is_empty(),
        });
        state = res.next_state;
        if res.done {
            break;
        }
    }
    let n = out.len() as f64;
    Ok((out, total / n))
}

#[derive(Clone, Copy, Default)]
struct UpdateSummary {
    actor_loss: Option<f64>,
    critic_loss: Option<f64>,
    grad_norm: Option<f64>,
}

impl From<&UpdateStats> for UpdateSummary {
    fn from(s: &UpdateStats) -> Self {
        Self {
            actor_loss: Some(-s.actor_objective),
            critic_loss: Some(s.critic_loss),
            grad_norm: Some(s.actor_grad_norm.max(s.critic_grad_norm)),
        }
    }
}

/// Trains for `ppo.epochs` episodes. With one worker the loop acts,
/// stores and updates step by step (an update may land mid-episode). With
/// several workers, rounds of `workers` episodes run in parallel on a
/// shared parameter snapshot and are appended in worker order before any
/// due updates, so results depend only on the seed and the worker count.
pub fn train(
    env_cfg: &EnvConfig,
    model: &SurrogateModel,
    ppo_cfg: &PpoConfig,
    seed: u64,
    workers: usize,
) -> Result<TrainOutcome, RlError> {
    train_with_callback(env_cfg, model, ppo_cfg, seed, workers, |_| {})
}

pub fn train_with_callback(
    env_cfg: &EnvConfig,
    model: &SurrogateModel,
    ppo_cfg: &PpoConfig,
    seed: u64,
    workers: usize,
    mut on_episode: impl FnMut(&EpisodeLog),
) -> Result<TrainOutcome, RlError> {
    ppo_cfg.validate()?;
    if workers == 0 {
        return Err(RlError::Config("workers must be at least 1".into()));
    }
    let shape = policy_shape(env_cfg, ppo_cfg);
    let mut init_rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, TAG_INIT]));
    let mut policy = ActorCritic::new(shape, ppo_cfg.log_std_init, &mut init_rng);
    let mut learner = Learner::new(&shape, ppo_cfg.learn_rate);
    let mut update_rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, TAG_UPDATE]));
    let mut buffer = RolloutBuffer::default();
    let mut history = Vec::with_capacity(ppo_cfg.epochs);
    let mut last = UpdateSummary::default();

    if workers == 1 {
        let mut env = Env::new(env_cfg.clone(), model.clone())?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, 0, TAG_ACT]));
        let hidden = shape.hidden;
        for k in 0..ppo_cfg.epochs {
            let noise = ppo_cfg.noise_scale(k);
            let mut state = env.reset(k as u64, seed)?;
            let mut actor_cell = CellState::zeros(hidden);
            let mut critic_cell = CellState::zeros(hidden);
            let mut total = 0.0;
            let mut slots = 0usize;
            loop {
                let obs = env.observe(&state);
                let act = policy.act(&obs, &actor_cell, noise, &mut rng, false)?;
                let (value, next_critic) = policy.value(&obs, &critic_cell)?;
                let (_, res) = env.step_raw(&act.action)?;
                total += res.reward;
                slots += 1;
                buffer.push(Transition {
                    obs,
                    action: act.action,
                    log_prob: act.log_prob,
                    value,
                    reward: res.reward,
                    done: res.done,
                    noise_scale: noise,
                    actor_cell: std::mem::replace(&mut actor_cell, act.cell),
                    critic_cell: std::mem::replace(&mut critic_cell, next_critic),
                    chain_start: slots == 1,
                });
                if buffer.len() == ppo_cfg.update_horizon {
                    let stats = ppo::update(&mut policy, &mut learner, &mut buffer, ppo_cfg, &mut update_rng)?;
                    last = (&stats).into();
                }
                state = res.next_state;
                if res.done {
                    break;
                }
            }
            let row = EpisodeLog {
                episode: k,
                mean_reward: total / slots as f64,
                actor_loss: last.actor_loss,
                critic_loss: last.critic_loss,
                grad_norm: last.grad_norm,
                noise_scale: noise,
            };
            on_episode(&row);
            history.push(row);
        }
    } else {
        let mut envs = (0..workers)
            .map(|_| Env::new(env_cfg.clone(), model.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let mut rngs: Vec<ChaCha8Rng> = (0..workers)
            .map(|w| ChaCha8Rng::seed_from_u64(mix_seed(&[seed, w as u64, TAG_ACT])))
            .collect();
        let mut k0 = 0;
        while k0 < ppo_cfg.epochs {
            let active = workers.min(ppo_cfg.epochs - k0);
            let snapshot = &policy;
            let results: Vec<Result<(Vec<Transition>, f64), RlError>> = std::thread::scope(|s| {
                let handles: Vec<_> = envs
                    .iter_mut()
                    .zip(rngs.iter_mut())
                    .take(active)
                    .enumerate()
                    .map(|(w, (env, rng))| {
                        let k = k0 + w;
                        let noise = ppo_cfg.noise_scale(k);
                        s.spawn(move || rollout_episode(env, snapshot, k, seed, noise, rng))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("rollout worker panicked"))
                    .collect()
            });
            let mut round_logs = Vec::with_capacity(active);
            for (w, r) in results.into_iter().enumerate() {
                let (steps, mean_reward) = r?;
                for t in steps {
                    buffer.push(t);
                }
                round_logs.push((k0 + w, mean_reward));
            }
            while buffer.len() >= ppo_cfg.update_horizon {
                let rest = buffer.steps.split_off(ppo_cfg.update_horizon);
                let stats = ppo::update(&mut policy, &mut learner, &mut buffer, ppo_cfg, &mut update_rng)?;
                last = (&stats).into();
                buffer.steps = rest;
                if let Some(first) = buffer.steps.first_mut() {
                    first.chain_start = true;
                }
            }
            for (k, mean_reward) in round_logs {
                let row = EpisodeLog {
                    episode: k,
                    mean_reward,
                    actor_loss: last.actor_loss,
                    critic_loss: last.critic_loss,
                    grad_norm: last.grad_norm,
                    noise_scale: ppo_cfg.noise_scale(k),
                };
                on_episode(&row);
                history.push(row);
            }
            k0 += active;
        }
    }
    Ok(TrainOutcome {
        policy,
        learner,
        history,
    })
}

/// Deterministic (noise-free, mean-action) rollout of one episode.
/// Returns the per-slot records.
pub fn evaluate_episode(
    env: &mut Env,
    policy: &ActorCritic,
    episode: u64,
    seed: u64,
) -> Result<Vec<SlotRecord>, RlError> {
    let hidden = policy.shape.hidden;
    let mut state = env.reset(episode, seed)?;
    let mut cell = CellState::zeros(hidden);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut records = Vec::with_capacity(env.config().episode_len);
    loop {
        let obs = env.observe(&state);
        let act = policy.act(&obs, &cell, 0.0, &mut rng, true)?;
        cell = act.cell;
        let (action, res) = env.step_raw(&act.action)?;
        records.push(SlotRecord::new(env.config(), &state, Some(&act.action), &action, &res));
        state = res.next_state;
        if res.done {
            break;
        }
    }
    Ok(records)
}

/// Saved training state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub ppo: PpoConfig,
    pub env: EnvConfig,
    /// Number of completed updates.
    pub update_counter: u64,
    pub policy: ActorCritic,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), RlError> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RlError> {
        let ck: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        ck.policy.validate()?;
        Ok(ck)
    }

    /// Checks that the policy fits an environment configuration.
    pub fn check_compatible(&self, env: &EnvConfig) -> Result<(), RlError> {
        let s = self.policy.shape;
        if s.obs_dim != env.obs_dim() || s.action_dim != env.action_dim() {
            return Err(RlError::Shape(format!(
                "checkpoint expects obs/action dims {}/{}, config gives {}/{}",
                s.obs_dim,
                s.action_dim,
                env.obs_dim(),
                env.action_dim()
            )));
        }
        Ok(())
    }
}
