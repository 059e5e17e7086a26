//! Clipped-ratio policy optimisation over recurrent segments.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nn::CellState;
use super::policy::{gaussian_log_prob, gaussian_log_prob_grad, ActorCritic, PolicyShape};
use super::RlError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub clip_eps: f64,
    /// Passes over the buffer per update.
    pub update_iters: usize,
    /// Steps collected between updates.
    pub update_horizon: usize,
    /// Steps per minibatch; also the recurrent replay segment length.
    pub minibatch: usize,
    pub learn_rate: f64,
    pub grad_clip_norm: f64,
    /// Initial exploration noise; decays linearly to 10% over training.
    pub explore_std: f64,
    pub log_std_init: f64,
    pub hidden_dim: usize,
    /// Training episodes.
    pub epochs: usize,
    pub normalize_advantages: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.4,
            clip_eps: 0.1,
            update_iters: 2,
            update_horizon: 1000,
            minibatch: 128,
            learn_rate: 1e-4,
            grad_clip_norm: 0.5,
            explore_std: 0.3,
            log_std_init: -0.5,
            hidden_dim: 32,
            epochs: 150,
            normalize_advantages: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let fail = |m: String| Err(RlError::Config(m));
        if !(0.0..1.0).contains(&self.gamma) {
            return fail(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return fail(format!("clip_eps must lie in (0, 1), got {}", self.clip_eps));
        }
        if self.update_iters == 0 {
            return fail("update_iters must be at least 1".into());
        }
        if self.minibatch == 0 || self.update_horizon < self.minibatch {
            return fail(format!(
                "need 1 <= minibatch ({}) <= update_horizon ({})",
                self.minibatch, self.update_horizon
            ));
        }
        if !(self.learn_rate > 0.0 && self.learn_rate.is_finite()) {
            return fail(format!("learn_rate must be positive, got {}", self.learn_rate));
        }
        if !(self.grad_clip_norm > 0.0) {
            return fail(format!("grad_clip_norm must be positive, got {}", self.grad_clip_norm));
        }
        if !(self.explore_std >= 0.0 && self.explore_std.is_finite()) {
            return fail(format!("explore_std must be nonnegative, got {}", self.explore_std));
        }
        if !self.log_std_init.is_finite() {
            return fail("log_std_init must be finite".into());
        }
        if self.hidden_dim == 0 {
            return fail("hidden_dim must be at least 1".into());
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        Ok(())
    }

    /// Exploration noise for a training episode: linear from `explore_std`
    /// down to 10% of it at the last episode.
    pub fn noise_scale(&self, episode: usize) -> f64 {
        if self.epochs <= 1 {
            return self.explore_std;
        }
        let frac = (episode.min(self.epochs - 1)) as f64 / (self.epochs - 1) as f64;
        self.explore_std * (1.0 - 0.9 * frac)
    }
}

/// One stored interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    pub done: bool,
    pub noise_scale: f64,
    /// Recurrent states before this step.
    pub actor_cell: CellState,
    pub critic_cell: CellState,
    /// The step does not continue the previous buffer entry's trajectory
    /// (first step of an episode or of a worker's chunk).
    pub chain_start: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    pub steps: Vec<Transition>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        self.steps.push(t);
    }

    pub fn clear(&mut self) {
        self.steps.clear();
    }
}

/// `G_i = r_i + γ (1 − d_i) G_{i+1}` with `G_n = 0`, and `Â = G − V`.
pub fn returns_and_advantages(
    rewards: &[f64],
    dones: &[bool],
    values: &[f64],
    gamma: f64,
) -> Result<(Vec<f64>, Vec<f64>), RlError> {
    let n = rewards.len();
    if dones.len() != n || values.len() != n {
        return Err(RlError::Shape(format!(
            "rewards {n}, dones {}, values {}",
            dones.len(),
            values.len()
        )));
    }
    let mut g = vec![0.0; n];
    let mut next = 0.0;
    for i in (0..n).rev() {
        let carry = if dones[i] { 0.0 } else { next };
        g[i] = rewards[i] + gamma * carry;
        next = g[i];
    }
    let adv = g.iter().zip(values).map(|(g, v)| g - v).collect();
    Ok((g, adv))
}

/// Per-sample clipped objective `min(u·Â, clip(u, 1−ε, 1+ε)·Â)`.
pub fn clipped_objective(ratio: f64, advantage: f64, eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
    (ratio * advantage).min(clipped * advantage)
}

/// `∂/∂u` of [`clipped_objective`] (zero where the clipped branch binds).
pub fn clipped_objective_grad(ratio: f64, advantage: f64, eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
    let inside = (1.0 - eps..=1.0 + eps).contains(&ratio);
    if ratio * advantage <= clipped * advantage || inside {
        advantage
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoLosses {
    pub ratios: Vec<f64>,
    /// Mean clipped objective (maximised).
    pub actor_objective: f64,
    /// Mean squared value error (minimised).
    pub critic_loss: f64,
}

pub fn ppo_losses(
    new_log_probs: &[f64],
    old_log_probs: &[f64],
    advantages: &[f64],
    values: &[f64],
    returns: &[f64],
    eps: f64,
) -> Result<PpoLosses, RlError> {
    let n = new_log_probs.len();
    if [old_log_probs.len(), advantages.len(), values.len(), returns.len()]
        .iter()
        .any(|&l| l != n)
        || n == 0
    {
        return Err(RlError::Shape("ppo_losses needs equal, nonempty inputs".into()));
    }
    let ratios: Vec<f64> = new_log_probs
        .iter()
        .zip(old_log_probs)
        .map(|(a, b)| (a - b).exp())
        .collect();
    let actor_objective = ratios
        .iter()
        .zip(advantages)
        .map(|(u, a)| clipped_objective(*u, *a, eps))
        .sum::<f64>()
        / n as f64;
    let critic_loss = values
        .iter()
        .zip(returns)
        .map(|(v, g)| (v - g) * (v - g))
        .sum::<f64>()
        / n as f64;
    Ok(PpoLosses {
        ratios,
        actor_objective,
        critic_loss,
    })
}

pub fn global_norm(grad: &[f64]) -> f64 {
    grad.iter().map(|g| g * g).sum::<f64>().sqrt()
}

/// Rescales `grad` to norm `max_norm` if it is longer; returns the
/// original norm.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = global_norm(grad);
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    /// Descent step on `params` along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / bc1) / ((*v / bc2).sqrt() + self.eps);
        }
    }
}

/// Contiguous run of transitions replayed through the recurrent nets.
#[derive(Debug, Clone, Copy)]
pub struct Segment<'a> {
    pub steps: &'a [Transition],
    pub advantages: &'a [f64],
    pub returns: &'a [f64],
}

fn injections<'a>(steps: &'a [Transition], critic: bool) -> Vec<Option<&'a CellState>> {
    steps
        .iter()
        .enumerate()
        .map(|(i, t)| {
            (i == 0 || t.chain_start).then_some(if critic { &t.critic_cell } else { &t.actor_cell })
        })
        .collect()
}

/// Negative mean clipped objective over a segment and its gradient with
/// respect to the actor parameters. Also returns the new log-probs.
pub fn segment_actor_loss(
    shape: &PolicyShape,
    actor: &[f64],
    seg: &Segment<'_>,
    eps: f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    let net = shape.actor_net();
    let n_net = net.len();
    let log_std = &actor[n_net..];
    let xs: Vec<&[f64]> = seg.steps.iter().map(|t| t.obs.as_slice()).collect();
    let trace = net.forward(&actor[..n_net], &xs, &injections(seg.steps, false));
    let n = seg.steps.len() as f64;
    let mut loss = 0.0;
    let mut d_out = Vec::with_capacity(seg.steps.len());
    let mut grad_log_std = vec![0.0; shape.action_dim];
    let mut new_lps = Vec::with_capacity(seg.steps.len());
    for (i, t) in seg.steps.iter().enumerate() {
        let mean = &trace.outputs[i];
        let lp = gaussian_log_prob(&t.action, mean, log_std, t.noise_scale);
        new_lps.push(lp);
        let u = (lp - t.log_prob).exp();
        let a = seg.advantages[i];
        loss -= clipped_objective(u, a, eps) / n;
        // ∂loss/∂lp = −(1/n)·∂obj/∂u·u.
        let d_lp = -clipped_objective_grad(u, a, eps) * u / n;
        if d_lp == 0.0 {
            d_out.push(vec![0.0; shape.action_dim]);
            continue;
        }
        let (dm, dls) = gaussian_log_prob_grad(&t.action, mean, log_std, t.noise_scale);
        d_out.push(dm.iter().map(|g| g * d_lp).collect());
        for (acc, g) in grad_log_std.iter_mut().zip(dls) {
            *acc += g * d_lp;
        }
    }
    let (mut grad, _) = net.backward(&actor[..n_net], &xs, &trace, &d_out);
    grad.extend(grad_log_std);
    (loss, grad, new_lps)
}

/// Mean squared error of the critic over a segment and its gradient.
pub fn segment_critic_loss(shape: &PolicyShape, critic: &[f64], seg: &Segment<'_>) -> (f64, Vec<f64>) {
    let net = shape.critic_net();
    let xs: Vec<&[f64]> = seg.steps.iter().map(|t| t.obs.as_slice()).collect();
    let trace = net.forward(critic, &xs, &injections(seg.steps, true));
    let n = seg.steps.len() as f64;
    let mut loss = 0.0;
    let mut d_out = Vec::with_capacity(seg.steps.len());
    for (i, out) in trace.outputs.iter().enumerate() {
        let d = out[0] - seg.returns[i];
        loss += d * d / n;
        d_out.push(vec![2.0 * d / n]);
    }
    let (grad, _) = net.backward(critic, &xs, &trace, &d_out);
    (loss, grad)
}

/// Optimiser state carried across updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Learner {
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    /// Number of completed updates.
    pub updates: u64,
}

impl Learner {
    pub fn new(shape: &PolicyShape, lr: f64) -> Self {
        Self {
            actor_opt: Adam::new(shape.actor_len(), lr),
            critic_opt: Adam::new(shape.critic_len(), lr),
            updates: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateStats {
    pub returns: Vec<f64>,
    /// `G − V`, before any normalisation.
    pub advantages: Vec<f64>,
    /// Ratios under the pre-update parameters, in buffer order.
    pub initial_ratios: Vec<f64>,
    /// Mean clipped objective under the pre-update parameters.
    pub initial_actor_objective: f64,
    /// Mean clipped objective over the last pass.
    pub actor_objective: f64,
    pub critic_loss: f64,
    /// Largest pre-clip gradient norms seen.
    pub actor_grad_norm: f64,
    pub critic_grad_norm: f64,
    pub update_counter: u64,
}

/// Splits the buffer into worker chunks (a chunk starts at a transition
/// flagged `chain_start` that does not follow a `done`) and computes
/// returns chunk by chunk, so no return leaks across workers.
pub fn buffer_returns(steps: &[Transition], gamma: f64) -> (Vec<f64>, Vec<f64>) {
    let mut g = Vec::with_capacity(steps.len());
    let mut adv = Vec::with_capacity(steps.len());
    let mut start = 0;
    for i in 1..=steps.len() {
        let cut = i == steps.len() || (steps[i].chain_start && !steps[i - 1].done);
        if cut {
            let chunk = &steps[start..i];
            let r: Vec<f64> = chunk.iter().map(|t| t.reward).collect();
            let d: Vec<bool> = chunk.iter().map(|t| t.done).collect();
            let v: Vec<f64> = chunk.iter().map(|t| t.value).collect();
            let (cg, ca) = returns_and_advantages(&r, &d, &v, gamma).expect("equal lengths");
            g.extend(cg);
            adv.extend(ca);
            start = i;
        }
    }
    (g, adv)
}

/// One update: `update_iters` passes over minibatch segments in shuffled
/// order, each taking one clipped Adam step for the actor and one for the
/// critic. Clears the buffer.
pub fn update<R: Rng + ?Sized>(
    policy: &mut ActorCritic,
    learner: &mut Learner,
    buffer: &mut RolloutBuffer,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateStats, RlError> {
    if buffer.is_empty() {
        return Err(RlError::EmptyBuffer);
    }
    let steps = &buffer.steps;
    let n_total = steps.len() as f64;
    let (returns, advantages) = buffer_returns(steps, cfg.gamma);
    let mut adv_used = advantages.clone();
    if cfg.normalize_advantages {
        let n = adv_used.len() as f64;
        let mean = adv_used.iter().sum::<f64>() / n;
        let var = adv_used.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        for a in &mut adv_used {
            *a = (*a - mean) / (std + 1e-8);
        }
    }
    let bounds: Vec<(usize, usize)> = (0..steps.len())
        .step_by(cfg.minibatch)
        .map(|s| (s, (s + cfg.minibatch).min(steps.len())))
        .collect();
    let shape = policy.shape;
    let mut initial_ratios = vec![0.0; steps.len()];
    let mut initial_objective = 0.0;
    let mut last_objective = 0.0;
    let mut last_critic = 0.0;
    let mut actor_norm: f64 = 0.0;
    let mut critic_norm: f64 = 0.0;
    let segment = |(s, e): (usize, usize)| Segment {
        steps: &steps[s..e],
        advantages: &adv_used[s..e],
        returns: &returns[s..e],
    };
    for &(s, e) in &bounds {
        let (a_loss, _, new_lps) = segment_actor_loss(&shape, &policy.actor, &segment((s, e)), cfg.clip_eps);
        for (k, lp) in new_lps.iter().enumerate() {
            initial_ratios[s + k] = (lp - steps[s + k].log_prob).exp();
        }
        initial_objective -= a_loss * (e - s) as f64;
    }
    for _ in 0..cfg.update_iters {
        let mut order: Vec<usize> = (0..bounds.len()).collect();
        order.shuffle(rng);
        let mut obj_sum = 0.0;
        let mut critic_sum = 0.0;
        for &b in &order {
            let (s, e) = bounds[b];
            let seg = segment((s, e));
            let w = (e - s) as f64;
            let (a_loss, mut a_grad, _) = segment_actor_loss(&shape, &policy.actor, &seg, cfg.clip_eps);
            let (c_loss, mut c_grad) = segment_critic_loss(&shape, &policy.critic, &seg);
            obj_sum -= a_loss * w;
            critic_sum += c_loss * w;
            actor_norm = actor_norm.max(clip_grad_norm(&mut a_grad, cfg.grad_clip_norm));
            critic_norm = critic_norm.max(clip_grad_norm(&mut c_grad, cfg.grad_clip_norm));
            learner.actor_opt.step(&mut policy.actor, &a_grad);
            learner.critic_opt.step(&mut policy.critic, &c_grad);
        }
        last_objective = obj_sum / n_total;
        last_critic = critic_sum / n_total;
    }
    if policy.actor.iter().chain(&policy.critic).any(|v| !v.is_finite()) {
        return Err(RlError::NonFinite("parameters after update".into()));
    }
    learner.updates += 1;
    buffer.clear();
    Ok(UpdateStats {
        returns,
        advantages,
        initial_ratios,
        initial_actor_objective: initial_objective / n_total,
        actor_objective: last_objective,
        critic_loss: last_critic,
        actor_grad_norm: actor_norm,
        critic_grad_norm: critic_norm,
        update_counter: learner.updates,
    })
}
