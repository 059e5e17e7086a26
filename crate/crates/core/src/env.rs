//! Slot-level MDP: per-episode channel and viewport draws, action
//! projection onto the feasible set, rate/score evaluation and reward.

use std::io::{BufRead, Write};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{self, ChannelError, ChannelParams, ChannelState, UserDeployment};
use crate::fov::{self, FovError, HeadTrace, Viewport};
use crate::qos::{self, QosConfig, ScoreBreakdown};
use crate::quality::{self, QualityError, SurrogateModel, O_MAX};
use crate::rsma::{self, CommonRateSplit, PowerAllocation, RateError, RateReport, Scheme};
use crate::util::{mix_seed, serde_nonfinite_vec, sigmoid, softmax};

const TAG_PLACE: u64 = 0x504C_4143;
const TAG_CHANNEL: u64 = 0x4348_414E;
const TAG_FOV: u64 = 0x464F_5653;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid env config: {0}")]
    Config(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Fov(#[from] FovError),
    #[error(transparent)]
    Quality(#[from] QualityError),
    #[error("raw action has {got} entries, expected {expected}")]
    ActionLength { expected: usize, got: usize },
    #[error("raw action entry {index} is not finite")]
    NonFiniteAction { index: usize },
    #[error("head trace for user {user} has {len} samples, episode needs {needed}")]
    TraceTooShort { user: usize, len: usize, needed: usize },
    #[error("episode finished; call reset")]
    EpisodeOver,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Where viewport trajectories come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FovSource {
    /// Seeded random-walk traces, one sample per slot of `slot_s` seconds.
    Synthetic { slot_s: f64 },
    /// Head-trace CSV files; user `u` reads `paths[u % paths.len()]`, one
    /// sample per slot.
    Traces { paths: Vec<PathBuf> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub channel: ChannelParams,
    pub qos: QosConfig,
    pub scheme: Scheme,
    pub o_max: f64,
    /// Smallest CBR an action can select.
    pub o_floor: f64,
    /// Slots per episode.
    pub episode_len: usize,
    /// FoV map value outside the viewport.
    pub xi: f64,
    /// Pooling kernel for the semantic FoV map (1 or 2).
    pub pool_kernel: usize,
    /// Resolution of the FoV map before pooling (multiples of 48).
    pub fov_rows: usize,
    pub fov_cols: usize,
    /// Source frame size entering the codeword-dimension count.
    pub frame_height: usize,
    pub frame_width: usize,
    /// I-frame period; slots with `abs_slot % gop_n == 0` carry
    /// `iframe_factor` times the data.
    pub gop_n: Option<usize>,
    pub iframe_factor: f64,
    pub fov_source: FovSource,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            channel: ChannelParams::default(),
            qos: QosConfig::default(),
            scheme: Scheme::Rsma,
            o_max: O_MAX,
            o_floor: 0.005,
            episode_len: 100,
            xi: 0.1,
            pool_kernel: 2,
            fov_rows: 96,
            fov_cols: 192,
            frame_height: 960,
            frame_width: 1920,
            gop_n: None,
            iframe_factor: 2.0,
            fov_source: FovSource::Synthetic { slot_s: 1.0 / 30.0 },
        }
    }
}

impl EnvConfig {
    pub fn num_users(&self) -> usize {
        self.channel.num_users
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let fail = |m: String| Err(EnvError::Config(m));
        self.channel.validate()?;
        self.qos.validate().map_err(|e| EnvError::Config(e.to_string()))?;
        if !(self.o_max > 0.0 && self.o_max <= O_MAX) {
            return fail(format!("o_max must lie in (0, {O_MAX}], got {}", self.o_max));
        }
        if !(self.o_floor > 0.0 && self.o_floor <= self.o_max) {
            return fail(format!("o_floor must lie in (0, o_max], got {}", self.o_floor));
        }
        if self.episode_len == 0 {
            return fail("episode_len must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.xi) {
            return fail(format!("xi must lie in [0, 1), got {}", self.xi));
        }
        if self.pool_kernel != 1 && self.pool_kernel != 2 {
            return fail(format!("pool_kernel must be 1 or 2, got {}", self.pool_kernel));
        }
        if self.fov_rows == 0
            || self.fov_cols == 0
            || self.fov_rows % fov::GRID_MULTIPLE != 0
            || self.fov_cols % fov::GRID_MULTIPLE != 0
        {
            return fail(format!(
                "fov grid {}x{} must be a positive multiple of {}",
                self.fov_rows,
                self.fov_cols,
                fov::GRID_MULTIPLE
            ));
        }
        if self.frame_height == 0 || self.frame_width == 0 {
            return fail("frame size must be positive".into());
        }
        if self.gop_n == Some(0) {
            return fail("gop_n must be at least 1".into());
        }
        if !(self.iframe_factor >= 1.0) {
            return fail(format!("iframe_factor must be >= 1, got {}", self.iframe_factor));
        }
        match &self.fov_source {
            FovSource::Synthetic { slot_s } if !(*slot_s > 0.0 && slot_s.is_finite()) => {
                fail(format!("synthetic slot_s must be positive, got {slot_s}"))
            }
            FovSource::Traces { paths } if paths.is_empty() => fail("trace list is empty".into()),
            _ => Ok(()),
        }
    }

    /// Length of the raw action vector: `U + 1` stream-power logits, one
    /// budget logit, `U` CBR logits and `U` split logits.
    pub fn action_dim(&self) -> usize {
        3 * self.num_users() + 2
    }

    pub fn semantic_cells(&self) -> usize {
        let f = 1usize << fov::SEMANTIC_LEVELS;
        (self.fov_rows / f) * (self.fov_cols / f)
    }

    /// Length of [`Env::observe`]'s output.
    pub fn obs_dim(&self) -> usize {
        let u = self.num_users();
        u + u * self.semantic_cells() + (u + 1) + 3 * u
    }
}

/// Feasible per-slot decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvAction {
    /// For NOMA and OFDMA the common stream is unused and `common_w = 0`.
    pub power: PowerAllocation,
    pub cbr: Vec<f64>,
    /// Common-rate fractions under RSMA; bandwidth shares under OFDMA;
    /// unused under NOMA.
    pub common_split: CommonRateSplit,
}

/// Maps an unconstrained vector onto the feasible set.
///
/// Layout: `raw[0..=U]` stream logits (common first), `raw[U+1]` budget
/// logit, then `U` CBR logits and `U` split logits. Under NOMA and OFDMA
/// the common-stream logit is ignored.
pub fn project_action(cfg: &EnvConfig, raw: &[f64]) -> Result<EnvAction, EnvError> {
    let u = cfg.num_users();
    if raw.len() != cfg.action_dim() {
        return Err(EnvError::ActionLength {
            expected: cfg.action_dim(),
            got: raw.len(),
        });
    }
    if let Some(index) = raw.iter().position(|v| !v.is_finite()) {
        return Err(EnvError::NonFiniteAction { index });
    }
    let p_max = cfg.channel.tx_power_w();
    let budget = sigmoid(raw[u + 1]) * p_max;
    let power = match cfg.scheme {
        Scheme::Rsma => {
            let shares = softmax(&raw[..=u]);
            PowerAllocation {
                common_w: shares[0] * budget,
                private_w: shares[1..].iter().map(|s| s * budget).collect(),
                p_max_w: p_max,
            }
        }
        Scheme::Noma | Scheme::Ofdma => PowerAllocation {
            common_w: 0.0,
            private_w: softmax(&raw[1..=u]).iter().map(|s| s * budget).collect(),
            p_max_w: p_max,
        },
    };
    let cbr = raw[u + 2..2 * u + 2]
        .iter()
        .map(|&l| (sigmoid(l) * cfg.o_max).clamp(cfg.o_floor, cfg.o_max))
        .collect();
    let common_split = CommonRateSplit::new(softmax(&raw[2 * u + 2..]))?;
    Ok(EnvAction {
        power,
        cbr,
        common_split,
    })
}

/// Observable state at the start of a slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub episode: u64,
    /// Slot within the episode.
    pub slot: usize,
    pub channel_gain_power: Vec<f64>,
    pub noise_power_w: f64,
    /// Flattened semantic FoV map per user.
    pub semantic_fov: Vec<Vec<f64>>,
    pub prev_power: PowerAllocation,
    pub prev_cbr: Vec<f64>,
    pub prev_common_split: Vec<f64>,
    pub prev_private_rate: Vec<f64>,
}

/// Everything one slot produces.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    pub report: RateReport,
    pub effective_snr_db: Vec<f64>,
    pub per_user: Vec<ScoreBreakdown>,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: EnvState,
    pub reward: f64,
    pub done: bool,
    pub outcome: SlotOutcome,
}

/// `10 log10(2^(R/B) − 1)`: the SINR at which a single stream would carry
/// the user's total rate.
pub fn effective_snr_db(rate_bps: f64, bandwidth_hz: f64) -> f64 {
    let linear = (rate_bps / bandwidth_hz * std::f64::consts::LN_2).exp_m1();
    10.0 * linear.log10()
}

/// Codeword dimension for a CBR on a `height × width` three-channel frame.
pub fn codeword_dim(cbr: f64, height: usize, width: usize) -> f64 {
    (cbr * (height * width * 3) as f64).round()
}

/// Rates, scores and reward for one slot, independent of episode state.
pub fn evaluate_slot(
    cfg: &EnvConfig,
    model: &SurrogateModel,
    channel: &ChannelState,
    action: &EnvAction,
    abs_slot: u64,
) -> Result<SlotOutcome, EnvError> {
    let b = cfg.channel.bandwidth_hz;
    let report = match cfg.scheme {
        Scheme::Rsma => rsma::rsma_report(channel, &action.power, &action.common_split, b)?,
        Scheme::Noma => rsma::noma_rates(channel, &action.power.private_w, action.power.p_max_w, b)?,
        Scheme::Ofdma => rsma::ofdma_rates(
            channel,
            &action.power.private_w,
            action.common_split.fractions(),
            action.power.p_max_w,
            b,
        )?,
    };
    let iframe = matches!(cfg.gop_n, Some(n) if abs_slot % n as u64 == 0);
    let factor = if iframe { cfg.iframe_factor } else { 1.0 };
    let mut effective = Vec::with_capacity(report.rate_achievable.len());
    let mut per_user = Vec::with_capacity(report.rate_achievable.len());
    for (u, &rate) in report.rate_achievable.iter().enumerate() {
        let cbr = action.cbr[u];
        let snr = effective_snr_db(rate, b);
        let q = quality::eval_quality(model, cbr, snr)?;
        let k = codeword_dim(cbr, cfg.frame_height, cfg.frame_width) * factor;
        per_user.push(qos::score(&cfg.qos, k, rate, q));
        effective.push(snr);
    }
    let reward = per_user.iter().map(|s| s.total).sum::<f64>() / per_user.len() as f64;
    Ok(SlotOutcome {
        report,
        effective_snr_db: effective,
        per_user,
        reward,
    })
}

/// Per-episode draws.
#[derive(Debug, Clone)]
struct Episode {
    index: u64,
    deployment: UserDeployment,
    channels: Vec<ChannelState>,
    /// `[slot][user]` flattened semantic FoV maps.
    fov: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone)]
pub struct Env {
    cfg: EnvConfig,
    model: SurrogateModel,
    file_traces: Option<Vec<HeadTrace>>,
    episode: Option<Episode>,
    state: Option<EnvState>,
    done: bool,
}

impl Env {
    pub fn new(cfg: EnvConfig, model: SurrogateModel) -> Result<Self, EnvError> {
        cfg.validate()?;
        if cfg.o_max > model.o_max {
            return Err(EnvError::Config(format!(
                "o_max {} exceeds the quality model's {}",
                cfg.o_max, model.o_max
            )));
        }
        let file_traces = match &cfg.fov_source {
            FovSource::Traces { paths } => Some(
                paths
                    .iter()
                    .map(|p| fov::load_head_trace(p))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
            FovSource::Synthetic { .. } => None,
        };
        Ok(Self {
            cfg,
            model,
            file_traces,
            episode: None,
            state: None,
            done: false,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn model(&self) -> &SurrogateModel {
        &self.model
    }

    pub fn state(&self) -> Option<&EnvState> {
        self.state.as_ref()
    }

    pub fn deployment(&self) -> Option<&UserDeployment> {
        self.episode.as_ref().map(|e| &e.deployment)
    }

    /// Channel of the current slot.
    pub fn channel(&self) -> Option<&ChannelState> {
        let (e, s) = (self.episode.as_ref()?, self.state.as_ref()?);
        e.channels.get(s.slot.min(e.channels.len() - 1))
    }

    fn viewports(&self, episode: u64, seed: u64) -> Result<Vec<Vec<Viewport>>, EnvError> {
        let t_len = self.cfg.episode_len;
        let users = self.cfg.num_users();
        let mut per_user = Vec::with_capacity(users);
        for u in 0..users {
            let (trace, start) = match (&self.cfg.fov_source, &self.file_traces) {
                (_, Some(files)) => {
                    let tr = &files[u % files.len()];
                    if tr.len() < t_len {
                        return Err(EnvError::TraceTooShort {
                            user: u,
                            len: tr.len(),
                            needed: t_len,
                        });
                    }
                    let windows = (tr.len() - t_len + 1) as u64;
                    (tr.clone(), ((episode * t_len as u64) % windows) as usize)
                }
                (FovSource::Synthetic { slot_s }, None) => {
                    let s = mix_seed(&[seed, episode, u as u64, TAG_FOV]);
                    let tr = fov::synth_head_trace(s, t_len as f64 * slot_s, *slot_s)?;
                    if tr.len() < t_len {
                        return Err(EnvError::TraceTooShort {
                            user: u,
                            len: tr.len(),
                            needed: t_len,
                        });
                    }
                    (tr, 0)
                }
                (FovSource::Traces { .. }, None) => unreachable!("traces loaded in new"),
            };
            let vps = (start..start + t_len)
                .map(|i| {
                    let s = &trace.samples[i];
                    Viewport::looking_at(s.yaw_deg, s.pitch_deg)
                })
                .collect::<Result<Vec<_>, _>>()?;
            per_user.push(vps);
        }
        Ok(per_user)
    }

    /// Starts episode `episode`: places users, draws every slot's channel
    /// and viewport, and returns the initial state (equal power over the
    /// `U + 1` streams, equal split, `cbr = o_max / 2`).
    pub fn reset(&mut self, episode: u64, seed: u64) -> Result<EnvState, EnvError> {
        let cfg = &self.cfg;
        let users = cfg.num_users();
        let deployment = channel::place_users(&cfg.channel, mix_seed(&[seed, episode, TAG_PLACE]))?;
        let mut channels: Vec<ChannelState> = Vec::with_capacity(cfg.episode_len);
        for t in 0..cfg.episode_len {
            let s = mix_seed(&[seed, episode, t as u64, TAG_CHANNEL]);
            let mut ch = channel::sample_channel(&cfg.channel, &deployment, channels.last(), s)?;
            ch.slot_index = episode * cfg.episode_len as u64 + t as u64;
            channels.push(ch);
        }
        let viewports = self.viewports(episode, seed)?;
        let cfg = &self.cfg;
        let mut fov_maps = Vec::with_capacity(cfg.episode_len);
        for t in 0..cfg.episode_len {
            let row = (0..users)
                .map(|u| {
                    fov::semantic_fov(&viewports[u][t], cfg.fov_rows, cfg.fov_cols, cfg.xi, cfg.pool_kernel)
                        .map(|m| m.flatten().to_vec())
                })
                .collect::<Result<Vec<_>, _>>()?;
            fov_maps.push(row);
        }
        let p_max = cfg.channel.tx_power_w();
        let state = EnvState {
            episode,
            slot: 0,
            channel_gain_power: channels[0].gain_power.clone(),
            noise_power_w: channels[0].noise_power_w,
            semantic_fov: fov_maps[0].clone(),
            prev_power: PowerAllocation::equal(users, p_max),
            prev_cbr: vec![cfg.o_max / 2.0; users],
            prev_common_split: CommonRateSplit::equal(users).fractions().to_vec(),
            prev_private_rate: vec![0.0; users],
        };
        self.episode = Some(Episode {
            index: episode,
            deployment,
            channels,
            fov: fov_maps,
        });
        self.state = Some(state.clone());
        self.done = false;
        Ok(state)
    }

    /// Observation vector, in order: `(snr_db − 50)/10` per user at full
    /// power, the semantic FoV maps user by user, previous stream powers
    /// over `P_max` (common first), previous CBRs over `o_max`, previous
    /// split fractions, previous private rates over `10·B`.
    pub fn observe(&self, state: &EnvState) -> Vec<f64> {
        let cfg = &self.cfg;
        let p_max = cfg.channel.tx_power_w();
        let b = cfg.channel.bandwidth_hz;
        let mut obs = Vec::with_capacity(cfg.obs_dim());
        for &g in &state.channel_gain_power {
            let snr = 10.0 * (g * p_max / state.noise_power_w).log10();
            obs.push(((snr - 50.0) / 10.0).clamp(-10.0, 10.0));
        }
        for m in &state.semantic_fov {
            obs.extend_from_slice(m);
        }
        obs.push(state.prev_power.common_w / p_max);
        obs.extend(state.prev_power.private_w.iter().map(|p| p / p_max));
        obs.extend(state.prev_cbr.iter().map(|o| o / cfg.o_max));
        obs.extend_from_slice(&state.prev_common_split);
        obs.extend(state.prev_private_rate.iter().map(|r| r / (10.0 * b)));
        obs
    }

    pub fn step(&mut self, action: &EnvAction) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        let episode = self.episode.as_ref().ok_or(EnvError::EpisodeOver)?;
        let state = self.state.as_ref().ok_or(EnvError::EpisodeOver)?;
        let t = state.slot;
        let t_len = self.cfg.episode_len;
        let abs_slot = episode.index * t_len as u64 + t as u64;
        let outcome = evaluate_slot(&self.cfg, &self.model, &episode.channels[t], action, abs_slot)?;
        let done = t + 1 == t_len;
        let next = (t + 1).min(t_len - 1);
        let next_state = EnvState {
            episode: episode.index,
            slot: t + 1,
            channel_gain_power: episode.channels[next].gain_power.clone(),
            noise_power_w: episode.channels[next].noise_power_w,
            semantic_fov: episode.fov[next].clone(),
            prev_power: action.power.clone(),
            prev_cbr: action.cbr.clone(),
            prev_common_split: action.common_split.fractions().to_vec(),
            prev_private_rate: outcome.report.rate_private.clone(),
        };
        self.state = Some(next_state.clone());
        self.done = done;
        Ok(StepResult {
            next_state,
            reward: outcome.reward,
            done,
            outcome,
        })
    }

    pub fn step_raw(&mut self, raw: &[f64]) -> Result<(EnvAction, StepResult), EnvError> {
        let action = project_action(&self.cfg, raw)?;
        let result = self.step(&action)?;
        Ok((action, result))
    }
}

/// One slot of an exported episode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub episode: u64,
    pub slot: usize,
    pub abs_slot: u64,
    pub channel_gain_power: Vec<f64>,
    pub noise_power_w: f64,
    pub raw_action: Option<Vec<f64>>,
    pub action: EnvAction,
    pub rate_achievable: Vec<f64>,
    #[serde(with = "serde_nonfinite_vec")]
    pub effective_snr_db: Vec<f64>,
    pub per_user: Vec<ScoreBreakdown>,
    pub reward: f64,
    pub done: bool,
}

impl SlotRecord {
    pub fn new(
        cfg: &EnvConfig,
        state: &EnvState,
        raw_action: Option<&[f64]>,
        action: &EnvAction,
        result: &StepResult,
    ) -> Self {
        Self {
            episode: state.episode,
            slot: state.slot,
            abs_slot: state.episode * cfg.episode_len as u64 + state.slot as u64,
            channel_gain_power: state.channel_gain_power.clone(),
            noise_power_w: state.noise_power_w,
            raw_action: raw_action.map(<[f64]>::to_vec),
            action: action.clone(),
            rate_achievable: result.outcome.report.rate_achievable.clone(),
            effective_snr_db: result.outcome.effective_snr_db.clone(),
            per_user: result.outcome.per_user.clone(),
            reward: result.reward,
            done: result.done,
        }
    }

    /// Recomputes the slot from the stored channel and action.
    pub fn replay(&self, cfg: &EnvConfig, model: &SurrogateModel) -> Result<SlotOutcome, EnvError> {
        let channel = ChannelState {
            gains: self
                .channel_gain_power
                .iter()
                .map(|g| num_complex::Complex64::new(g.sqrt(), 0.0))
                .collect(),
            fading: Vec::new(),
            gain_power: self.channel_gain_power.clone(),
            noise_power_w: self.noise_power_w,
            slot_index: self.abs_slot,
        };
        evaluate_slot(cfg, model, &channel, &self.action, self.abs_slot)
    }
}

pub fn write_trace_jsonl<W: Write>(mut out: W, records: &[SlotRecord]) -> Result<(), EnvError> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace_jsonl<R: BufRead>(input: R) -> Result<Vec<SlotRecord>, EnvError> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
