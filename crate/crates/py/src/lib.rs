use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rsma360::channel::{path_loss_db as core_path_loss_db, ChannelState};
use rsma360::env::{Env, EnvConfig};
use rsma360::frame::load_frame;
use rsma360::metrics::{latitude_weights as core_latitude_weights, ws_psnr, ws_ssim};
use rsma360::qos::{score, QosConfig};
use rsma360::quality::{default_surrogate, eval_quality as core_eval_quality, QualityKind};
use rsma360::rl::ppo::{clipped_objective as core_clipped_objective, returns_and_advantages as core_returns};
use rsma360::rl::{train as core_train, PpoConfig};
use rsma360::rsma::{rsma_report, CommonRateSplit, PowerAllocation, Scheme};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_kind(kind: &str) -> PyResult<QualityKind> {
    kind.parse().map_err(value_err)
}

/// Free-space path loss in dB for a carrier in GHz and a distance in metres.
#[pyfunction]
fn path_loss_db(fc_ghz: f64, d_m: f64) -> PyResult<f64> {
    core_path_loss_db(fc_ghz, d_m).map_err(value_err)
}

/// RSMA SINRs and rates for one slot.
#[pyfunction]
#[pyo3(signature = (gains, noise_w, common_w, private_w, bandwidth_hz, split=None))]
fn rsma_rates<'py>(
    py: Python<'py>,
    gains: Vec<f64>,
    noise_w: f64,
    common_w: f64,
    private_w: Vec<f64>,
    bandwidth_hz: f64,
    split: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let n = gains.len();
    let state = ChannelState::from_gain_power(gains, noise_w);
    let p_max_w = common_w + private_w.iter().sum::<f64>();
    let alloc = PowerAllocation {
        common_w,
        private_w,
        p_max_w,
    };
    let split = match split {
        Some(f) => CommonRateSplit::new(f).map_err(value_err)?,
        None => CommonRateSplit::equal(n),
    };
    let r = rsma_report(&state, &alloc, &split, bandwidth_hz).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("sinr_common", r.sinr_common)?;
    d.set_item("sinr_private", r.sinr_private)?;
    d.set_item("rate_common_cap", r.rate_common_cap)?;
    d.set_item("common_alloc", r.common_alloc)?;
    d.set_item("rate_private", r.rate_private)?;
    d.set_item("rate_achievable", r.rate_achievable)?;
    Ok(d)
}

/// Per-row latitude weights of an equirectangular frame of `height` rows.
#[pyfunction]
fn latitude_weights(height: usize) -> Vec<f64> {
    core_latitude_weights(height, 1).row_weights().to_vec()
}

/// WS-PSNR and WS-SSIM (dB) of two image files; identical images give inf.
#[pyfunction]
fn frame_metrics(a: PathBuf, b: PathBuf) -> PyResult<(f64, f64)> {
    let x = load_frame(&a).map_err(value_err)?;
    let y = load_frame(&b).map_err(value_err)?;
    Ok((ws_psnr(&x, &y).map_err(value_err)?, ws_ssim(&x, &y).map_err(value_err)?))
}

/// Default surrogate quality (dB) for a channel bandwidth ratio and SNR.
#[pyfunction]
#[pyo3(signature = (cbr, snr_db, kind="ws_psnr"))]
fn eval_quality(cbr: f64, snr_db: f64, kind: &str) -> PyResult<f64> {
    core_eval_quality(&default_surrogate(parse_kind(kind)?), cbr, snr_db).map_err(value_err)
}

/// QoS score breakdown for a codeword of `k` symbols sent at `rate_bps`.
#[pyfunction]
#[pyo3(signature = (k, rate_bps, quality_db, kind="ws_psnr"))]
fn qos_score<'py>(py: Python<'py>, k: f64, rate_bps: f64, quality_db: f64, kind: &str) -> PyResult<Bound<'py, PyDict>> {
    let s = score(&QosConfig::for_kind(parse_kind(kind)?), k, rate_bps, quality_db);
    let d = PyDict::new(py);
    d.set_item("data_bits", s.data_bits)?;
    d.set_item("delay_s", s.delay_s)?;
    d.set_item("delay_score", s.delay_score)?;
    d.set_item("quality_score", s.quality_score)?;
    d.set_item("total", s.total)?;
    Ok(d)
}

/// Discounted returns and advantages `G − V`.
#[pyfunction]
fn returns_and_advantages(
    rewards: Vec<f64>,
    dones: Vec<bool>,
    values: Vec<f64>,
    gamma: f64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    core_returns(&rewards, &dones, &values, gamma).map_err(value_err)
}

#[pyfunction]
fn clipped_objective(ratio: f64, advantage: f64, eps: f64) -> f64 {
    core_clipped_objective(ratio, advantage, eps)
}

fn env_config(config_json: Option<&str>, scheme: Option<&str>, num_users: Option<usize>) -> PyResult<EnvConfig> {
    let mut cfg: EnvConfig = match config_json {
        Some(text) => serde_json::from_str(text).map_err(value_err)?,
        None => EnvConfig::default(),
    };
    if let Some(s) = scheme {
        cfg.scheme = s.parse::<Scheme>().map_err(value_err)?;
    }
    if let Some(u) = num_users {
        cfg.channel.num_users = u;
    }
    cfg.validate().map_err(value_err)?;
    Ok(cfg)
}

/// Mean reward per episode from a PPO training run.
#[pyfunction]
#[pyo3(signature = (epochs, seed, config_json=None, scheme=None, num_users=None, update_horizon=None))]
fn train(
    py: Python<'_>,
    epochs: usize,
    seed: u64,
    config_json: Option<&str>,
    scheme: Option<&str>,
    num_users: Option<usize>,
    update_horizon: Option<usize>,
) -> PyResult<Vec<f64>> {
    let cfg = env_config(config_json, scheme, num_users)?;
    let mut ppo = PpoConfig {
        epochs,
        ..PpoConfig::default()
    };
    if let Some(h) = update_horizon {
        ppo.update_horizon = h;
        ppo.minibatch = ppo.minibatch.min(h);
    }
    let model = default_surrogate(QualityKind::WsPsnr);
    let out = py
        .detach(|| core_train(&cfg, &model, &ppo, seed, 1))
        .map_err(value_err)?;
    Ok(out.rewards())
}

/// Resource-allocation environment driven by raw (unconstrained) actions.
#[pyclass(name = "Env")]
struct PyEnv {
    inner: Env,
}

#[pymethods]
impl PyEnv {
    #[new]
    #[pyo3(signature = (config_json=None, scheme=None, num_users=None))]
    fn new(config_json: Option<&str>, scheme: Option<&str>, num_users: Option<usize>) -> PyResult<Self> {
        let cfg = env_config(config_json, scheme, num_users)?;
        let model = default_surrogate(QualityKind::WsPsnr);
        Ok(Self {
            inner: Env::new(cfg, model).map_err(value_err)?,
        })
    }

    #[getter]
    fn obs_dim(&self) -> usize {
        self.inner.config().obs_dim()
    }

    #[getter]
    fn action_dim(&self) -> usize {
        self.inner.config().action_dim()
    }

    /// Starts episode `episode`; returns the first observation.
    fn reset(&mut self, episode: u64, seed: u64) -> PyResult<Vec<f64>> {
        let s = self.inner.reset(episode, seed).map_err(value_err)?;
        Ok(self.inner.observe(&s))
    }

    /// Applies a raw action; returns `(observation, reward, done, per-user totals)`.
    fn step(&mut self, raw: Vec<f64>) -> PyResult<(Vec<f64>, f64, bool, Vec<f64>)> {
        let (_, r) = self.inner.step_raw(&raw).map_err(value_err)?;
        let totals = r.outcome.per_user.iter().map(|s| s.total).collect();
        Ok((self.inner.observe(&r.next_state), r.reward, r.done, totals))
    }
}

#[pymodule]
fn pyrsma360(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(path_loss_db, m)?)?;
    m.add_function(wrap_pyfunction!(rsma_rates, m)?)?;
    m.add_function(wrap_pyfunction!(latitude_weights, m)?)?;
    m.add_function(wrap_pyfunction!(frame_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(eval_quality, m)?)?;
    m.add_function(wrap_pyfunction!(qos_score, m)?)?;
    m.add_function(wrap_pyfunction!(returns_and_advantages, m)?)?;
    m.add_function(wrap_pyfunction!(clipped_objective, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_class::<PyEnv>()?;
    Ok(())
}
