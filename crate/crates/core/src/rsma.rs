//! Rate mathematics for rate-splitting multiple access and the NOMA/OFDMA
//! baselines.
//!
//! Every receiver first decodes the common stream treating all private
//! streams as interference, removes it, then decodes its own private stream
//! with the other private streams as interference. The common stream is
//! capped by its weakest decoder and shared out by fractions.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::ChannelState;

/// Relative slack allowed when checking sums against budgets.
const BUDGET_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Rsma,
    Noma,
    Ofdma,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Rsma, Scheme::Noma, Scheme::Ofdma];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Rsma => "rsma",
            Scheme::Noma => "noma",
            Scheme::Ofdma => "ofdma",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.as_str().to_uppercase())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rsma" => Ok(Scheme::Rsma),
            "noma" => Ok(Scheme::Noma),
            "ofdma" => Ok(Scheme::Ofdma),
            other => Err(format!("unknown scheme `{other}` (expected rsma, noma or ofdma)")),
        }
    }
}

/// Why a power or share vector was rejected.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PowerViolation {
    #[error("stream {stream} has negative or non-finite power {value}")]
    Negative { stream: String, value: f64 },
    #[error("total power {total} W exceeds budget {p_max} W")]
    OverBudget { total: f64, p_max: f64 },
    #[error("invalid power budget {0} W")]
    InvalidBudget(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RateError {
    #[error(transparent)]
    Power(#[from] PowerViolation),
    #[error("expected {expected} users, got {got}")]
    Length { expected: usize, got: usize },
    #[error("invalid common-rate split: {0}")]
    InvalidSplit(String),
    #[error("invalid bandwidth shares: {0}")]
    InvalidShares(String),
    #[error("common allocation sums to {sum}, cap is {cap}")]
    InconsistentAllocation { sum: f64, cap: f64 },
    #[error("bandwidth must be positive, got {0}")]
    Bandwidth(f64),
}

/// Transmit powers of the common stream and each private stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub common_w: f64,
    pub private_w: Vec<f64>,
    pub p_max_w: f64,
}

impl PowerAllocation {
    /// Equal power over the common stream and all private streams.
    pub fn equal(num_users: usize, p_max_w: f64) -> Self {
        let each = p_max_w / (num_users as f64 + 1.0);
        Self {
            common_w: each,
            private_w: vec![each; num_users],
            p_max_w,
        }
    }

    pub fn total(&self) -> f64 {
        self.common_w + self.private_w.iter().sum::<f64>()
    }

    pub fn validate(&self) -> Result<(), PowerViolation> {
        if !(self.p_max_w.is_finite() && self.p_max_w >= 0.0) {
            return Err(PowerViolation::InvalidBudget(self.p_max_w));
        }
        if !(self.common_w.is_finite() && self.common_w >= 0.0) {
            return Err(PowerViolation::Negative {
                stream: "common".into(),
                value: self.common_w,
            });
        }
        for (u, &p) in self.private_w.iter().enumerate() {
            if !(p.is_finite() && p >= 0.0) {
                return Err(PowerViolation::Negative {
                    stream: format!("private[{u}]"),
                    value: p,
                });
            }
        }
        check_budget(self.total(), self.p_max_w)
    }
}

fn check_budget(total: f64, p_max: f64) -> Result<(), PowerViolation> {
    if total > p_max * (1.0 + BUDGET_TOL) {
        return Err(PowerViolation::OverBudget { total, p_max });
    }
    Ok(())
}

/// Fractions of the common-rate cap handed to each user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommonRateSplit {
    fractions: Vec<f64>,
}

impl CommonRateSplit {
    pub fn new(fractions: Vec<f64>) -> Result<Self, RateError> {
        if fractions.is_empty() {
            return Err(RateError::InvalidSplit("empty".into()));
        }
        if let Some(f) = fractions.iter().find(|f| !(f.is_finite() && **f >= 0.0)) {
            return Err(RateError::InvalidSplit(format!("fraction {f} not in [0, inf)")));
        }
        let sum: f64 = fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(RateError::InvalidSplit(format!("fractions sum to {sum}")));
        }
        Ok(Self { fractions })
    }

    pub fn equal(num_users: usize) -> Self {
        Self {
            fractions: vec![1.0 / num_users as f64; num_users],
        }
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }
}

/// Per-user SINRs and rates for one slot under one access scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub scheme: Scheme,
    pub sinr_common: Vec<f64>,
    pub sinr_private: Vec<f64>,
    pub rate_common_per_user: Vec<f64>,
    pub rate_common_cap: f64,
    pub common_alloc: Vec<f64>,
    pub rate_private: Vec<f64>,
    pub rate_achievable: Vec<f64>,
}

/// RSMA quantities available before the common rate is shared out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsmaRates {
    pub sinr_common: Vec<f64>,
    pub sinr_private: Vec<f64>,
    pub rate_common_per_user: Vec<f64>,
    pub rate_common_cap: f64,
    pub rate_private: Vec<f64>,
}

fn shannon(bandwidth_hz: f64, sinr: f64) -> f64 {
    bandwidth_hz * (1.0 + sinr).log2()
}

fn check_bandwidth(bandwidth_hz: f64) -> Result<(), RateError> {
    if !(bandwidth_hz.is_finite() && bandwidth_hz > 0.0) {
        return Err(RateError::Bandwidth(bandwidth_hz));
    }
    Ok(())
}

pub fn rsma_rates(
    state: &ChannelState,
    alloc: &PowerAllocation,
    bandwidth_hz: f64,
) -> Result<RsmaRates, RateError> {
    alloc.validate()?;
    check_bandwidth(bandwidth_hz)?;
    let n = state.num_users();
    if alloc.private_w.len() != n {
        return Err(RateError::Length {
            expected: n,
            got: alloc.private_w.len(),
        });
    }
    let noise = state.noise_power_w;
    let private_total: f64 = alloc.private_w.iter().sum();
    let mut sinr_common = Vec::with_capacity(n);
    let mut sinr_private = Vec::with_capacity(n);
    for (u, &g) in state.gain_power.iter().enumerate() {
        let own = alloc.private_w[u];
        sinr_common.push(g * alloc.common_w / (g * private_total + noise));
        // Sum the others explicitly; `private_total - own` can round below zero.
        let others: f64 = alloc
            .private_w
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != u)
            .map(|(_, p)| p)
            .sum();
        sinr_private.push(g * own / (g * others + noise));
    }
    let rate_common_per_user: Vec<f64> = sinr_common
        .iter()
        .map(|&s| shannon(bandwidth_hz, s))
        .collect();
    let rate_common_cap = rate_common_per_user
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let rate_private = sinr_private
        .iter()
        .map(|&s| shannon(bandwidth_hz, s))
        .collect();
    Ok(RsmaRates {
        sinr_common,
        sinr_private,
        rate_common_per_user,
        rate_common_cap,
        rate_private,
    })
}

pub fn split_common_rate(cap: f64, split: &CommonRateSplit) -> Result<Vec<f64>, RateError> {
    if !(cap.is_finite() && cap >= 0.0) {
        return Err(RateError::InconsistentAllocation { sum: f64::NAN, cap });
    }
    Ok(split.fractions.iter().map(|f| f * cap).collect())
}

pub fn achievable_rates(rates: RsmaRates, common_alloc: Vec<f64>) -> Result<RateReport, RateError> {
    let n = rates.rate_private.len();
    if common_alloc.len() != n {
        return Err(RateError::Length {
            expected: n,
            got: common_alloc.len(),
        });
    }
    let sum: f64 = common_alloc.iter().sum();
    let cap = rates.rate_common_cap;
    let negative = common_alloc.iter().any(|c| !(c.is_finite() && *c >= 0.0));
    if negative || (sum - cap).abs() > BUDGET_TOL * cap.max(1.0) {
        return Err(RateError::InconsistentAllocation { sum, cap });
    }
    let rate_achievable = rates
        .rate_private
        .iter()
        .zip(&common_alloc)
        .map(|(p, c)| p + c)
        .collect();
    Ok(RateReport {
        scheme: Scheme::Rsma,
        sinr_common: rates.sinr_common,
        sinr_private: rates.sinr_private,
        rate_common_per_user: rates.rate_common_per_user,
        rate_common_cap: cap,
        common_alloc,
        rate_private: rates.rate_private,
        rate_achievable,
    })
}

/// Full RSMA chain: SINRs, cap, split, achievable rates.
pub fn rsma_report(
    state: &ChannelState,
    alloc: &PowerAllocation,
    split: &CommonRateSplit,
    bandwidth_hz: f64,
) -> Result<RateReport, RateError> {
    let rates = rsma_rates(state, alloc, bandwidth_hz)?;
    if split.fractions.len() != state.num_users() {
        return Err(RateError::Length {
            expected: state.num_users(),
            got: split.fractions.len(),
        });
    }
    let alloc = split_common_rate(rates.rate_common_cap, split)?;
    achievable_rates(rates, alloc)
}

/// Per-user resources for the orthogonal and power-domain baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BaselineAllocation {
    Noma { powers: Vec<f64>, p_max_w: f64 },
    Ofdma { powers: Vec<f64>, shares: Vec<f64>, p_max_w: f64 },
}

impl BaselineAllocation {
    pub fn scheme(&self) -> Scheme {
        match self {
            BaselineAllocation::Noma { .. } => Scheme::Noma,
            BaselineAllocation::Ofdma { .. } => Scheme::Ofdma,
        }
    }
}

fn validate_user_powers(powers: &[f64], p_max_w: f64) -> Result<(), PowerViolation> {
    if !(p_max_w.is_finite() && p_max_w >= 0.0) {
        return Err(PowerViolation::InvalidBudget(p_max_w));
    }
    for (u, &p) in powers.iter().enumerate() {
        if !(p.is_finite() && p >= 0.0) {
            return Err(PowerViolation::Negative {
                stream: format!("user[{u}]"),
                value: p,
            });
        }
    }
    check_budget(powers.iter().sum(), p_max_w)
}

/// NOMA with SIC in ascending channel-power order: user `u` cancels every
/// weaker user and sees the strictly stronger users' power as interference.
pub fn noma_rates(
    state: &ChannelState,
    powers: &[f64],
    p_max_w: f64,
    bandwidth_hz: f64,
) -> Result<RateReport, RateError> {
    check_bandwidth(bandwidth_hz)?;
    validate_user_powers(powers, p_max_w)?;
    let n = state.num_users();
    if powers.len() != n {
        return Err(RateError::Length {
            expected: n,
            got: powers.len(),
        });
    }
    let g = &state.gain_power;
    let sinr: Vec<f64> = (0..n)
        .map(|u| {
            let interference: f64 = (0..n).filter(|&k| g[k] > g[u]).map(|k| powers[k]).sum();
            g[u] * powers[u] / (g[u] * interference + state.noise_power_w)
        })
        .collect();
    Ok(baseline_report(Scheme::Noma, sinr, bandwidth_hz, None))
}

/// OFDMA: user `u` owns `shares[u] * B` of the band and its noise scales with it.
pub fn ofdma_rates(
    state: &ChannelState,
    powers: &[f64],
    shares: &[f64],
    p_max_w: f64,
    bandwidth_hz: f64,
) -> Result<RateReport, RateError> {
    check_bandwidth(bandwidth_hz)?;
    validate_user_powers(powers, p_max_w)?;
    let n = state.num_users();
    for len in [powers.len(), shares.len()] {
        if len != n {
            return Err(RateError::Length { expected: n, got: len });
        }
    }
    if let Some(s) = shares.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(RateError::InvalidShares(format!("share {s} not in [0, 1]")));
    }
    let total: f64 = shares.iter().sum();
    if total > 1.0 + BUDGET_TOL {
        return Err(RateError::InvalidShares(format!("shares sum to {total}")));
    }
    // Noise over the full band divided by B gives the noise per Hz.
    let noise_per_hz = state.noise_power_w / bandwidth_hz;
    let sinr: Vec<f64> = (0..n)
        .map(|u| {
            if shares[u] == 0.0 {
                0.0
            } else {
                state.gain_power[u] * powers[u] / (noise_per_hz * shares[u] * bandwidth_hz)
            }
        })
        .collect();
    Ok(baseline_report(Scheme::Ofdma, sinr, bandwidth_hz, Some(shares)))
}

pub fn baseline_rates(
    state: &ChannelState,
    alloc: &BaselineAllocation,
    bandwidth_hz: f64,
) -> Result<RateReport, RateError> {
    match alloc {
        BaselineAllocation::Noma { powers, p_max_w } => {
            noma_rates(state, powers, *p_max_w, bandwidth_hz)
        }
        BaselineAllocation::Ofdma {
            powers,
            shares,
            p_max_w,
        } => ofdma_rates(state, powers, shares, *p_max_w, bandwidth_hz),
    }
}

fn baseline_report(
    scheme: Scheme,
    sinr: Vec<f64>,
    bandwidth_hz: f64,
    shares: Option<&[f64]>,
) -> RateReport {
    let n = sinr.len();
    let rates: Vec<f64> = sinr
        .iter()
        .enumerate()
        .map(|(u, &s)| match shares {
            Some(b) => shannon(b[u] * bandwidth_hz, s),
            None => shannon(bandwidth_hz, s),
        })
        .collect();
    RateReport {
        scheme,
        sinr_common: vec![0.0; n],
        sinr_private: sinr,
        rate_common_per_user: vec![0.0; n],
        rate_common_cap: 0.0,
        common_alloc: vec![0.0; n],
        rate_achievable: rates.clone(),
        rate_private: rates,
    }
}

pub const RATE_CSV_HEADER: [&str; 10] = [
    "slot", "user", "scheme", "sinr_c", "sinr_p", "r_c_user", "r_c_cap", "c_alloc", "r_p", "r_ach",
];

impl RateReport {
    pub fn num_users(&self) -> usize {
        self.rate_achievable.len()
    }

    /// CSV rows in the order of [`RATE_CSV_HEADER`].
    pub fn csv_rows(&self, slot: u64) -> Vec<[String; 10]> {
        (0..self.num_users())
            .map(|u| {
                [
                    slot.to_string(),
                    u.to_string(),
                    self.scheme.as_str().to_string(),
                    self.sinr_common[u].to_string(),
                    self.sinr_private[u].to_string(),
                    self.rate_common_per_user[u].to_string(),
                    self.rate_common_cap.to_string(),
                    self.common_alloc[u].to_string(),
                    self.rate_private[u].to_string(),
                    self.rate_achievable[u].to_string(),
                ]
            })
            .collect()
    }
}

pub fn write_rate_csv<W: Write>(out: W, reports: &[(u64, RateReport)]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RATE_CSV_HEADER)?;
    for (slot, report) in reports {
        for row in report.csv_rows(*slot) {
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}
