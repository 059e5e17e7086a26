//! Single-cell downlink channel: user placement, path loss, Rayleigh fading
//! and per-slot channel gains.
//!
//! Large-scale fading follows `PL = 32.4 + 20 log10(fc_GHz) + 21 log10(d_m)`
//! and small-scale fading is a unit-variance circularly symmetric complex
//! Gaussian, so the effective coefficient is `h = h' * 10^(-PL/20)`.

use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum user distance in meters. Keeps the path-loss logarithm finite.
pub const MIN_DISTANCE_M: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid channel parameter `{name}`: {value}")]
    InvalidParam { name: &'static str, value: f64 },
    #[error("path loss undefined for fc={fc_ghz} GHz, d={d_m} m")]
    Domain { fc_ghz: f64, d_m: f64 },
    #[error("deployment has {got} users, parameters expect {expected}")]
    UserCountMismatch { expected: usize, got: usize },
    #[error("user index {index} out of range ({len} users)")]
    UserIndex { index: usize, len: usize },
    #[error("negative transmit power {0} W")]
    NegativePower(f64),
    #[error("csv output: {0}")]
    Io(String),
}

/// Physical-layer parameters of the cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    pub carrier_freq_ghz: f64,
    pub bandwidth_hz: f64,
    pub cell_radius_m: f64,
    pub tx_psd_dbm_hz: f64,
    pub noise_psd_dbm_hz: f64,
    pub num_users: usize,
    /// Lag-1 correlation of the small-scale fading between slots.
    pub fading_correlation: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            carrier_freq_ghz: 2.6,
            bandwidth_hz: 200e6,
            cell_radius_m: 20.0,
            tx_psd_dbm_hz: -53.0,
            noise_psd_dbm_hz: -143.0,
            num_users: 6,
            fading_correlation: 0.0,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let positive = [
            ("carrier_freq_ghz", self.carrier_freq_ghz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("cell_radius_m", self.cell_radius_m),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ChannelError::InvalidParam { name, value });
            }
        }
        for (name, value) in [
            ("tx_psd_dbm_hz", self.tx_psd_dbm_hz),
            ("noise_psd_dbm_hz", self.noise_psd_dbm_hz),
        ] {
            if !value.is_finite() {
                return Err(ChannelError::InvalidParam { name, value });
            }
        }
        if self.cell_radius_m < MIN_DISTANCE_M {
            return Err(ChannelError::InvalidParam {
                name: "cell_radius_m",
                value: self.cell_radius_m,
            });
        }
        if self.num_users == 0 {
            return Err(ChannelError::InvalidParam {
                name: "num_users",
                value: 0.0,
            });
        }
        if !(0.0..1.0).contains(&self.fading_correlation) {
            return Err(ChannelError::InvalidParam {
                name: "fading_correlation",
                value: self.fading_correlation,
            });
        }
        Ok(())
    }

    /// Total transmit power `P_max` over the whole band, in watts.
    pub fn tx_power_w(&self) -> f64 {
        dbm_to_watts(self.tx_psd_dbm_hz + 10.0 * self.bandwidth_hz.log10())
    }

    /// Noise power over the whole band, in watts.
    pub fn noise_power_w(&self) -> f64 {
        dbm_to_watts(self.noise_psd_dbm_hz + 10.0 * self.bandwidth_hz.log10())
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

/// User positions relative to the base station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserDeployment {
    pub positions: Vec<[f64; 2]>,
    pub distances: Vec<f64>,
}

impl UserDeployment {
    pub fn from_positions(positions: Vec<[f64; 2]>) -> Self {
        let distances = positions
            .iter()
            .map(|p| p[0].hypot(p[1]).max(MIN_DISTANCE_M))
            .collect();
        Self {
            positions,
            distances,
        }
    }

    pub fn num_users(&self) -> usize {
        self.positions.len()
    }
}

/// Scatters `num_users` points uniformly over the cell disk.
///
/// A Poisson process conditioned on its count is uniform i.i.d. placement.
/// Points are drawn on the annulus `[MIN_DISTANCE_M, R]` so the distance
/// floor never distorts the radial law.
pub fn place_users(params: &ChannelParams, seed: u64) -> Result<UserDeployment, ChannelError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(place_users_with(params, &mut rng))
}

pub fn place_users_with<R: Rng + ?Sized>(params: &ChannelParams, rng: &mut R) -> UserDeployment {
    let r_min2 = MIN_DISTANCE_M * MIN_DISTANCE_M;
    let r_max2 = params.cell_radius_m * params.cell_radius_m;
    let mut positions = Vec::with_capacity(params.num_users);
    let mut distances = Vec::with_capacity(params.num_users);
    for _ in 0..params.num_users {
        let u: f64 = rng.random();
        let theta = std::f64::consts::TAU * rng.random::<f64>();
        let r = (r_min2 + u * (r_max2 - r_min2)).sqrt();
        positions.push([r * theta.cos(), r * theta.sin()]);
        distances.push(r);
    }
    UserDeployment {
        positions,
        distances,
    }
}

pub fn path_loss_db(fc_ghz: f64, d_m: f64) -> Result<f64, ChannelError> {
    if !(fc_ghz > 0.0 && d_m > 0.0) || !fc_ghz.is_finite() || !d_m.is_finite() {
        return Err(ChannelError::Domain { fc_ghz, d_m });
    }
    Ok(32.4 + 20.0 * fc_ghz.log10() + 21.0 * d_m.log10())
}

/// One slot of the wireless environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    /// Effective coefficients `h = h' * 10^(-PL/20)`.
    pub gains: Vec<Complex64>,
    /// `|h|^2`, linear.
    pub gain_power: Vec<f64>,
    /// Small-scale fading `h'` (unit variance); carried for Gauss-Markov updates.
    pub fading: Vec<Complex64>,
    pub noise_power_w: f64,
    pub slot_index: u64,
}

impl ChannelState {
    /// Builds a state directly from channel powers (real, nonnegative gains).
    pub fn from_gain_power(gain_power: Vec<f64>, noise_power_w: f64) -> Self {
        let gains: Vec<Complex64> = gain_power
            .iter()
            .map(|g| Complex64::new(g.sqrt(), 0.0))
            .collect();
        let gain_power = gains.iter().map(|h| h.norm_sqr()).collect();
        Self {
            fading: gains.clone(),
            gains,
            gain_power,
            noise_power_w,
            slot_index: 0,
        }
    }

    pub fn num_users(&self) -> usize {
        self.gains.len()
    }
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draws the channel for one slot.
///
/// With `prev` set and a positive fading correlation `rho`, the small-scale
/// term follows `h'_t = rho h'_{t-1} + sqrt(1 - rho^2) w_t`.
pub fn sample_channel(
    params: &ChannelParams,
    deployment: &UserDeployment,
    prev: Option<&ChannelState>,
    seed: u64,
) -> Result<ChannelState, ChannelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_channel_with(params, deployment, prev, &mut rng)
}

pub fn sample_channel_with<R: Rng + ?Sized>(
    params: &ChannelParams,
    deployment: &UserDeployment,
    prev: Option<&ChannelState>,
    rng: &mut R,
) -> Result<ChannelState, ChannelError> {
    params.validate()?;
    let n = params.num_users;
    if deployment.num_users() != n {
        return Err(ChannelError::UserCountMismatch {
            expected: n,
            got: deployment.num_users(),
        });
    }
    if let Some(p) = prev {
        if p.num_users() != n {
            return Err(ChannelError::UserCountMismatch {
                expected: n,
                got: p.num_users(),
            });
        }
    }
    let rho = params.fading_correlation;
    let mut fading = Vec::with_capacity(n);
    let mut gains = Vec::with_capacity(n);
    let mut gain_power = Vec::with_capacity(n);
    for u in 0..n {
        let innovation = complex_gaussian(rng);
        let h_small = match prev {
            Some(p) if rho > 0.0 => p.fading[u] * rho + innovation * (1.0 - rho * rho).sqrt(),
            _ => innovation,
        };
        let pl = path_loss_db(params.carrier_freq_ghz, deployment.distances[u])?;
        let h = h_small * 10f64.powf(-pl / 20.0);
        fading.push(h_small);
        gain_power.push(h.norm_sqr());
        gains.push(h);
    }
    Ok(ChannelState {
        gains,
        gain_power,
        fading,
        noise_power_w: params.noise_power_w(),
        slot_index: prev.map_or(0, |p| p.slot_index + 1),
    })
}

/// Receive SNR in dB for `user` when it gets all of `tx_power_w`.
/// Zero power yields `f64::NEG_INFINITY`.
pub fn snr_db(state: &ChannelState, tx_power_w: f64, user: usize) -> Result<f64, ChannelError> {
    if tx_power_w < 0.0 {
        return Err(ChannelError::NegativePower(tx_power_w));
    }
    let g = *state.gain_power.get(user).ok_or(ChannelError::UserIndex {
        index: user,
        len: state.num_users(),
    })?;
    if tx_power_w == 0.0 || g == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(10.0 * (g * tx_power_w / state.noise_power_w).log10())
}

/// Writes `slot,user,distance_m,path_loss_db,gain_re,gain_im,gain_power,noise_power_w` rows.
pub fn write_channel_csv<W: Write>(
    out: W,
    params: &ChannelParams,
    deployment: &UserDeployment,
    states: &[ChannelState],
) -> Result<(), ChannelError> {
    let io = |e: csv::Error| ChannelError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "slot",
        "user",
        "distance_m",
        "path_loss_db",
        "gain_re",
        "gain_im",
        "gain_power",
        "noise_power_w",
    ])
    .map_err(io)?;
    for state in states {
        for (u, h) in state.gains.iter().enumerate() {
            let d = deployment.distances[u];
            let pl = path_loss_db(params.carrier_freq_ghz, d)?;
            w.write_record([
                state.slot_index.to_string(),
                u.to_string(),
                d.to_string(),
                pl.to_string(),
                h.re.to_string(),
                h.im.to_string(),
                state.gain_power[u].to_string(),
                state.noise_power_w.to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| ChannelError::Io(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn path_loss_reference_points() {
        assert_abs_diff_eq!(path_loss_db(1.0, 1.0).unwrap(), 32.4, epsilon = 1e-12);
        assert_abs_diff_eq!(path_loss_db(2.6, 20.0).unwrap(), 68.021, epsilon = 1e-3);
        assert_abs_diff_eq!(path_loss_db(2.6, 10.0).unwrap(), 61.699, epsilon = 1e-3);
        assert!(path_loss_db(0.0, 1.0).is_err());
        assert!(path_loss_db(2.6, -1.0).is_err());
    }

    #[test]
    fn path_loss_strictly_increasing() {
        let mut prev = path_loss_db(2.6, 1.0).unwrap();
        for i in 1..200 {
            let d = 1.0 + i as f64 * 0.1;
            let pl = path_loss_db(2.6, d).unwrap();
            assert!(pl > prev);
            prev = pl;
        }
        assert!(path_loss_db(2.7, 5.0).unwrap() > path_loss_db(2.6, 5.0).unwrap());
    }

    #[test]
    fn placement_within_radius() {
        let params = ChannelParams::default();
        let dep = place_users(&params, 7).unwrap();
        assert_eq!(dep.num_users(), 6);
        for (p, d) in dep.positions.iter().zip(&dep.distances) {
            assert!(*d <= 20.0 && *d >= MIN_DISTANCE_M);
            assert_abs_diff_eq!(p[0].hypot(p[1]), *d, epsilon = 1e-12);
        }
        let one = place_users(&ChannelParams { num_users: 1, ..params.clone() }, 0).unwrap();
        assert_eq!(one.num_users(), 1);
        assert!(one.distances[0] <= 20.0);
        assert_eq!(place_users(&params, 7).unwrap(), dep);
    }

    #[test]
    fn mean_distance_matches_uniform_disk() {
        let params = ChannelParams {
            num_users: 100_000,
            ..Default::default()
        };
        let dep = place_users(&params, 11).unwrap();
        let mean = dep.distances.iter().sum::<f64>() / dep.distances.len() as f64;
        assert_abs_diff_eq!(mean, 2.0 * 20.0 / 3.0, epsilon = 0.1);
    }

    #[test]
    fn noise_and_tx_power_from_psd() {
        let params = ChannelParams::default();
        assert_abs_diff_eq!(watts_to_dbm(params.noise_power_w()), -59.990, epsilon = 1e-3);
        assert_abs_diff_eq!(params.noise_power_w(), 1.0024e-9, epsilon = 1e-12);
        // -53 dBm/Hz over 200 MHz is 30.0103 dBm.
        assert_abs_diff_eq!(params.tx_power_w(), 1.002374, epsilon = 1e-6);
    }

    #[test]
    fn gain_power_is_squared_magnitude() {
        let params = ChannelParams::default();
        let dep = place_users(&params, 3).unwrap();
        let mut prev: Option<ChannelState> = None;
        for t in 0..50 {
            let s = sample_channel(&params, &dep, prev.as_ref(), t).unwrap();
            for (h, g) in s.gains.iter().zip(&s.gain_power) {
                assert_eq!(h.norm_sqr(), *g);
            }
            assert!(s.noise_power_w > 0.0);
            prev = Some(s);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let params = ChannelParams::default();
        let dep = place_users(&params, 3).unwrap();
        let a = sample_channel(&params, &dep, None, 99).unwrap();
        let b = sample_channel(&params, &dep, None, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fading_has_unit_variance() {
        let params = ChannelParams {
            num_users: 1,
            ..Default::default()
        };
        let dep = UserDeployment::from_positions(vec![[1.0, 0.0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let s = sample_channel_with(&params, &dep, None, &mut rng).unwrap();
            acc += s.fading[0].norm_sqr();
        }
        assert_abs_diff_eq!(acc / n as f64, 1.0, epsilon = 0.02);
    }

    fn lag1_autocorrelation(rho: f64) -> f64 {
        let params = ChannelParams {
            num_users: 1,
            fading_correlation: rho,
            ..Default::default()
        };
        let dep = UserDeployment::from_positions(vec![[3.0, 4.0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut prev = sample_channel_with(&params, &dep, None, &mut rng).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for _ in 0..100_000 {
            let next = sample_channel_with(&params, &dep, Some(&prev), &mut rng).unwrap();
            num += (next.fading[0] * prev.fading[0].conj()).re;
            den += prev.fading[0].norm_sqr();
            prev = next;
        }
        num / den
    }

    #[test]
    fn gauss_markov_correlation() {
        assert_abs_diff_eq!(lag1_autocorrelation(0.0), 0.0, epsilon = 0.05);
        assert_abs_diff_eq!(lag1_autocorrelation(0.99), 1.0, epsilon = 0.05);
    }

    #[test]
    fn mismatched_deployment_rejected() {
        let params = ChannelParams::default();
        let dep = UserDeployment::from_positions(vec![[1.0, 0.0]]);
        assert!(matches!(
            sample_channel(&params, &dep, None, 0),
            Err(ChannelError::UserCountMismatch { .. })
        ));
    }

    #[test]
    fn snr_examples() {
        let s = ChannelState::from_gain_power(vec![1.0, 8e-6], 1e-9);
        assert_abs_diff_eq!(snr_db(&s, 1e-9, 0).unwrap(), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(snr_db(&s, 1.0, 1).unwrap(), 39.03, epsilon = 0.01);
        assert_eq!(snr_db(&s, 0.0, 1).unwrap(), f64::NEG_INFINITY);
        assert!(snr_db(&s, 1.0, 2).is_err());
    }

    #[test]
    fn csv_has_one_row_per_user_and_slot() {
        let params = ChannelParams::default();
        let dep = place_users(&params, 1).unwrap();
        let s0 = sample_channel(&params, &dep, None, 1).unwrap();
        let s1 = sample_channel(&params, &dep, Some(&s0), 2).unwrap();
        let mut buf = Vec::new();
        write_channel_csv(&mut buf, &params, &dep, &[s0, s1]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(
            lines[0],
            "slot,user,distance_m,path_loss_db,gain_re,gain_im,gain_power,noise_power_w"
        );
        assert_eq!(lines.len(), 1 + 12);
        assert!(lines[7].starts_with("1,0,"));
    }
}
