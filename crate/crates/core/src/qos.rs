//! Per-user data size, delay, delay/quality scores and their weighted total,
//! plus empirical CDFs of score samples.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quality::QualityKind;
use crate::rsma::Scheme;

#[derive(Debug, Error, PartialEq)]
pub enum QosError {
    #[error("invalid qos config: {0}")]
    Config(String),
    #[error("score {name}={value} outside [0, 1]")]
    ScoreRange { name: &'static str, value: f64 },
    #[error("empty sample set")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QosConfig {
    /// Bytes per codeword symbol.
    pub lambda_bytes: f64,
    /// Steepness of the delay satisfaction curve, 1/s.
    pub zeta: f64,
    pub t_max_s: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// Weight of the delay score; the quality score gets `2 − κ`.
    pub kappa: f64,
}

impl Default for QosConfig {
    fn default() -> Self {
        Self::for_kind(QualityKind::WsPsnr)
    }
}

impl QosConfig {
    /// Defaults with quality bounds on the scale of the given metric.
    pub fn for_kind(kind: QualityKind) -> Self {
        let (q_min, q_max) = match kind {
            QualityKind::WsPsnr => (20.0, 35.0),
            QualityKind::WsSsim => (5.0, 13.0),
        };
        Self {
            lambda_bytes: 4.0,
            zeta: 500.0,
            t_max_s: 0.01,
            q_min,
            q_max,
            kappa: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), QosError> {
        let fail = |m: String| Err(QosError::Config(m));
        if !(self.lambda_bytes > 0.0) {
            return fail(format!("lambda_bytes must be positive, got {}", self.lambda_bytes));
        }
        if !(self.zeta > 0.0) {
            return fail(format!("zeta must be positive, got {}", self.zeta));
        }
        if !(self.t_max_s > 0.0) {
            return fail(format!("t_max_s must be positive, got {}", self.t_max_s));
        }
        if !(self.q_max > self.q_min) {
            return fail(format!("q_max {} must exceed q_min {}", self.q_max, self.q_min));
        }
        if !(0.0..=2.0).contains(&self.kappa) {
            return fail(format!("kappa must lie in [0, 2], got {}", self.kappa));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub data_bits: f64,
    #[serde(with = "crate::util::serde_nonfinite")]
    pub delay_s: f64,
    pub delay_score: f64,
    pub quality_db: f64,
    pub quality_score: f64,
    pub total: f64,
}

/// `D = 8·λ·k` bits and `T = D / R` seconds (`+inf` when `R = 0 < D`).
pub fn data_and_delay(cfg: &QosConfig, k: f64, rate_bps: f64) -> (f64, f64) {
    let bits = 8.0 * cfg.lambda_bytes * k;
    let delay = if bits == 0.0 { 0.0 } else { bits / rate_bps };
    (bits, delay)
}

/// Logistic satisfaction below the deadline, zero at or past it.
pub fn delay_score(cfg: &QosConfig, delay_s: f64) -> f64 {
    if delay_s < cfg.t_max_s {
        1.0 / (1.0 + (-cfg.zeta * (cfg.t_max_s - delay_s)).exp())
    } else {
        0.0
    }
}

pub fn quality_score(cfg: &QosConfig, q_db: f64) -> f64 {
    ((q_db - cfg.q_min) / (cfg.q_max - cfg.q_min)).clamp(0.0, 1.0)
}

pub fn total_score(cfg: &QosConfig, f_t: f64, f_q: f64) -> Result<f64, QosError> {
    for (name, value) in [("f_t", f_t), ("f_q", f_q)] {
        if !(0.0..=1.0).contains(&value) {
            return Err(QosError::ScoreRange { name, value });
        }
    }
    Ok(cfg.kappa * f_t + (2.0 - cfg.kappa) * f_q)
}

/// Full breakdown for one user in one slot.
pub fn score(cfg: &QosConfig, k: f64, rate_bps: f64, quality_db: f64) -> ScoreBreakdown {
    let (data_bits, delay_s) = data_and_delay(cfg, k, rate_bps);
    let delay_score = delay_score(cfg, delay_s);
    let quality_score = quality_score(cfg, quality_db);
    let total = total_score(cfg, delay_score, quality_score).expect("scores lie in [0, 1]");
    ScoreBreakdown {
        data_bits,
        delay_s,
        delay_score,
        quality_db,
        quality_score,
        total,
    }
}

/// Right-continuous empirical CDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    /// Distinct sorted sample values.
    pub thresholds: Vec<f64>,
    /// Fraction of samples `≤` the matching threshold.
    pub fractions: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn eval(&self, x: f64) -> f64 {
        let idx = self.thresholds.partition_point(|&t| t <= x);
        if idx == 0 { 0.0 } else { self.fractions[idx - 1] }
    }

    /// `self` first-order stochastically dominates `other`: its CDF lies on
    /// or below the other's everywhere.
    pub fn dominates(&self, other: &EmpiricalCdf) -> bool {
        self.thresholds
            .iter()
            .chain(&other.thresholds)
            .all(|&x| self.eval(x) <= other.eval(x))
    }
}

pub fn score_cdf(scores: &[f64]) -> Result<EmpiricalCdf, QosError> {
    if scores.is_empty() {
        return Err(QosError::Empty);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut thresholds: Vec<f64> = Vec::new();
    let mut fractions = Vec::new();
    for (k, v) in sorted.iter().enumerate() {
        if thresholds.last() == Some(v) {
            *fractions.last_mut().unwrap() = (k + 1) as f64 / n;
        } else {
            thresholds.push(*v);
            fractions.push((k + 1) as f64 / n);
        }
    }
    Ok(EmpiricalCdf {
        thresholds,
        fractions,
    })
}

pub const SCORE_CSV_HEADER: &str = "slot,user,scheme,data_bits,delay_s,f_t,q_db,f_q,total";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRow {
    pub slot: usize,
    pub user: usize,
    pub scheme: Scheme,
    pub score: ScoreBreakdown,
}

pub fn write_score_csv<W: Write>(mut out: W, rows: &[ScoreRow]) -> std::io::Result<()> {
    writeln!(out, "{SCORE_CSV_HEADER}")?;
    for r in rows {
        let s = &r.score;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.slot,
            r.user,
            r.scheme.as_str(),
            s.data_bits,
            s.delay_s,
            s.delay_score,
            s.quality_db,
            s.quality_score,
            s.total
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn data_and_delay_examples() {
        let cfg = QosConfig::default();
        let (d, t) = data_and_delay(&cfg, 1e5, 4e8);
        assert_abs_diff_eq!(d, 3.2e6, epsilon = 1e-6);
        assert_abs_diff_eq!(t, 0.008, epsilon = 1e-15);
        assert_eq!(data_and_delay(&cfg, 0.0, 0.0), (0.0, 0.0));
        assert_eq!(data_and_delay(&cfg, 5.0, 0.0).1, f64::INFINITY);
    }

    #[test]
    fn delay_score_examples() {
        let cfg = QosConfig::default();
        assert_eq!(delay_score(&cfg, 0.01), 0.0);
        assert_eq!(delay_score(&cfg, 0.5), 0.0);
        assert_eq!(delay_score(&cfg, f64::INFINITY), 0.0);
        assert_abs_diff_eq!(delay_score(&cfg, 0.0), 0.9933, epsilon = 1e-4);
        assert_abs_diff_eq!(delay_score(&cfg, 0.01 - 1e-12), 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(delay_score(&cfg, 0.008), 0.731, epsilon = 1e-3);
    }

    #[test]
    fn quality_and_total_examples() {
        let cfg = QosConfig::default();
        assert_eq!(quality_score(&cfg, 35.0), 1.0);
        assert_eq!(quality_score(&cfg, 27.5), 0.5);
        assert_eq!(quality_score(&cfg, 10.0), 0.0);
        assert_eq!(total_score(&cfg, 0.5, 0.5).unwrap(), 1.0);
        for kappa in [0.0, 0.7, 2.0] {
            let c = QosConfig { kappa, ..cfg };
            assert_eq!(total_score(&c, 1.0, 1.0).unwrap(), 2.0);
        }
        let c = QosConfig { kappa: 2.0, ..cfg };
        assert_abs_diff_eq!(total_score(&c, 0.3, 0.9).unwrap(), 0.6, epsilon = 1e-15);
        assert!(total_score(&cfg, 1.2, 0.0).is_err());
    }

    #[test]
    fn cdf_examples() {
        let c = score_cdf(&[1.0, 2.0, 3.0]).unwrap();
        assert_abs_diff_eq!(c.eval(2.0), 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(c.eval(0.5), 0.0);
        assert_eq!(c.eval(3.0), 1.0);
        let c = score_cdf(&[0.4; 5]).unwrap();
        assert_eq!(c.thresholds, vec![0.4]);
        assert_eq!(c.fractions, vec![1.0]);
        assert_eq!(score_cdf(&[]), Err(QosError::Empty));
        let low = score_cdf(&[0.1, 0.2]).unwrap();
        let high = score_cdf(&[0.3, 0.4]).unwrap();
        assert!(high.dominates(&low));
        assert!(!low.dominates(&high));
    }

    #[test]
    fn config_validation() {
        assert!(QosConfig::default().validate().is_ok());
        assert!(QosConfig::for_kind(QualityKind::WsSsim).validate().is_ok());
        let bad = QosConfig {
            q_max: 10.0,
            ..QosConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = QosConfig {
            kappa: 2.5,
            ..QosConfig::default()
        };
        assert!(bad.validate().is_err());
        let err = serde_json::from_str::<QosConfig>(r#"{"kapa": 1}"#).unwrap_err();
        assert!(err.to_string().contains("kapa"));
    }

    #[test]
    fn score_csv_layout() {
        let s = score(&QosConfig::default(), 1e5, 4e8, 30.0);
        let mut buf = Vec::new();
        write_score_csv(
            &mut buf,
            &[ScoreRow {
                slot: 3,
                user: 1,
                scheme: Scheme::Rsma,
                score: s,
            }],
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(SCORE_CSV_HEADER));
        assert!(lines.next().unwrap().starts_with("3,1,rsma,3200000,0.008,"));
    }

    proptest! {
        #[test]
        fn score_monotonicity(
            t1 in 0.0f64..0.05, t2 in 0.0f64..0.05,
            tmax1 in 0.001f64..0.05, tmax2 in 0.001f64..0.05,
            q in 0.0f64..50.0, qmin1 in 0.0f64..30.0, qmin2 in 0.0f64..30.0,
            kappa in 0.0f64..=2.0,
        ) {
            let cfg = QosConfig { kappa, ..QosConfig::default() };
            let (lo, hi) = (t1.min(t2), t1.max(t2));
            prop_assert!(delay_score(&cfg, hi) <= delay_score(&cfg, lo));
            let (a, b) = (tmax1.min(tmax2), tmax1.max(tmax2));
            let ca = QosConfig { t_max_s: a, ..cfg };
            let cb = QosConfig { t_max_s: b, ..cfg };
            prop_assert!(delay_score(&cb, t1) >= delay_score(&ca, t1));
            let (a, b) = (qmin1.min(qmin2), qmin1.max(qmin2));
            let ca = QosConfig { q_min: a, q_max: 40.0, ..cfg };
            let cb = QosConfig { q_min: b, q_max: 40.0, ..cfg };
            prop_assert!(quality_score(&cb, q) <= quality_score(&ca, q));
            let s = score(&cfg, 1e5 * q, 4e8, q);
            prop_assert!((0.0..=2.0).contains(&s.total));
        }

        #[test]
        fn cdf_is_right_continuous_step(vals in prop::collection::vec(-5.0f64..5.0, 1..40), x in -6.0f64..6.0) {
            let c = score_cdf(&vals).unwrap();
            let count = vals.iter().filter(|&&v| v <= x).count() as f64;
            prop_assert!((c.eval(x) - count / vals.len() as f64).abs() < 1e-12);
            prop_assert_eq!(*c.fractions.last().unwrap(), 1.0);
        }
    }
}
