//! Surrogate for the codec's quality function `Q = f(cbr, snr)`.
//!
//! Two forms are provided: a closed-form logistic default whose constants
//! are synthetic calibrations to the typical WS-PSNR / WS-SSIM ranges, and a
//! least-squares bivariate polynomial fitted from samples.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest channel bandwidth ratio: 96 dimensions over a 16×-downsampled
/// three-channel frame, `96 / (16·16·3)`.
pub const O_MAX: f64 = 0.125;

#[derive(Debug, Error)]
pub enum QualityError {
    #[error("cbr {cbr} outside (0, {o_max}]")]
    CbrOutOfRange { cbr: f64, o_max: f64 },
    #[error("snr is NaN")]
    NanSnr,
    #[error("need at least {needed} samples for degree {degree}, got {got}")]
    TooFewSamples {
        needed: usize,
        degree: usize,
        got: usize,
    },
    #[error("degenerate sample support: rank {rank} < {terms} terms")]
    RankDeficient { rank: usize, terms: usize },
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("sample file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityKind {
    WsPsnr,
    WsSsim,
}

impl QualityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            QualityKind::WsPsnr => "ws_psnr",
            QualityKind::WsSsim => "ws_ssim",
        }
    }
}

impl fmt::Display for QualityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QualityKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "ws_psnr" => Ok(QualityKind::WsPsnr),
            "ws_ssim" => Ok(QualityKind::WsSsim),
            other => Err(format!("unknown quality kind {other:?} (expected ws_psnr or ws_ssim)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualitySample {
    pub cbr: f64,
    pub snr_db: f64,
    pub quality_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum SurrogateForm {
    /// `q0 + a·ln(1 + b·o/o_max) + c·σ((ϑ − ϑ0)/s)`.
    Logistic {
        q0: f64,
        a: f64,
        b: f64,
        c: f64,
        theta0: f64,
        s: f64,
    },
    /// `Σ_{i,j ≤ degree} coeffs[i·(degree+1) + j] · o^i · ϑ^j`, evaluated
    /// with inputs clamped to the fitted support.
    Polynomial {
        degree: usize,
        coeffs: Vec<f64>,
        cbr_range: [f64; 2],
        snr_range: [f64; 2],
        fit_residual: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub kind: QualityKind,
    pub o_max: f64,
    #[serde(flatten)]
    pub form: SurrogateForm,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn default_surrogate(kind: QualityKind) -> SurrogateModel {
    let form = match kind {
        QualityKind::WsPsnr => SurrogateForm::Logistic {
            q0: 18.0,
            a: 4.0,
            b: 20.0,
            c: 6.0,
            theta0: 2.0,
            s: 3.0,
        },
        QualityKind::WsSsim => SurrogateForm::Logistic {
            q0: 4.0,
            a: 2.2,
            b: 20.0,
            c: 3.0,
            theta0: 2.0,
            s: 3.0,
        },
    };
    SurrogateModel {
        kind,
        o_max: O_MAX,
        form,
    }
}

impl SurrogateModel {
    pub fn degree(&self) -> Option<usize> {
        match &self.form {
            SurrogateForm::Polynomial { degree, .. } => Some(*degree),
            SurrogateForm::Logistic { .. } => None,
        }
    }

    pub fn fit_residual(&self) -> Option<f64> {
        match &self.form {
            SurrogateForm::Polynomial { fit_residual, .. } => Some(*fit_residual),
            SurrogateForm::Logistic { .. } => None,
        }
    }

    pub fn to_json(&self) -> Result<String, QualityError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, QualityError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), QualityError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, QualityError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Quality in dB at `(cbr, snr_db)`; `snr_db = -inf` yields the noise floor.
pub fn eval_quality(model: &SurrogateModel, cbr: f64, snr_db: f64) -> Result<f64, QualityError> {
    if !(cbr > 0.0 && cbr <= model.o_max) {
        return Err(QualityError::CbrOutOfRange {
            cbr,
            o_max: model.o_max,
        });
    }
    if snr_db.is_nan() {
        return Err(QualityError::NanSnr);
    }
    Ok(match &model.form {
        SurrogateForm::Logistic {
            q0,
            a,
            b,
            c,
            theta0,
            s,
        } => q0 + a * (1.0 + b * cbr / model.o_max).ln() + c * logistic((snr_db - theta0) / s),
        SurrogateForm::Polynomial {
            degree,
            coeffs,
            cbr_range,
            snr_range,
            ..
        } => {
            let o = cbr.clamp(cbr_range[0], cbr_range[1]);
            let t = snr_db.clamp(snr_range[0], snr_range[1]);
            basis(o, t, *degree).iter().zip(coeffs).map(|(x, c)| x * c).sum()
        }
    })
}

fn basis(o: f64, t: f64, degree: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity((degree + 1) * (degree + 1));
    for i in 0..=degree {
        for j in 0..=degree {
            out.push(o.powi(i as i32) * t.powi(j as i32));
        }
    }
    out
}

/// Least-squares fit of a tensor-product polynomial of the given degree.
pub fn fit_surrogate(
    kind: QualityKind,
    samples: &[QualitySample],
    degree: usize,
) -> Result<SurrogateModel, QualityError> {
    let terms = (degree + 1) * (degree + 1);
    if samples.len() < terms {
        return Err(QualityError::TooFewSamples {
            needed: terms,
            degree,
            got: samples.len(),
        });
    }
    for s in samples {
        if !(s.cbr > 0.0) || !s.snr_db.is_finite() || !s.quality_db.is_finite() {
            return Err(QualityError::InvalidSample(format!("{s:?}")));
        }
    }
    let n = samples.len();
    let mut a = DMatrix::from_fn(n, terms, |r, c| basis(samples[r].cbr, samples[r].snr_db, degree)[c]);
    let y = DVector::from_iterator(n, samples.iter().map(|s| s.quality_db));

    // Column equilibration keeps the monomials of very different magnitude
    // comparable before the decomposition.
    let scales: Vec<f64> = (0..terms)
        .map(|c| {
            let norm = a.column(c).norm();
            if norm > 0.0 { norm } else { 1.0 }
        })
        .collect();
    for (c, s) in scales.iter().enumerate() {
        a.column_mut(c).scale_mut(1.0 / s);
    }
    let svd = a.clone().svd(true, true);
    let sv_max = svd.singular_values.max();
    let tol = sv_max * 1e-10 * n.max(terms) as f64;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < terms {
        return Err(QualityError::RankDeficient { rank, terms });
    }
    let scaled = svd.solve(&y, tol).expect("svd computed with u and v");
    let coeffs: Vec<f64> = scaled.iter().zip(&scales).map(|(c, s)| c / s).collect();

    let fitted = &a * &scaled;
    let fit_residual = ((&fitted - &y).norm_squared() / n as f64).sqrt();
    let bounds = |f: fn(&QualitySample) -> f64| {
        samples
            .iter()
            .map(f)
            .fold([f64::INFINITY, f64::NEG_INFINITY], |[lo, hi], v| [lo.min(v), hi.max(v)])
    };
    let cbr_range = bounds(|s| s.cbr);
    let o_max = O_MAX.max(cbr_range[1]);
    Ok(SurrogateModel {
        kind,
        o_max,
        form: SurrogateForm::Polynomial {
            degree,
            coeffs,
            cbr_range,
            snr_range: bounds(|s| s.snr_db),
            fit_residual,
        },
    })
}

/// Samples a model on a `cbr_points × snr_points` grid spanning the given
/// closed ranges.
pub fn sample_grid(
    model: &SurrogateModel,
    cbr_range: [f64; 2],
    snr_range: [f64; 2],
    cbr_points: usize,
    snr_points: usize,
) -> Result<Vec<QualitySample>, QualityError> {
    let lin = |r: [f64; 2], n: usize, k: usize| {
        if n == 1 {
            r[0]
        } else {
            r[0] + (r[1] - r[0]) * k as f64 / (n - 1) as f64
        }
    };
    let mut out = Vec::with_capacity(cbr_points * snr_points);
    for i in 0..cbr_points {
        for j in 0..snr_points {
            let cbr = lin(cbr_range, cbr_points, i);
            let snr_db = lin(snr_range, snr_points, j);
            out.push(QualitySample {
                cbr,
                snr_db,
                quality_db: eval_quality(model, cbr, snr_db)?,
            });
        }
    }
    Ok(out)
}

pub const SAMPLE_CSV_HEADER: &str = "cbr,snr_db,quality_db";

pub fn write_samples<W: Write>(
    mut out: W,
    kind: QualityKind,
    samples: &[QualitySample],
) -> Result<(), QualityError> {
    writeln!(out, "# kind: {kind}")?;
    writeln!(out, "{SAMPLE_CSV_HEADER}")?;
    for s in samples {
        writeln!(out, "{},{},{}", s.cbr, s.snr_db, s.quality_db)?;
    }
    Ok(())
}

/// Reads a sample file: a `# kind: <ws_psnr|ws_ssim>` line, the CSV header,
/// then one sample per row.
pub fn read_samples<R: BufRead>(input: R) -> Result<(QualityKind, Vec<QualitySample>), QualityError> {
    let mut lines = input.lines().enumerate();
    let parse_err = |line: usize, message: String| QualityError::Parse { line: line + 1, message };

    let (n, first) = lines.next().ok_or_else(|| parse_err(0, "empty file".into()))?;
    let first = first?;
    let kind = first
        .trim()
        .strip_prefix('#')
        .and_then(|rest| rest.trim().strip_prefix("kind:"))
        .ok_or_else(|| parse_err(n, format!("expected '# kind: ...', found {first:?}")))?
        .parse::<QualityKind>()
        .map_err(|e| parse_err(n, e))?;

    let (n, header) = lines.next().ok_or_else(|| parse_err(1, "missing header".into()))?;
    let header = header?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != ["cbr", "snr_db", "quality_db"] {
        return Err(parse_err(n, format!("expected header {SAMPLE_CSV_HEADER:?}, found {header:?}")));
    }

    let mut samples = Vec::new();
    for (n, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(parse_err(n, format!("expected 3 fields, found {}", fields.len())));
        }
        let num = |k: usize| {
            fields[k]
                .parse::<f64>()
                .map_err(|_| parse_err(n, format!("bad number {:?}", fields[k])))
        };
        samples.push(QualitySample {
            cbr: num(0)?,
            snr_db: num(1)?,
            quality_db: num(2)?,
        });
    }
    Ok((kind, samples))
}
