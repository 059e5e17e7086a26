//! Spherically weighted quality metrics for equirectangular frames, and the
//! latitude-adaptive weight and dimension-budget functions on feature grids.
//!
//! Rows are weighted by `w(i) = cos((i - H/2 + 1/2) π / H)`, which undoes
//! the oversampling of high latitudes by the projection.

use std::f64::consts::PI;

use thiserror::Error;

use crate::frame::Frame;
use crate::grid::Grid;

/// Side of the square SSIM window.
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
/// Default ceiling applied by [`cap_db`] for plotting pipelines.
pub const DEFAULT_DB_CAP: f64 = 100.0;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
    #[error("frame {height}x{width} smaller than the {window}x{window} window")]
    TooSmall {
        height: usize,
        width: usize,
        window: usize,
    },
    #[error("value out of range: {0}")]
    Range(String),
}

/// Per-pixel weights; each row carries a single weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    width: usize,
    row_weights: Vec<f64>,
}

impl WeightMap {
    pub fn uniform(height: usize, width: usize) -> Self {
        Self {
            width,
            row_weights: vec![1.0; height],
        }
    }

    pub fn height(&self) -> usize {
        self.row_weights.len()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row_weights(&self) -> &[f64] {
        &self.row_weights
    }

    pub fn get(&self, i: usize, _j: usize) -> f64 {
        self.row_weights[i]
    }

    pub fn to_grid(&self) -> Grid {
        Grid::from_fn(self.height(), self.width, |i, _| self.row_weights[i])
    }
}

pub fn latitude_weights(height: usize, width: usize) -> WeightMap {
    let h = height as f64;
    let row_weights = (0..height)
        .map(|i| ((i as f64 - h / 2.0 + 0.5) * PI / h).cos())
        .collect();
    WeightMap { width, row_weights }
}

fn check_pair(x: &Frame, y: &Frame) -> Result<(), MetricError> {
    let dx = (x.height(), x.width(), x.channels());
    let dy = (y.height(), y.width(), y.channels());
    if dx != dy || x.bit_depth() != y.bit_depth() {
        return Err(MetricError::Dimensions(format!(
            "{dx:?}@{}bit vs {dy:?}@{}bit",
            x.bit_depth(),
            y.bit_depth()
        )));
    }
    Ok(())
}

fn check_weights(x: &Frame, w: &WeightMap) -> Result<(), MetricError> {
    if (w.height(), w.width()) != (x.height(), x.width()) {
        return Err(MetricError::Dimensions(format!(
            "weights {}x{} vs frame {}x{}",
            w.height(),
            w.width(),
            x.height(),
            x.width()
        )));
    }
    Ok(())
}

/// Weighted MSE per channel, averaged over channels.
pub fn wmse(x: &Frame, y: &Frame, w: &WeightMap) -> Result<f64, MetricError> {
    check_pair(x, y)?;
    check_weights(x, w)?;
    let (h, wd, ch) = (x.height(), x.width(), x.channels());
    let weight_sum: f64 = w.row_weights.iter().sum::<f64>() * wd as f64;
    let mut per_channel = vec![0.0; ch];
    for i in 0..h {
        let wi = w.row_weights[i];
        let mut row = vec![0.0; ch];
        for j in 0..wd {
            for (c, acc) in row.iter_mut().enumerate() {
                let d = y.get(i, j, c) - x.get(i, j, c);
                *acc += d * d;
            }
        }
        for (c, acc) in per_channel.iter_mut().enumerate() {
            *acc += wi * row[c];
        }
    }
    Ok(per_channel.iter().map(|s| s / weight_sum).sum::<f64>() / ch as f64)
}

/// `10 log10(MAX² / WMSE)` with `MAX` the bit-depth ceiling; `+inf` when
/// the frames are identical.
pub fn ws_psnr(x: &Frame, y: &Frame) -> Result<f64, MetricError> {
    ws_psnr_with(x, y, &latitude_weights(x.height(), x.width()))
}

pub fn ws_psnr_with(x: &Frame, y: &Frame, w: &WeightMap) -> Result<f64, MetricError> {
    let mse = wmse(x, y, w)?;
    Ok(psnr_from_mse(mse, x.max_value()))
}

pub fn psnr_from_mse(mse: f64, max_value: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (max_value * max_value / mse).log10()
    }
}

/// Normalised 11-tap Gaussian.
fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut taps = [0.0; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as f64;
    for (k, t) in taps.iter_mut().enumerate() {
        let d = k as f64 - r;
        *t = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

/// Valid-mode separable Gaussian filter of a `h × w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut horiz = vec![0.0; h * ow];
    for i in 0..h {
        let row = &plane[i * w..(i + 1) * w];
        for j in 0..ow {
            horiz[i * ow + j] = taps.iter().zip(&row[j..j + SSIM_WINDOW]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            out[i * ow + j] = (0..SSIM_WINDOW).map(|k| taps[k] * horiz[(i + k) * ow + j]).sum();
        }
    }
    out
}

/// Weighted mean SSIM over all 11×11 windows, each window weighted by the
/// latitude weight of its centre row. Returns the ratio
/// `Σ SSIM_k w_k / Σ w_k`, averaged over channels.
pub fn ws_ssim_ratio(x: &Frame, y: &Frame, w: &WeightMap) -> Result<f64, MetricError> {
    check_pair(x, y)?;
    check_weights(x, w)?;
    let (h, wd) = (x.height(), x.width());
    if h < SSIM_WINDOW || wd < SSIM_WINDOW {
        return Err(MetricError::TooSmall {
            height: h,
            width: wd,
            window: SSIM_WINDOW,
        });
    }
    let max = x.max_value();
    let c1 = (SSIM_K1 * max).powi(2);
    let c2 = (SSIM_K2 * max).powi(2);
    let taps = gaussian_taps();
    let (oh, ow) = (h - SSIM_WINDOW + 1, wd - SSIM_WINDOW + 1);
    let half = SSIM_WINDOW / 2;
    let center_weight_sum: f64 = (0..oh).map(|i| w.row_weights[i + half]).sum::<f64>() * ow as f64;

    let mut ratio_sum = 0.0;
    for c in 0..x.channels() {
        let px = x.plane(c);
        let py = y.plane(c);
        let sq = |p: &[f64]| p.iter().map(|v| v * v).collect::<Vec<_>>();
        let xy: Vec<f64> = px.iter().zip(&py).map(|(a, b)| a * b).collect();
        let mu_x = filter_valid(&px, h, wd, &taps);
        let mu_y = filter_valid(&py, h, wd, &taps);
        let e_xx = filter_valid(&sq(&px), h, wd, &taps);
        let e_yy = filter_valid(&sq(&py), h, wd, &taps);
        let e_xy = filter_valid(&xy, h, wd, &taps);
        let mut weighted = 0.0;
        for i in 0..oh {
            let wc = w.row_weights[i + half];
            let mut row = 0.0;
            for j in 0..ow {
                let k = i * ow + j;
                let (mx, my) = (mu_x[k], mu_y[k]);
                let vx = e_xx[k] - mx * mx;
                let vy = e_yy[k] - my * my;
                let cov = e_xy[k] - mx * my;
                let lum = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
                let cs = (2.0 * cov + c2) / (vx + vy + c2);
                row += lum * cs;
            }
            weighted += wc * row;
        }
        ratio_sum += weighted / center_weight_sum;
    }
    Ok(ratio_sum / x.channels() as f64)
}

/// `-10 log10(1 - ratio)`; `+inf` for identical frames.
pub fn ws_ssim(x: &Frame, y: &Frame) -> Result<f64, MetricError> {
    ws_ssim_with(x, y, &latitude_weights(x.height(), x.width()))
}

pub fn ws_ssim_with(x: &Frame, y: &Frame, w: &WeightMap) -> Result<f64, MetricError> {
    let ratio = ws_ssim_ratio(x, y, w)?;
    if x.pixels() == y.pixels() {
        return Ok(f64::INFINITY);
    }
    Ok(ssim_ratio_to_db(ratio))
}

pub fn ssim_ratio_to_db(ratio: f64) -> f64 {
    let residual = 1.0 - ratio;
    if residual <= 0.0 {
        f64::INFINITY
    } else {
        -10.0 * residual.log10()
    }
}

pub fn cap_db(value: f64, cap: f64) -> f64 {
    value.min(cap)
}

/// Renders a metric for CSV output; infinities become `inf`.
pub fn format_db(value: f64) -> String {
    if value == f64::INFINITY {
        "inf".to_string()
    } else {
        value.to_string()
    }
}

/// Adaptive average pooling of the pixel weights onto an `out_rows × out_cols`
/// feature grid: each output cell averages its contiguous input span.
pub fn adaptive_pool_weights(w: &WeightMap, out_rows: usize, out_cols: usize) -> Result<Grid, MetricError> {
    let (h, wd) = (w.height(), w.width());
    if out_rows == 0 || out_cols == 0 || out_rows > h || out_cols > wd {
        return Err(MetricError::Dimensions(format!(
            "cannot pool {h}x{wd} to {out_rows}x{out_cols}"
        )));
    }
    let span = |i: usize, n: usize, m: usize| (i * n / m, ((i + 1) * n).div_ceil(m));
    Ok(Grid::from_fn(out_rows, out_cols, |i, _| {
        // Column-constant weights: the column span does not change the mean.
        let (r0, r1) = span(i, h, out_rows);
        w.row_weights[r0..r1].iter().sum::<f64>() / (r1 - r0) as f64
    }))
}

fn check_unit(name: &str, g: &Grid) -> Result<(), MetricError> {
    if let Some(v) = g.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(MetricError::Range(format!("{name} entry {v} not in [0, 1]")));
    }
    Ok(())
}

fn check_same(a: &Grid, b: &Grid) -> Result<(), MetricError> {
    if a.dims() != b.dims() {
        return Err(MetricError::Dimensions(format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

/// `ω = η · w_AAP + 1 − η`, elementwise.
pub fn adaptive_weight_map(eta: &Grid, w_aap: &Grid) -> Result<Grid, MetricError> {
    check_same(eta, w_aap)?;
    check_unit("eta", eta)?;
    check_unit("w_aap", w_aap)?;
    Ok(Grid::from_fn(eta.rows(), eta.cols(), |i, j| {
        let e = eta.get(i, j);
        (1.0 - e) + e * w_aap.get(i, j)
    }))
}

/// Hinge loss of a per-point dimension budget.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetReport {
    /// `Σ max(0, ω · cap − value)`.
    pub loss: f64,
    /// Points whose value stays within `ω · cap`.
    pub within_cap: Vec<bool>,
    /// Points where the hinge is active (`value < ω · cap`).
    pub below_cap: Vec<bool>,
}

fn hinge_budget(values: &Grid, omega: &Grid, cap: f64) -> BudgetReport {
    let mut loss = 0.0;
    let mut within_cap = Vec::with_capacity(values.as_slice().len());
    let mut below_cap = Vec::with_capacity(values.as_slice().len());
    for (v, o) in values.as_slice().iter().zip(omega.as_slice()) {
        let limit = o * cap;
        loss += (limit - v).max(0.0);
        within_cap.push(*v <= limit);
        below_cap.push(*v < limit);
    }
    BudgetReport {
        loss,
        within_cap,
        below_cap,
    }
}

/// Dimension budget against `ω · max(Q)`.
pub fn latitude_budget(l_map: &Grid, omega: &Grid, q_max: f64) -> Result<BudgetReport, MetricError> {
    check_same(l_map, omega)?;
    if !(q_max > 0.0) {
        return Err(MetricError::Range(format!("q_max {q_max} must be positive")));
    }
    Ok(hinge_budget(l_map, omega, q_max))
}

/// Entropy surrogate of the dimension budget, against `ω · max(e)`.
pub fn latitude_budget_entropy(e_map: &Grid, omega: &Grid) -> Result<BudgetReport, MetricError> {
    check_same(e_map, omega)?;
    Ok(hinge_budget(e_map, omega, e_map.max()))
}
