//! Independent reference implementations used as test oracles. They follow
//! the textbook definitions directly (no separable filters, no shared
//! helpers with the library) so agreement is meaningful.
#![allow(dead_code)]

use rand::Rng;
use rsma360::frame::Frame;

pub fn oracle_row_weight(i: usize, h: usize) -> f64 {
    let hf = h as f64;
    ((i as f64 + 0.5 - hf / 2.0) * std::f64::consts::PI / hf).cos()
}

/// `10 log10(MAX² / WMSE)` with WMSE accumulated over all samples at once.
pub fn oracle_ws_psnr(x: &Frame, y: &Frame, weight: impl Fn(usize) -> f64) -> f64 {
    let (h, w, c) = (x.height(), x.width(), x.channels());
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..h {
        for j in 0..w {
            for k in 0..c {
                let d = x.get(i, j, k) - y.get(i, j, k);
                num += weight(i) * d * d;
                den += weight(i);
            }
        }
    }
    let mse = num / den;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        let m = x.max_value();
        10.0 * (m * m / mse).log10()
    }
}

/// Direct 11×11 Gaussian-window SSIM, each window weighted by the weight of
/// its centre row, averaged over channels, mapped to `-10 log10(1 - r)`.
pub fn oracle_ws_ssim(x: &Frame, y: &Frame, weight: impl Fn(usize) -> f64) -> f64 {
    const N: usize = 11;
    const SIGMA: f64 = 1.5;
    let r = (N / 2) as i64;
    let mut kernel = [[0.0; N]; N];
    let mut ksum = 0.0;
    for (a, row) in kernel.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            let (da, db) = ((a as i64 - r) as f64, (b as i64 - r) as f64);
            *v = (-(da * da + db * db) / (2.0 * SIGMA * SIGMA)).exp();
            ksum += *v;
        }
    }
    let m = x.max_value();
    let c1 = (0.01 * m) * (0.01 * m);
    let c2 = (0.03 * m) * (0.03 * m);
    let (h, w, ch) = (x.height(), x.width(), x.channels());
    let mut total = 0.0;
    for k in 0..ch {
        let mut num = 0.0;
        let mut den = 0.0;
        for i0 in 0..=h - N {
            for j0 in 0..=w - N {
                let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for a in 0..N {
                    for b in 0..N {
                        let g = kernel[a][b] / ksum;
                        let px = x.get(i0 + a, j0 + b, k);
                        let py = y.get(i0 + a, j0 + b, k);
                        mx += g * px;
                        my += g * py;
                        sxx += g * px * px;
                        syy += g * py * py;
                        sxy += g * px * py;
                    }
                }
                let vx = sxx - mx * mx;
                let vy = syy - my * my;
                let cov = sxy - mx * my;
                let s = (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                let wc = weight(i0 + N / 2);
                num += wc * s;
                den += wc;
            }
        }
        total += num / den;
    }
    let ratio = total / ch as f64;
    if x.pixels() == y.pixels() {
        f64::INFINITY
    } else {
        -10.0 * (1.0 - ratio).log10()
    }
}

/// Random 8-bit frame pair; `y` is `x` plus bounded noise.
pub fn random_pair<R: Rng>(rng: &mut R, h: usize, w: usize, channels: usize) -> (Frame, Frame) {
    let x: Vec<u16> = (0..h * w * channels).map(|_| rng.random_range(0..=255)).collect();
    let amp = rng.random_range(1..60);
    let y: Vec<u16> = x
        .iter()
        .map(|&v| (v as i32 + rng.random_range(-amp..=amp)).clamp(0, 255) as u16)
        .collect();
    (
        Frame::new(h, w, channels, 8, x).unwrap(),
        Frame::new(h, w, channels, 8, y).unwrap(),
    )
}

/// `G_i = Σ_j γ^j r_{i+j}`, summing forward until (and including) the first done.
pub fn oracle_returns(r: &[f64], d: &[bool], gamma: f64) -> Vec<f64> {
    (0..r.len())
        .map(|i| {
            let mut g = 0.0;
            for j in i..r.len() {
                g += gamma.powi((j - i) as i32) * r[j];
                if d[j] {
                    break;
                }
            }
            g
        })
        .collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }
}
