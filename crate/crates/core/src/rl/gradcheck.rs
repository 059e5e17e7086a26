//! Finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::Rng;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// `|a − n| / max(|a|, |n|, floor)`; the floor keeps near-zero components
/// from dominating through rounding noise.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `grad` against central differences of `loss` at the given
/// coordinates.
pub fn grad_check(
    params: &[f64],
    grad: &[f64],
    loss: impl Fn(&[f64]) -> f64,
    coords: &[usize],
    step: f64,
    floor: f64,
) -> GradCheckReport {
    let mut p = params.to_vec();
    let mut worst = (0.0, coords.first().copied().unwrap_or(0));
    for &i in coords {
        let orig = p[i];
        p[i] = orig + step;
        let up = loss(&p);
        p[i] = orig - step;
        let down = loss(&p);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let err = relative_error(grad[i], numeric, floor);
        if err > worst.0 || err.is_nan() {
            worst = (if err.is_nan() { f64::INFINITY } else { err }, i);
        }
    }
    GradCheckReport {
        max_rel_error: worst.0,
        worst_index: worst.1,
        checked: coords.len(),
    }
}

/// Up to `k` distinct coordinates out of `n`.
pub fn sample_coords<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    let mut v = sample(rng, n, k.min(n)).into_vec();
    v.sort_unstable();
    v
}
