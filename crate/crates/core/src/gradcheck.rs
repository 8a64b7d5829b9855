//! Central finite-difference checks for the hand-written gradients.

use crate::par;

/// Perturbation used for central differences.
pub const FD_STEP: f64 = 1e-6;
/// Denominator floor in the relative error, so near-zero gradients are
/// compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

/// Central-difference estimate of `∂f/∂θ_i` for every `i`.
pub fn numeric_gradient(f: impl Fn(&[f64]) -> f64 + Sync, params: &[f64]) -> Vec<f64> {
    par::map_range(params.len(), |i| {
        let mut p = params.to_vec();
        p[i] = params[i] + FD_STEP;
        let up = f(&p);
        p[i] = params[i] - FD_STEP;
        let down = f(&p);
        (up - down) / (2.0 * FD_STEP)
    })
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Largest relative error over all coordinates.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic.iter().zip(numeric).map(|(a, n)| relative_error(*a, *n)).fold(0.0, f64::max)
}
