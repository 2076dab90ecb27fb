//! Fixed points of the MMSE inverse against the VTF, and the coding gap.

use serde::{Deserialize, Serialize};

use super::transform::VtfCurve;
use crate::numeric::bisect;

/// Default floor reported when no fixed point exists.
pub const DEFAULT_XI_FLOOR: f64 = 1e-8;
const SCAN_POINTS_PER_DECADE: usize = 60;

/// Largest `xi` in `(floor, 1)` with `phi_inv(xi) = vtf(xi)`, i.e. where the
/// state evolution started at `xi = 1` gets stuck. Scans downward from 1 on a
/// logarithmic grid for the first point with `phi_inv >= vtf` and bisects
/// the bracketing cell; returns `floor` when there is no crossing.
pub fn fixed_point_mse<P, F>(phi_inv: P, vtf: F, floor: f64) -> f64
where
    P: Fn(f64) -> f64,
    F: Fn(f64) -> f64,
{
    let d = |xi: f64| phi_inv(xi) - vtf(xi);
    let decades = -floor.log10();
    let steps = (decades * SCAN_POINTS_PER_DECADE as f64).ceil().max(1.0) as usize;
    let mut prev = 1.0 - 1e-12;
    if d(prev) >= 0.0 {
        return prev;
    }
    for k in 1..=steps {
        let xi = (floor.ln() * k as f64 / steps as f64).exp();
        if d(xi) >= 0.0 {
            return bisect(d, xi, prev, 1e-14 * prev).unwrap_or(xi);
        }
        prev = xi;
    }
    floor
}

/// Same fixed point located through the forward map: for `xi` below the
/// prior variance, `phi_inv(xi) >= F(xi)` exactly when `phi(F(xi)) >= xi`,
/// which avoids inverting `phi`.
pub fn fixed_point_forward<P, F>(phi: P, vtf: F, floor: f64) -> f64
where
    P: Fn(f64) -> f64,
    F: Fn(f64) -> f64,
{
    let d = |xi: f64| phi(vtf(xi)) - xi;
    let decades = -floor.log10();
    let steps = (decades * SCAN_POINTS_PER_DECADE as f64).ceil().max(1.0) as usize;
    let mut prev = 1.0 - 1e-12;
    if d(prev) >= 0.0 {
        return prev;
    }
    for k in 1..=steps {
        let xi = (floor.ln() * k as f64 / steps as f64).exp();
        if d(xi) >= 0.0 {
            return bisect(d, xi, prev, 1e-14 * prev).unwrap_or(xi);
        }
        prev = xi;
    }
    floor
}

/// Pointwise comparison of `phi_inv` with `min{F, 1/xi - 1}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapReport {
    pub min_gap: f64,
    pub max_gap: f64,
    /// `int (phi - phi_inv) dxi` over the grid (trapezoid).
    pub integral: f64,
    /// `integral N_u / M_bar`, the rate shortfall `R^sup - R`.
    pub shortfall: f64,
    /// `phi_inv < phi` on every grid point below the prior variance, so
    /// the state evolution runs to the floor.
    pub fixed_point_free: bool,
    /// `xi` where the gap is smallest.
    pub argmin: f64,
}

/// Log-spaced `xi` grid on `[floor, 1]`, ascending.
pub fn xi_grid(floor: f64, points_per_decade: usize) -> Vec<f64> {
    let steps = (-floor.log10() * points_per_decade as f64).ceil() as usize;
    (0..=steps).map(|k| (floor.ln() * (1.0 - k as f64 / steps as f64)).exp()).collect()
}

/// Gap `phi(xi) - phi_inv(xi)` on `grid` (ascending, inside `(0, 1]`).
pub fn coding_gap<P: Fn(f64) -> f64>(phi_inv: P, vtf: &VtfCurve, grid: &[f64], n_len: usize, m_bar: usize) -> GapReport {
    let gaps: Vec<f64> = grid
        .iter()
        .map(|&xi| {
            let target = if xi >= 1.0 { 0.0 } else { vtf.effective(xi) };
            target - phi_inv(xi)
        })
        .collect();
    let mut integral = 0.0;
    for k in 1..grid.len() {
        integral += 0.5 * (gaps[k] + gaps[k - 1]) * (grid[k] - grid[k - 1]);
    }
    let (mut min_gap, mut argmin) = (f64::INFINITY, f64::NAN);
    for (&g, &x) in gaps.iter().zip(grid) {
        if g < min_gap {
            min_gap = g;
            argmin = x;
        }
    }
    let max_gap = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let fixed_point_free = gaps.iter().zip(grid).all(|(&g, &x)| x >= 1.0 || g > 0.0 || phi_inv(x) == 0.0 && g >= 0.0);
    GapReport {
        min_gap,
        max_gap,
        integral,
        shortfall: integral * n_len as f64 / m_bar as f64,
        fixed_point_free,
        argmin,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::mmse::gaussian_mmse_inv;

    #[test]
    fn gaussian_against_constant_vtf() {
        for snr in [0.5, 3.0, 40.0] {
            let xi = fixed_point_mse(gaussian_mmse_inv, |_| snr, DEFAULT_XI_FLOOR);
            assert!((xi - 1.0 / (1.0 + snr)).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_and_inverse_scans_agree() {
        let phi = |r: f64| 0.9 / (1.0 + r);
        let phi_inv = |x: f64| if x >= 0.9 { 0.0 } else { 0.9 / x - 1.0 };
        let f = |x: f64| 2.0 + 0.5 / x.sqrt();
        let a = fixed_point_mse(phi_inv, f, 1e-8);
        let b = fixed_point_forward(phi, f, 1e-8);
        assert!((a - b).abs() < 1e-12 && a > 0.1);
    }

    #[test]
    fn no_crossing_returns_floor() {
        let xi = fixed_point_mse(|x| 0.1 * (1.0 - x), |_| 5.0, 1e-6);
        assert_eq!(xi, 1e-6);
    }

    #[test]
    fn two_crossings_pick_the_larger() {
        // d(xi) = phi_inv - F is positive exactly on (0.2, 0.5)
        let xi = fixed_point_mse(|x| -(x - 0.2) * (x - 0.5), |_| 0.0, 1e-8);
        assert!((xi - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_gap_when_matched() {
        let vtf = VtfCurve::from_samples(vec![0.001, 0.5], vec![10.0, 1.0], 10.0).unwrap();
        let grid = xi_grid(1e-4, 20);
        let r = coding_gap(|x| vtf.effective(x), &vtf, &grid, 10, 10);
        assert_eq!(r.max_gap, 0.0);
        assert_eq!(r.shortfall, 0.0);
    }
}
