//! Code rate from an MMSE function: `R = (N/M_bar) int_0^inf phi(rho) drho`.

use super::mmse::{signal_mmse_asymptotic, transition_points};
use crate::error::{Error, Result};
use crate::numeric::{integrate_with_breaks, MonotoneCurve};
use crate::sparc::{CodeParams, PowerAllocation};

/// Source of the MMSE function to integrate.
#[derive(Debug, Clone, Copy)]
pub enum MmseModel<'a> {
    /// Piecewise asymptotic form of a power allocation; zero past the last
    /// transition.
    Asymptotic(&'a PowerAllocation),
    /// Tabulated curve; the tail past the last grid point is extrapolated as
    /// a power law fitted to the last two points.
    Curve(&'a MonotoneCurve),
    /// Gaussian prior `1/(1 + rho)`, whose integral diverges.
    Gaussian,
}

pub fn rate_from_mmse(model: MmseModel<'_>, params: &CodeParams) -> Result<f64> {
    let scale = params.n_len as f64 / params.m_bar as f64;
    match model {
        MmseModel::Asymptotic(pa) => {
            pa.check_against(params)?;
            let mut breaks = vec![0.0];
            breaks.extend(transition_points(pa.powers(), params.b).into_iter().filter(|t| t.is_finite()));
            breaks.dedup();
            if breaks.len() < 2 {
                return Ok(0.0);
            }
            let q = integrate_with_breaks(|r| signal_mmse_asymptotic(pa, params, r), &breaks, 1e-12, 0.0)?;
            Ok(scale * q.value)
        }
        MmseModel::Curve(c) => Ok(scale * curve_integral(c)?),
        MmseModel::Gaussian => Err(Error::Divergent("Gaussian-prior MMSE is not integrable on [0, inf)".into())),
    }
}

/// Closed-form rate of the asymptotic MMSE (sum of log ratios per piece).
pub fn asymptotic_rate_closed_form(pa: &PowerAllocation, params: &CodeParams) -> f64 {
    let t = transition_points(pa.powers(), params.b);
    let res = pa.residual_powers(params.n_len);
    let mut acc = 0.0;
    let mut start = 0.0;
    for (l, &end) in t.iter().enumerate() {
        if !end.is_finite() {
            break;
        }
        acc += ln_ratio(1.0 + end * res[l], 1.0 + start * res[l]);
        start = end;
    }
    params.n_len as f64 / params.m_bar as f64 * acc
}

/// `log(num / den)` without cancellation when the two are close.
fn ln_ratio(num: f64, den: f64) -> f64 {
    ((num - den) / den).ln_1p()
}

fn curve_integral(c: &MonotoneCurve) -> Result<f64> {
    let (x, y) = (c.grid(), c.values());
    let n = x.len();
    // trapezoid on the piecewise-linear interpolant is exact
    let mut body = 0.0;
    for k in 1..n {
        body += 0.5 * (y[k] + y[k - 1]) * (x[k] - x[k - 1]);
    }
    if x[0] > 0.0 {
        body += y[0] * x[0];
    }
    let (x1, x2, y1, y2) = (x[n - 2], x[n - 1], y[n - 2], y[n - 1]);
    if y2 == 0.0 {
        return Ok(body);
    }
    if !(y1 > 0.0 && y2 > 0.0 && x1 > 0.0) {
        return Err(Error::Divergent("cannot extrapolate the curve tail".into()));
    }
    let alpha = -(y2 / y1).ln() / (x2 / x1).ln();
    if !(alpha > 1.0) {
        return Err(Error::Divergent(format!("tail decays like rho^-{alpha:.3}, not integrable")));
    }
    Ok(body + y2 * x2 / (alpha - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gaussian_diverges() {
        let params = CodeParams::new(4, 2, 4, 2).unwrap();
        assert!(matches!(rate_from_mmse(MmseModel::Gaussian, &params), Err(Error::Divergent(_))));
    }

    #[test]
    fn power_law_tail() {
        // phi = 1/(1+rho)^2 integrates to 1
        let grid: Vec<f64> = (0..4000).map(|k| k as f64 * 0.01).collect();
        let c = MonotoneCurve::from_fn(grid, |r| (1.0 + r).powi(-2)).unwrap();
        let params = CodeParams::new(2, 1, 1, 2).unwrap();
        let r = rate_from_mmse(MmseModel::Curve(&c), &params).unwrap();
        assert!((r - 1.0).abs() < 1e-3, "{r}");
    }

    proptest! {
        #[test]
        fn asymptotic_rate_near_code_rate(raw in proptest::collection::vec(0.1f64..10.0, 1..40)) {
            let b = 1024;
            let l = raw.len();
            let params = CodeParams::new(b, l, l, l).unwrap();
            let pa = PowerAllocation::project(&raw, params.n_len).unwrap();
            let r = rate_from_mmse(MmseModel::Asymptotic(&pa), &params).unwrap();
            let closed = asymptotic_rate_closed_form(&pa, &params);
            prop_assert!((r - closed).abs() <= 1e-9 * closed);
            prop_assert!((r / params.rate_nats - 1.0).abs() <= 0.01);
        }

        #[test]
        fn rate_invariant_under_power_rescaling(c in 0.1f64..10.0) {
            // phi_c(rho) = c phi(c rho) integrates to the same value
            let params = CodeParams::new(64, 3, 8, 8).unwrap();
            let pa = PowerAllocation::project(&[3.0, 2.0, 1.0], params.n_len).unwrap();
            let base = rate_from_mmse(MmseModel::Asymptotic(&pa), &params).unwrap();
            let mut breaks = vec![0.0];
            breaks.extend(transition_points(pa.powers(), 64).iter().map(|t| t / c));
            let q = integrate_with_breaks(|r| c * signal_mmse_asymptotic(&pa, &params, c * r), &breaks, 1e-12, 0.0).unwrap();
            let scaled = params.n_len as f64 / params.m_bar as f64 * q.value;
            prop_assert!((scaled - base).abs() <= 1e-9 * base);
        }
    }
}
