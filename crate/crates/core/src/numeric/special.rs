//! Normal-distribution helpers.

use statrs::function::erf::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// `ln erfc(x)`, accurate for large positive `x` where `erfc` underflows.
pub fn ln_erfc(x: f64) -> f64 {
    if x < 25.0 {
        erfc(x).ln()
    } else {
        // asymptotic series: erfc(x) ~ exp(-x^2)/(x sqrt(pi)) (1 - 1/(2x^2) + 3/(4x^4))
        let x2 = x * x;
        -x2 - (x * PI.sqrt()).ln() + (1.0 - 0.5 / x2 + 0.75 / (x2 * x2)).ln()
    }
}

/// `ln Phi(x)` without cancellation in either tail.
pub fn ln_norm_cdf(x: f64) -> f64 {
    if x < -5.0 {
        ln_erfc(-x * FRAC_1_SQRT_2) - std::f64::consts::LN_2
    } else {
        (-0.5 * erfc(x * FRAC_1_SQRT_2)).ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_values() {
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((norm_cdf(1.959963984540054) - 0.975).abs() < 5e-12);
    }

    #[test]
    fn ln_cdf_is_continuous_across_branch() {
        let a = ln_norm_cdf(-5.0 - 1e-9);
        let b = ln_norm_cdf(-5.0 + 1e-9);
        assert!((a - b).abs() < 1e-6 * a.abs());
        assert!((ln_norm_cdf(-40.0) - (-804.608_442_013_754)).abs() < 1e-6);
    }

    #[test]
    fn ln_erfc_branches_agree() {
        let x = 24.999_999;
        let direct = erfc(x).ln();
        let asym = {
            let x2 = x * x;
            -x2 - (x * PI.sqrt()).ln() + (1.0 - 0.5 / x2 + 0.75 / (x2 * x2)).ln()
        };
        assert!((direct - asym).abs() < 1e-6 * direct.abs());
    }
}
