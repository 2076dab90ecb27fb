use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Gaussianity check of `r - s` against the predicted variance `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecouplingReport {
    /// `||r - s||^2 / (N tau)`.
    pub variance_ratio: f64,
    /// Correlation of sorted real parts with normal quantiles.
    pub normality_re: f64,
    pub normality_im: f64,
}

impl DecouplingReport {
    pub fn normality(&self) -> f64 {
        self.normality_re.min(self.normality_im)
    }
}

fn quantile_correlation(mut x: Vec<f64>) -> f64 {
    let n = x.len();
    if n < 3 {
        return f64::NAN;
    }
    x.sort_by(f64::total_cmp);
    let std = Normal::standard();
    let q: Vec<f64> = (0..n).map(|i| std.inverse_cdf((i as f64 + 0.5) / n as f64)).collect();
    let mx = x.iter().sum::<f64>() / n as f64;
    let mq = q.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(&q) {
        sxy += (a - mx) * (b - mq);
        sxx += (a - mx) * (a - mx);
        syy += (b - mq) * (b - mq);
    }
    sxy / (sxx * syy).sqrt()
}

pub fn decoupling_diagnostics(r: &[Complex64], s: &[Complex64], tau: f64) -> DecouplingReport {
    let resid: Vec<Complex64> = r.iter().zip(s).map(|(a, b)| a - b).collect();
    let var = resid.iter().map(|z| z.norm_sqr()).sum::<f64>() / resid.len() as f64;
    DecouplingReport {
        variance_ratio: var / tau,
        normality_re: quantile_correlation(resid.iter().map(|z| z.re).collect()),
        normality_im: quantile_correlation(resid.iter().map(|z| z.im).collect()),
    }
}
