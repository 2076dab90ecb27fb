//! Globally adaptive Gauss-Kronrod (7/15) quadrature.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_SEGMENTS: usize = 4000;

/// Integral estimate with its error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut resk = fc * WGK[7];
    let mut resg = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(center - dx) + f(center + dx);
        resk += WGK[j] * s;
        if j % 2 == 1 {
            resg += WG[j / 2] * s;
        }
    }
    let value = resk * half;
    let error = ((resk - resg) * half).abs();
    (value, error)
}

/// Integrate `f` over `[a, b]` to `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<F>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<Integral>
where
    F: FnMut(f64) -> f64,
{
    integrate_with_breaks(f, &[a, b], rel_tol, abs_tol)
}

/// Like [`integrate`], but the initial partition uses the given sorted
/// breakpoints (discontinuities of `f` should be listed here).
pub fn integrate_with_breaks<F>(
    mut f: F,
    breaks: &[f64],
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Integral>
where
    F: FnMut(f64) -> f64,
{
    if breaks.len() < 2 {
        return Err(Error::InvalidArgument("need at least two breakpoints".into()));
    }
    let mut segs: Vec<Segment> = Vec::new();
    let mut evaluations = 0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if !(a.is_finite() && b.is_finite()) || b < a {
            return Err(Error::InvalidArgument(format!("bad interval [{a}, {b}]")));
        }
        if b == a {
            continue;
        }
        let (value, error) = kronrod(&mut f, a, b);
        evaluations += 15;
        segs.push(Segment { a, b, value, error });
    }
    loop {
        let total: f64 = segs.iter().map(|s| s.value).sum();
        let err: f64 = segs.iter().map(|s| s.error).sum();
        if !total.is_finite() {
            return Err(Error::NonFinite("quadrature integrand"));
        }
        let tol = abs_tol.max(rel_tol * total.abs());
        if err <= tol {
            return Ok(Integral { value: total, error: err, evaluations });
        }
        if segs.len() >= MAX_SEGMENTS {
            return Err(Error::Quadrature { estimate: total, error: err });
        }
        let (worst, _) = segs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("non-empty");
        let s = segs.swap_remove(worst);
        let mid = 0.5 * (s.a + s.b);
        if mid <= s.a || mid >= s.b {
            // interval no longer divisible in floating point
            return Err(Error::Quadrature { estimate: total, error: err });
        }
        let (v1, e1) = kronrod(&mut f, s.a, mid);
        let (v2, e2) = kronrod(&mut f, mid, s.b);
        evaluations += 30;
        segs.push(Segment { a: s.a, b: mid, value: v1, error: e1 });
        segs.push(Segment { a: mid, b: s.b, value: v2, error: e2 });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| x.powi(5) - 3.0 * x * x, 0.0, 2.0, 1e-12, 0.0).unwrap();
        assert!((r.value - (64.0 / 6.0 - 8.0)).abs() < 1e-13);
    }

    #[test]
    fn endpoint_singularity_resolves() {
        // int_0^1 x^{-1/2} dx = 2
        let r = integrate(|x| 1.0 / x.sqrt(), 0.0, 1.0, 1e-8, 0.0).unwrap();
        assert!((r.value - 2.0).abs() < 1e-7, "{:?}", r);
    }

    #[test]
    fn breakpoints_handle_jumps() {
        let f = |x: f64| if x < 0.3 { 1.0 } else { 2.0 };
        let r = integrate_with_breaks(f, &[0.0, 0.3, 1.0], 1e-12, 0.0).unwrap();
        assert!((r.value - 1.7).abs() < 1e-12);
    }
}
