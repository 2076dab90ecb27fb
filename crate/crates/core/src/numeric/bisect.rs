use crate::error::{Error, Result};

/// Bisection on a validated bracket `[lo, hi]`.
///
/// `f(lo)` and `f(hi)` must have opposite signs (or one of them be zero).
/// Iterates until the bracket width drops below `x_tol` or 200 halvings.
pub fn bisect<F>(mut f: F, mut lo: f64, mut hi: f64, x_tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::Bracket(format!("non-finite bracket [{lo}, {hi}]")));
    }
    if lo > hi {
        std::mem::swap(&mut lo, &mut hi);
    }
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo.is_nan() || fhi.is_nan() {
        return Err(Error::NonFinite("bisection endpoint"));
    }
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::Bracket(format!(
            "no sign change on [{lo:e}, {hi:e}]: f = ({flo:e}, {fhi:e})"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= x_tol || mid == lo || mid == hi {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm.is_nan() {
            return Err(Error::NonFinite("bisection midpoint"));
        }
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Root of a monotone function on `[lower, +inf)` starting from the guess
/// bracket `[lower, start]`; the upper end doubles until a sign change shows
/// up (at most `max_doublings` times).
pub fn find_root_expanding<F>(
    mut f: F,
    lower: f64,
    start: f64,
    x_tol: f64,
    max_doublings: usize,
) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let f_lower = f(lower);
    if f_lower == 0.0 {
        return Ok(lower);
    }
    let mut hi = start.max(lower + f64::EPSILON.max(lower.abs() * 1e-12));
    let mut f_hi = f(hi);
    let mut k = 0;
    while f_hi.signum() == f_lower.signum() && f_hi != 0.0 {
        if k >= max_doublings {
            return Err(Error::Bracket(format!(
                "no sign change on [{lower:e}, {hi:e}]: f = ({f_lower:e}, {f_hi:e})"
            )));
        }
        let width = (hi - lower).max(1e-300);
        hi = lower + 2.0 * width;
        f_hi = f(hi);
        k += 1;
    }
    bisect(f, lower, hi, x_tol)
}
