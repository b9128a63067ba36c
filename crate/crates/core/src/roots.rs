//! Bracketed scalar root finding.

use crate::error::{Error, Result};

/// Stopping rule for [`bisect`].
#[derive(Debug, Clone, Copy)]
pub struct BisectionTol {
    /// Absolute bracket width at which to stop.
    pub width: f64,
    pub max_iter: usize,
}

impl Default for BisectionTol {
    fn default() -> Self {
        Self {
            width: 1e-13,
            max_iter: 200,
        }
    }
}

/// Bisection on `[lo, hi]`; `f(lo)` and `f(hi)` must have opposite signs
/// (a zero at either end is returned directly).
pub fn bisect<F>(f: F, mut lo: f64, mut hi: f64, tol: BisectionTol) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if !(f_lo.is_finite() && f_hi.is_finite()) || f_lo.signum() == f_hi.signum() {
        return Err(Error::NoBracket { lo, hi });
    }
    for _ in 0..tol.max_iter {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol.width || mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
