use super::{Bracket, Tolerance};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Bisection root of `f` on `bracket`.
///
/// Returns once the bracket half-width falls below `tol.abs_tol` or `f` vanishes
/// exactly at the midpoint.
pub fn find_root<T, F>(f: F, bracket: Bracket<T>, tol: &Tolerance<T>) -> Result<T>
where
    T: Real,
    F: Fn(T) -> T,
{
    let (mut lo, mut hi) = (bracket.lo(), bracket.hi());
    let f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == T::zero() {
        return Ok(lo);
    }
    if f_hi == T::zero() {
        return Ok(hi);
    }
    if !(f_lo * f_hi < T::zero()) {
        return Err(Error::NoSignChange {
            lo: lo.as_f64(),
            hi: hi.as_f64(),
        });
    }
    let lo_negative = f_lo < T::zero();
    let half = T::lit(0.5);
    for _ in 0..tol.max_iter {
        let mid = lo + (hi - lo) * half;
        if (hi - lo) * half <= tol.abs_tol || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == T::zero() {
            return Ok(mid);
        }
        if (fm < T::zero()) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence {
        routine: "find_root",
        iterations: tol.max_iter,
    })
}
