use std::f64::consts::{FRAC_1_SQRT_2, PI};

use super::{find_root, Bracket, Tolerance};
use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Below this argument `ln Φ` switches to the asymptotic Mills-ratio series.
const LOG_CDF_ASYMPTOTIC: f64 = -30.0;

/// Standard normal cumulative distribution function Φ(z).
///
/// Backed by the `libm` port of the FreeBSD `erfc`, so the relative error is at
/// the level of a few ulps in double precision over the whole real line.
pub fn normal_cdf<T: Real>(z: T) -> T {
    if z.is_nan() {
        return z;
    }
    T::lit(0.5 * libm::erfc(-z.as_f64() * FRAC_1_SQRT_2))
}

pub fn normal_pdf<T: Real>(z: T) -> T {
    let z = z.as_f64();
    T::lit((-0.5 * z * z).exp() / (2.0 * PI).sqrt())
}

/// Natural logarithm of Φ(z), accurate far into the lower tail where Φ underflows.
pub fn log_normal_cdf<T: Real>(z: T) -> T {
    if z.is_nan() {
        return z;
    }
    let x = z.as_f64();
    let value = if x > 0.0 {
        (-0.5 * libm::erfc(x * FRAC_1_SQRT_2)).ln_1p()
    } else if x >= LOG_CDF_ASYMPTOTIC {
        (0.5 * libm::erfc(-x * FRAC_1_SQRT_2)).ln()
    } else if x == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        // Φ(x) = φ(x)/|x| · (1 − 1/x² + 3/x⁴ − 15/x⁶ + …)
        let inv = 1.0 / (x * x);
        let mut term = 1.0;
        let mut series = 1.0;
        for k in 1..=7 {
            term *= -((2 * k - 1) as f64) * inv;
            series += term;
        }
        -0.5 * x * x - 0.5 * (2.0 * PI).ln() - (-x).ln() + series.ln()
    };
    T::lit(value)
}

/// Inverse of Φ by bisection; `p` must lie strictly inside (0, 1).
pub fn normal_quantile<T: Real>(p: T) -> Result<T> {
    if !(p > T::zero() && p < T::one()) {
        return Err(invalid("p", p.as_f64(), "must lie in the open interval (0, 1)"));
    }
    let target = p.as_f64();
    let tol = Tolerance::<f64>::root().with_abs(1e-15);
    let z = find_root(
        |z: f64| normal_cdf(z) - target,
        Bracket::new(-40.0, 40.0)?,
        &tol,
    )?;
    Ok(T::lit(z))
}

fn check_ig<T: Real>(m: T, l: T) -> Result<()> {
    if !(m > T::zero()) || !m.is_finite() {
        return Err(invalid("m", m.as_f64(), "inverse Gaussian mean must be positive"));
    }
    if !(l > T::zero()) || !l.is_finite() {
        return Err(invalid("l", l.as_f64(), "inverse Gaussian shape must be positive"));
    }
    Ok(())
}

/// Density of the inverse Gaussian law IG(m, l) at `t`; zero for `t ≤ 0`.
pub fn ig_pdf<T: Real>(t: T, m: T, l: T) -> Result<T> {
    check_ig(m, l)?;
    if !(t > T::zero()) || t.is_infinite() {
        return Ok(T::zero());
    }
    let two = T::lit(2.0);
    let log_pref = T::lit(0.5) * (l / (two * T::PI())).ln() - T::lit(1.5) * t.ln();
    let dev = t - m;
    Ok((log_pref - l * dev * dev / (two * m * m * t)).exp())
}

/// Distribution function of IG(m, l).
///
/// F(t) = Φ(√(l/t)(t/m − 1)) + e^{2l/m} Φ(−√(l/t)(t/m + 1)); the second term is
/// formed in log space once 2l/m exceeds 700.
pub fn ig_cdf<T: Real>(t: T, m: T, l: T) -> Result<T> {
    check_ig(m, l)?;
    if !(t > T::zero()) {
        return Ok(T::zero());
    }
    if t.is_infinite() {
        return Ok(T::one());
    }
    let r = (l / t).sqrt();
    let upper = normal_cdf(r * (t / m - T::one()));
    let k = T::lit(2.0) * l / m;
    let z = -r * (t / m + T::one());
    let image = if k <= T::lit(700.0) {
        k.exp() * normal_cdf(z)
    } else {
        (k + log_normal_cdf(z)).exp()
    };
    Ok((upper + image).min(T::one()))
}

/// Quantile of IG(m, l) by bisection on [`ig_cdf`].
///
/// Stops once `|F(t) − p| ≤ tol.abs_tol`; fails after `tol.max_iter` halvings.
pub fn ig_quantile<T: Real>(p: T, m: T, l: T, tol: &Tolerance<T>) -> Result<T> {
    check_ig(m, l)?;
    if !(p > T::zero() && p < T::one()) {
        return Err(invalid("p", p.as_f64(), "must lie in the open interval (0, 1)"));
    }
    let mut lo = T::zero();
    let mut hi = m;
    let mut doublings = 0;
    while ig_cdf(hi, m, l)? < p {
        lo = hi;
        hi = hi + hi;
        doublings += 1;
        if doublings > 2000 || !hi.is_finite() {
            return Err(Error::BracketFailure { cap: hi.as_f64() });
        }
    }
    for _ in 0..tol.max_iter {
        let mid = lo + (hi - lo) / T::lit(2.0);
        let f = ig_cdf(mid, m, l)? - p;
        if f.abs() <= tol.abs_tol || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        if f < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence {
        routine: "ig_quantile",
        iterations: tol.max_iter,
    })
}
