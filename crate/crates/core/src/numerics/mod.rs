//! Special functions, quadrature, root finding and simplex minimization.
//!
//! Everything here is a pure function of its arguments.

mod quadrature;
mod roots;
mod simplex;
mod special;

pub use quadrature::{integrate, integrate_with_breaks, Quadrature};
pub use roots::find_root;
pub use simplex::{minimize, Minimum, NelderMead, PENALTY};
pub use special::{
    ig_cdf, ig_pdf, ig_quantile, log_normal_cdf, normal_cdf, normal_pdf, normal_quantile,
};

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Stopping rule shared by the iterative routines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance<T> {
    pub abs_tol: T,
    pub rel_tol: T,
    pub max_iter: usize,
}

impl<T: Real> Tolerance<T> {
    pub fn new(abs_tol: T, rel_tol: T, max_iter: usize) -> Result<Self> {
        if !(abs_tol > T::zero()) {
            return Err(invalid("abs_tol", abs_tol.as_f64(), "must be positive"));
        }
        if !(rel_tol > T::zero()) {
            return Err(invalid("rel_tol", rel_tol.as_f64(), "must be positive"));
        }
        if max_iter == 0 {
            return Err(invalid("max_iter", 0.0, "must be at least 1"));
        }
        Ok(Self {
            abs_tol,
            rel_tol,
            max_iter,
        })
    }

    /// Clamps a requested tolerance to what the scalar type can resolve.
    fn clamped(abs_tol: f64, rel_tol: f64, max_iter: usize) -> Self {
        Self {
            abs_tol: T::lit(abs_tol).max(T::tol_floor()),
            rel_tol: T::lit(rel_tol).max(T::tol_floor()),
            max_iter,
        }
    }

    /// Adaptive quadrature defaults: absolute 1e-9, relative 1e-7, 2000 subdivisions.
    pub fn quadrature() -> Self {
        Self::clamped(1e-9, 1e-7, 2000)
    }

    /// Bisection defaults: 1e-10 on the bracket half-width.
    pub fn root() -> Self {
        Self::clamped(1e-10, 1e-12, 500)
    }

    /// Quantile inversion defaults: 1e-12 on the probability residual.
    pub fn quantile() -> Self {
        Self::clamped(1e-12, 1e-12, 500)
    }

    /// Simplex defaults: stop once the simplex diameter drops below 1e-8.
    pub fn simplex() -> Self {
        Self::clamped(1e-8, 1e-10, 20_000)
    }

    pub fn with_abs(mut self, abs_tol: T) -> Self {
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_rel(mut self, rel_tol: T) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter.max(1);
        self
    }
}

/// Interval `[lo, hi]` known to contain a sign change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket<T> {
    lo: T,
    hi: T,
}

impl<T: Real> Bracket<T> {
    pub fn new(lo: T, hi: T) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Ordering("bracket requires finite lo < hi"));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> T {
        self.lo
    }

    pub fn hi(&self) -> T {
        self.hi
    }
}
