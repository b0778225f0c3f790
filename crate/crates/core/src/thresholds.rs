//! Process parameters, the two threshold families and the fitting window.

use crate::error::{invalid, Error, Result};
use crate::numerics::{find_root, ig_quantile, normal_quantile, Bracket, Tolerance};
use crate::scalar::Real;

/// Drifted Brownian motion `dX = μ dt + σ dW`, `X(t0) = x0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WienerParams<T> {
    mu: T,
    sigma2: T,
    x0: T,
    t0: T,
}

impl<T: Real> WienerParams<T> {
    pub fn new(mu: T, sigma2: T, x0: T, t0: T) -> Result<Self> {
        if !(mu > T::zero()) || !mu.is_finite() {
            return Err(invalid("mu", mu.as_f64(), "drift must be positive"));
        }
        if !(sigma2 > T::zero()) || !sigma2.is_finite() {
            return Err(invalid("sigma2", sigma2.as_f64(), "diffusion must be positive"));
        }
        if !x0.is_finite() {
            return Err(invalid("x0", x0.as_f64(), "must be finite"));
        }
        if !t0.is_finite() {
            return Err(invalid("t0", t0.as_f64(), "must be finite"));
        }
        Ok(Self { mu, sigma2, x0, t0 })
    }

    /// Process started at level 0 at time 0.
    pub fn standard(mu: T, sigma2: T) -> Result<Self> {
        Self::new(mu, sigma2, T::zero(), T::zero())
    }

    pub fn mu(&self) -> T {
        self.mu
    }

    pub fn sigma2(&self) -> T {
        self.sigma2
    }

    pub fn sigma(&self) -> T {
        self.sigma2.sqrt()
    }

    pub fn x0(&self) -> T {
        self.x0
    }

    pub fn t0(&self) -> T {
        self.t0
    }

    /// Same start point with different `(μ, σ²)`.
    pub fn with_phi(&self, mu: T, sigma2: T) -> Result<Self> {
        Self::new(mu, sigma2, self.x0, self.t0)
    }
}

/// Exponentially decaying threshold `b(t) = b0 + ε·exp(−λ(t − t0))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvedThreshold<T> {
    b0: T,
    eps: T,
    lambda: T,
    t0: T,
}

impl<T: Real> CurvedThreshold<T> {
    /// `λ = 0` is accepted and describes the constant level `b0 + ε`.
    pub fn new(b0: T, eps: T, lambda: T, t0: T) -> Result<Self> {
        if !b0.is_finite() {
            return Err(invalid("b0", b0.as_f64(), "must be finite"));
        }
        if !(eps >= T::zero()) || !eps.is_finite() {
            return Err(invalid("eps", eps.as_f64(), "amplitude must be non-negative"));
        }
        if !(lambda >= T::zero()) || !lambda.is_finite() {
            return Err(invalid("lambda", lambda.as_f64(), "decay rate must be non-negative"));
        }
        if !t0.is_finite() {
            return Err(invalid("t0", t0.as_f64(), "must be finite"));
        }
        Ok(Self {
            b0,
            eps,
            lambda,
            t0,
        })
    }

    pub fn b0(&self) -> T {
        self.b0
    }

    pub fn eps(&self) -> T {
        self.eps
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn t0(&self) -> T {
        self.t0
    }

    /// Level at time `t`; errors before the start time.
    pub fn eval(&self, t: T) -> Result<T> {
        if t < self.t0 {
            return Err(Error::Domain {
                t: t.as_f64(),
                t0: self.t0.as_f64(),
            });
        }
        Ok(self.level(t))
    }

    /// Level without the domain check.
    #[inline]
    pub fn level(&self, t: T) -> T {
        self.b0 + self.eps * (-self.lambda * (t - self.t0)).exp()
    }

    /// Time derivative `−λε·exp(−λ(t − t0))`.
    #[inline]
    pub fn slope(&self, t: T) -> T {
        -self.lambda * self.eps * (-self.lambda * (t - self.t0)).exp()
    }

    /// Checks that the process starts strictly below the threshold and that
    /// both share the same start time.
    pub fn check_pairing(&self, w: &WienerParams<T>) -> Result<()> {
        if !(w.x0() < self.b0 + self.eps) {
            return Err(Error::AboveThreshold {
                t: self.t0.as_f64(),
                level: w.x0().as_f64(),
                threshold: (self.b0 + self.eps).as_f64(),
            });
        }
        if w.t0() != self.t0 {
            return Err(Error::Ordering("process and threshold must share the start time"));
        }
        Ok(())
    }

    /// Single straight line `b0 + ε − λε(t − t0)` obtained by linearizing the
    /// exponential; adequate only for small `λ`.
    pub fn small_lambda_line(&self) -> PiecewiseLinearThreshold<T> {
        let beta = -self.lambda * self.eps;
        PiecewiseLinearThreshold::linear(self.b0 + self.eps, beta, self.t0)
    }
}

/// Continuous two-piece linear threshold.
///
/// `α1 + β1(t − t0)` up to the knot `t1`, then `α2 + β2(t − t1)` with
/// `α2 = α1 + β1(t1 − t0)` always derived, never stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiecewiseLinearThreshold<T> {
    alpha1: T,
    beta1: T,
    beta2: T,
    t1: T,
    t0: T,
}

impl<T: Real> PiecewiseLinearThreshold<T> {
    pub fn new(alpha1: T, beta1: T, beta2: T, t1: T, t0: T) -> Result<Self> {
        for (name, v) in [("alpha1", alpha1), ("beta1", beta1), ("beta2", beta2), ("t1", t1), ("t0", t0)] {
            if !v.is_finite() {
                return Err(invalid(name, v.as_f64(), "must be finite"));
            }
        }
        if !(t1 > t0) {
            return Err(Error::Ordering("knot t1 must lie after the start time t0"));
        }
        Ok(Self {
            alpha1,
            beta1,
            beta2,
            t1,
            t0,
        })
    }

    /// A single line `α + β(t − t0)` written as two equal pieces with the knot at `t0 + 1`.
    pub fn linear(alpha: T, beta: T, t0: T) -> Self {
        Self {
            alpha1: alpha,
            beta1: beta,
            beta2: beta,
            t1: t0 + T::one(),
            t0,
        }
    }

    pub fn alpha1(&self) -> T {
        self.alpha1
    }

    pub fn alpha2(&self) -> T {
        self.alpha1 + self.beta1 * (self.t1 - self.t0)
    }

    pub fn beta1(&self) -> T {
        self.beta1
    }

    pub fn beta2(&self) -> T {
        self.beta2
    }

    pub fn t1(&self) -> T {
        self.t1
    }

    pub fn t0(&self) -> T {
        self.t0
    }

    pub fn eval(&self, t: T) -> Result<T> {
        if t < self.t0 {
            return Err(Error::Domain {
                t: t.as_f64(),
                t0: self.t0.as_f64(),
            });
        }
        Ok(self.level(t))
    }

    #[inline]
    pub fn level(&self, t: T) -> T {
        if t <= self.t1 {
            self.alpha1 + self.beta1 * (t - self.t0)
        } else {
            self.alpha2() + self.beta2 * (t - self.t1)
        }
    }

    /// Parameter vector `(α1, β1, β2, t1)`.
    pub fn theta(&self) -> [T; 4] {
        [self.alpha1, self.beta1, self.beta2, self.t1]
    }

    /// Rebuilds from `(α1, β1, β2, t1)`.
    pub fn from_theta(theta: &[T], t0: T) -> Result<Self> {
        match theta {
            [a1, b1, b2, t1] => Self::new(*a1, *b1, *b2, *t1, t0),
            _ => Err(Error::Degenerate("threshold parameter vector must have four entries")),
        }
    }
}

/// Interval `[τ0, τ*]` expected to carry at least 99% of the passage-time mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitWindow<T> {
    t0: T,
    tau0: T,
    tau_star: T,
}

impl<T: Real> FitWindow<T> {
    pub fn new(t0: T, tau0: T, tau_star: T) -> Result<Self> {
        if !(t0 < tau0 && tau0 < tau_star) || !tau_star.is_finite() {
            return Err(Error::Ordering("fit window requires t0 < tau0 < tau_star"));
        }
        Ok(Self { t0, tau0, tau_star })
    }

    pub fn t0(&self) -> T {
        self.t0
    }

    pub fn tau0(&self) -> T {
        self.tau0
    }

    pub fn tau_star(&self) -> T {
        self.tau_star
    }

    pub fn width(&self) -> T {
        self.tau_star - self.tau0
    }

    /// `n` equispaced points from `τ0` to `τ*` inclusive.
    pub fn grid(&self, n: usize) -> impl Iterator<Item = T> + '_ {
        let step = self.width() / T::lit((n.max(2) - 1) as f64);
        (0..n).map(move |i| {
            if i + 1 == n {
                self.tau_star
            } else {
                self.tau0 + step * T::lit(i as f64)
            }
        })
    }
}

/// Tail probabilities that delimit the fitting window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec<T> {
    /// `P(T_{b0} ≤ τ0)`.
    pub lower: T,
    /// `P(X(τ*) ≥ b(τ*))`.
    pub upper: T,
    /// Largest elapsed time searched for `τ*`.
    pub time_cap: T,
}

impl<T: Real> Default for WindowSpec<T> {
    fn default() -> Self {
        Self {
            lower: T::lit(0.005),
            upper: T::lit(0.995),
            time_cap: T::lit(1e6),
        }
    }
}

/// Fitting window with the default probabilities 0.005 / 0.995.
pub fn fit_window<T: Real>(w: &WienerParams<T>, th: &CurvedThreshold<T>) -> Result<FitWindow<T>> {
    fit_window_with(w, th, &WindowSpec::default())
}

/// `τ0` is the `lower` quantile of the passage time to the constant level `b0`
/// (which stochastically dominates `T_b` from below); `τ*` solves
/// `P(X(τ*) ≥ b(τ*)) = upper`, which bounds `T_b` from above.
pub fn fit_window_with<T: Real>(
    w: &WienerParams<T>,
    th: &CurvedThreshold<T>,
    spec: &WindowSpec<T>,
) -> Result<FitWindow<T>> {
    if !(th.b0() > w.x0()) {
        return Err(Error::AboveThreshold {
            t: w.t0().as_f64(),
            level: w.x0().as_f64(),
            threshold: th.b0().as_f64(),
        });
    }
    if !(spec.lower > T::zero() && spec.lower < spec.upper && spec.upper < T::one()) {
        return Err(invalid("window", spec.lower.as_f64(), "requires 0 < lower < upper < 1"));
    }
    let gap = th.b0() - w.x0();
    let s0 = ig_quantile(spec.lower, gap / w.mu(), gap * gap / w.sigma2(), &Tolerance::quantile())?;

    // Gaussian tail condition Φ((b − x0 − μs)/(σ√s)) = 1 − upper, cleared of the ratio
    let z = normal_quantile(T::one() - spec.upper)?;
    let sigma = w.sigma();
    let residual = |s: T| th.level(w.t0() + s) - w.x0() - w.mu() * s - z * sigma * s.sqrt();

    if !(residual(s0) > T::zero()) {
        return Err(Error::BracketFailure { cap: s0.as_f64() });
    }
    let mut lo = s0;
    let mut hi = s0 + s0;
    while residual(hi) > T::zero() {
        if hi >= spec.time_cap {
            return Err(Error::BracketFailure {
                cap: spec.time_cap.as_f64(),
            });
        }
        lo = hi;
        hi = (hi + hi).min(spec.time_cap);
    }
    let tol = Tolerance::root().with_abs(T::tol_floor().max(T::lit(1e-13)));
    let s_star = find_root(residual, Bracket::new(lo, hi)?, &tol)?;
    FitWindow::new(w.t0(), w.t0() + s0, w.t0() + s_star)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ig_cdf;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn curved(b0: f64, eps: f64, lambda: f64) -> CurvedThreshold<f64> {
        CurvedThreshold::new(b0, eps, lambda, 0.0).unwrap()
    }

    #[test]
    fn curved_values() {
        let th = curved(1.0, 5.0, 1.0);
        assert_eq!(th.eval(0.0).unwrap(), 6.0);
        assert_relative_eq!(th.eval(1.0).unwrap(), 2.839_397_205_857_211_6, max_relative = 1e-15);
        assert_relative_eq!(th.eval(1e4).unwrap(), 1.0);
        assert!(matches!(th.eval(-0.1), Err(Error::Domain { .. })));
        assert!(CurvedThreshold::new(1.0, -0.1, 1.0, 0.0).is_err());
        assert!(CurvedThreshold::new(1.0, 0.1, -1.0, 0.0).is_err());
    }

    #[test]
    fn piecewise_values() {
        let th = PiecewiseLinearThreshold::new(6.0, -4.0, -1.0, 1.0, 0.0).unwrap();
        assert_eq!(th.eval(0.0).unwrap(), 6.0);
        assert_eq!(th.eval(1.0).unwrap(), 2.0);
        assert_eq!(th.alpha2(), 2.0);
        assert_eq!(th.eval(2.0).unwrap(), 1.0);
        assert!(th.eval(-1.0).is_err());
        assert!(PiecewiseLinearThreshold::new(6.0, -4.0, -1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn small_lambda_line() {
        let line = curved(1.0, 1.0, 0.01).small_lambda_line();
        assert_eq!(line.alpha1(), 2.0);
        assert_eq!(line.beta1(), -0.01);
        assert_eq!(line.beta2(), -0.01);
        assert_relative_eq!(line.eval(10.0).unwrap(), 1.9, max_relative = 1e-15);
        let flat = curved(1.0, 1.0, 0.0).small_lambda_line();
        assert_eq!(flat.eval(123.0).unwrap(), 2.0);
    }

    #[test]
    fn window_for_constant_threshold() {
        let w = WienerParams::standard(1.0, 0.2).unwrap();
        let win = fit_window(&w, &curved(1.0, 0.0, 1.0)).unwrap();
        // bisection oracle on the IG(1, 5) distribution function
        assert_relative_eq!(win.tau0(), 0.315_388_053_462_421_5, max_relative = 1e-9);
        assert_relative_eq!(win.tau_star(), 2.992_849_599_797_414, max_relative = 1e-10);
        assert_abs_diff_eq!(ig_cdf(win.tau0(), 1.0, 5.0).unwrap(), 0.005, epsilon = 1e-8);
    }

    #[test]
    fn window_residual_vanishes() {
        let w = WienerParams::standard(1.0, 0.2).unwrap();
        let th = curved(1.0, 1.0, 1.0);
        let win = fit_window(&w, &th).unwrap();
        let z = -2.575_829_303_548_900_8;
        let s = win.tau_star();
        let residual = th.level(s) - s - z * (0.2 * s).sqrt();
        assert!(residual.abs() < 1e-8, "{residual}");
        assert!(win.tau0() < win.tau_star());
    }

    #[test]
    fn window_needs_start_below_b0() {
        let w = WienerParams::new(1.0, 0.2, 1.5, 0.0).unwrap();
        assert!(fit_window(&w, &curved(1.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn window_time_cap() {
        let w = WienerParams::standard(1e-4, 0.2).unwrap();
        let spec = WindowSpec {
            time_cap: 50.0,
            ..WindowSpec::default()
        };
        assert!(matches!(
            fit_window_with(&w, &curved(1.0, 1.0, 1.0), &spec),
            Err(Error::BracketFailure { .. })
        ));
    }

    #[test]
    fn window_shifts_with_start_time() {
        let w0 = WienerParams::new(1.0, 0.4, 0.0, 0.0).unwrap();
        let w5 = WienerParams::new(1.0, 0.4, 0.0, 5.0).unwrap();
        let a = fit_window(&w0, &CurvedThreshold::new(1.0, 2.0, 0.5, 0.0).unwrap()).unwrap();
        let b = fit_window(&w5, &CurvedThreshold::new(1.0, 2.0, 0.5, 5.0).unwrap()).unwrap();
        assert_abs_diff_eq!(a.tau0() + 5.0, b.tau0(), epsilon = 1e-9);
        assert_abs_diff_eq!(a.tau_star() + 5.0, b.tau_star(), epsilon = 1e-9);
    }

    proptest! {
        #[test]
        fn curved_is_convex(
            eps in 0.0_f64..10.0, lambda in 0.0_f64..10.0,
            ta in 0.0_f64..5.0, dt in 0.0_f64..5.0, theta in 0.0_f64..1.0,
        ) {
            let th = curved(1.0, eps, lambda);
            let tb = ta + dt;
            let mid = th.level(theta * ta + (1.0 - theta) * tb);
            let chord = theta * th.level(ta) + (1.0 - theta) * th.level(tb);
            prop_assert!(mid <= chord + 1e-12);
        }

        #[test]
        fn piecewise_is_continuous(a in -5.0_f64..5.0, b1 in -5.0_f64..5.0, b2 in -5.0_f64..5.0, t1 in 0.01_f64..10.0) {
            let th = PiecewiseLinearThreshold::new(a, b1, b2, t1, 0.0).unwrap();
            let left = th.alpha1() + th.beta1() * t1;
            prop_assert_eq!(th.level(t1), left);
            prop_assert_eq!(th.alpha2(), left);
        }

        #[test]
        fn window_lower_tail_probability(mu in 0.3_f64..3.0, s2 in 0.1_f64..2.0, eps in 0.0_f64..5.0, lambda in 0.05_f64..5.0) {
            let w = WienerParams::standard(mu, s2).unwrap();
            let win = fit_window(&w, &curved(1.0, eps, lambda)).unwrap();
            let p = ig_cdf(win.tau0(), 1.0 / mu, 1.0 / s2).unwrap();
            prop_assert!((p - 0.005).abs() < 1e-8);
            prop_assert!(win.tau0() < win.tau_star());
        }
    }
}
